#pragma once

#include <filesystem>

#include "cci/param_store.hpp"

/// Weight files: a text manifest ("CCIW1", entry count, one
/// "name n c h w" line per tensor, "END") followed by one FKT1 record per
/// manifest line, in manifest order. Every store entry (including
/// batch-norm running statistics) appears exactly once.
namespace cci::weights {

void save(const ParamStore& store, const std::filesystem::path& path);

/// Loads into an existing store. Throws ParseError naming the offending
/// parameter on a missing, unknown, duplicate or mis-shaped entry; the
/// store is left untouched unless every entry loads.
void load(ParamStore& store, const std::filesystem::path& path);

}  // namespace cci::weights
