#pragma once

#include <filesystem>
#include <iosfwd>

#include "cci/tensor.hpp"

namespace cci::fkt {

/// FKT1 layout: "FKT1", four little-endian u32 dims (n, c, h, w), then
/// n*c*h*w little-endian IEEE-754 binary32 values in NCHW order.
inline constexpr char kMagic[4] = {'F', 'K', 'T', '1'};
inline constexpr std::size_t kHeaderBytes = 20;

void write(std::ostream& out, const Tensor& t);
/// Reads one FKT1 record. `base_offset` is added to byte offsets in error messages.
Tensor read(std::istream& in, std::size_t base_offset = 0);

void save(const std::filesystem::path& path, const Tensor& t);
Tensor load(const std::filesystem::path& path);

/// True when the first four bytes of the file are the FKT1 magic.
bool has_magic(const std::filesystem::path& path);

}  // namespace cci::fkt
