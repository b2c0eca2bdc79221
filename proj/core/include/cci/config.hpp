#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "cci/loss.hpp"
#include "cci/network.hpp"

namespace cci {

/// Everything a harness run reads from a config file.
struct HarnessConfig {
  net::NetworkConfig network;
  train::LossWeights loss;
  std::vector<std::string> class_names{"smoke", "fire"};
};

/// Parses "key = value" lines ('#' starts a comment, blank lines ignored)
/// on top of the defaults. Unknown keys, repeated keys and malformed values
/// throw ParseError naming the line.
HarnessConfig parse_config(std::string_view text, std::string_view source = "<config>");
HarnessConfig load_config(const std::filesystem::path& path);

/// Canonical "key = value" text for every recognised key.
std::string format_config(const HarnessConfig& cfg);

}  // namespace cci
