#include "cci/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "cci/error.hpp"

namespace cci {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

int to_int(const std::string& v) {
  int out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw std::invalid_argument("expected an integer");
  return out;
}

double to_double(const std::string& v) {
  std::size_t used = 0;
  const double out = std::stod(v, &used);
  if (used != v.size()) throw std::invalid_argument("expected a number");
  return out;
}

bool to_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw std::invalid_argument("expected a boolean");
}

std::vector<std::string> to_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) throw std::invalid_argument("empty list item");
    out.push_back(item);
  }
  if (out.empty()) throw std::invalid_argument("empty list");
  return out;
}

using Setter = std::function<void(HarnessConfig&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"width_multiple", [](HarnessConfig& c, const std::string& v) { c.network.width_multiple = to_double(v); }},
      {"depth_multiple", [](HarnessConfig& c, const std::string& v) { c.network.depth_multiple = to_double(v); }},
      {"num_classes", [](HarnessConfig& c, const std::string& v) { c.network.num_classes = to_int(v); }},
      {"input_size", [](HarnessConfig& c, const std::string& v) { c.network.input_size = to_int(v); }},
      {"max_channels", [](HarnessConfig& c, const std::string& v) { c.network.max_channels = to_int(v); }},
      {"use_carafe", [](HarnessConfig& c, const std::string& v) { c.network.use_carafe = to_bool(v); }},
      {"use_cgd", [](HarnessConfig& c, const std::string& v) { c.network.use_cgd = to_bool(v); }},
      {"use_irmb", [](HarnessConfig& c, const std::string& v) { c.network.use_irmb = to_bool(v); }},
      {"cgd_stages",
       [](HarnessConfig& c, const std::string& v) {
         const auto items = to_list(v);
         if (items.size() != 4) throw std::invalid_argument("expected four flags");
         for (std::size_t i = 0; i < 4; ++i) c.network.cgd_stages[i] = to_bool(items[i]);
       }},
      {"carafe.k_up", [](HarnessConfig& c, const std::string& v) { c.network.carafe.k_up = to_int(v); }},
      {"carafe.k_encoder", [](HarnessConfig& c, const std::string& v) { c.network.carafe.k_encoder = to_int(v); }},
      {"carafe.c_mid", [](HarnessConfig& c, const std::string& v) { c.network.carafe.c_mid = to_int(v); }},
      {"cgd.dilation", [](HarnessConfig& c, const std::string& v) { c.network.cgd.dilation = to_int(v); }},
      {"cgd.reduction", [](HarnessConfig& c, const std::string& v) { c.network.cgd.reduction = to_int(v); }},
      {"cgd.reduce_kernel", [](HarnessConfig& c, const std::string& v) { c.network.cgd.reduce_kernel = to_int(v); }},
      {"cgd.depthwise_branches", [](HarnessConfig& c, const std::string& v) { c.network.cgd.depthwise_branches = to_bool(v); }},
      {"irmb.expand_ratio", [](HarnessConfig& c, const std::string& v) { c.network.irmb.expand_ratio = to_int(v); }},
      {"irmb.heads", [](HarnessConfig& c, const std::string& v) { c.network.irmb.heads = to_int(v); }},
      {"irmb.window", [](HarnessConfig& c, const std::string& v) { c.network.irmb.window = to_int(v); }},
      {"objectness_prior", [](HarnessConfig& c, const std::string& v) { c.network.objectness_prior = static_cast<float>(to_double(v)); }},
      {"loss.objectness", [](HarnessConfig& c, const std::string& v) { c.loss.objectness = static_cast<float>(to_double(v)); }},
      {"loss.classification", [](HarnessConfig& c, const std::string& v) { c.loss.classification = static_cast<float>(to_double(v)); }},
      {"loss.box", [](HarnessConfig& c, const std::string& v) { c.loss.box = static_cast<float>(to_double(v)); }},
      {"class_names", [](HarnessConfig& c, const std::string& v) { c.class_names = to_list(v); }},
  };
  return table;
}

}  // namespace

HarnessConfig parse_config(std::string_view text, std::string_view source) {
  HarnessConfig cfg;
  std::set<std::string> seen;
  std::istringstream in{std::string(text)};
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const std::string where = std::string(source) + ":" + std::to_string(lineno) + ": ";
    const std::string line = trim(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(where + "expected 'key = value'");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end()) throw ParseError(where + "unknown key '" + key + "'");
    if (!seen.insert(key).second) throw ParseError(where + "repeated key '" + key + "'");
    if (value.empty()) throw ParseError(where + "missing value for '" + key + "'");
    try {
      it->second(cfg, value);
    } catch (const std::exception& e) {
      throw ParseError(where + "bad value '" + value + "' for '" + key + "': " + e.what());
    }
  }
  try {
    cfg.network.validate();
  } catch (const ConfigError& e) {
    throw ParseError(std::string(source) + ": " + e.what());
  }
  if (static_cast<int>(cfg.class_names.size()) != cfg.network.num_classes) {
    if (seen.count("class_names") != 0) {
      throw ParseError(std::string(source) + ": class_names has " +
                       std::to_string(cfg.class_names.size()) + " entries for num_classes " +
                       std::to_string(cfg.network.num_classes));
    }
    cfg.class_names.clear();
    for (int i = 0; i < cfg.network.num_classes; ++i) cfg.class_names.push_back("class" + std::to_string(i));
  }
  return cfg;
}

HarnessConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

std::string format_config(const HarnessConfig& c) {
  const net::NetworkConfig& n = c.network;
  std::ostringstream os;
  const auto b = [](bool v) { return v ? "true" : "false"; };
  os << "width_multiple = " << n.width_multiple << '\n'
     << "depth_multiple = " << n.depth_multiple << '\n'
     << "num_classes = " << n.num_classes << '\n'
     << "input_size = " << n.input_size << '\n'
     << "max_channels = " << n.max_channels << '\n'
     << "use_carafe = " << b(n.use_carafe) << '\n'
     << "use_cgd = " << b(n.use_cgd) << '\n'
     << "use_irmb = " << b(n.use_irmb) << '\n'
     << "cgd_stages = " << b(n.cgd_stages[0]) << ", " << b(n.cgd_stages[1]) << ", "
     << b(n.cgd_stages[2]) << ", " << b(n.cgd_stages[3]) << '\n'
     << "carafe.k_up = " << n.carafe.k_up << '\n'
     << "carafe.k_encoder = " << n.carafe.k_encoder << '\n'
     << "carafe.c_mid = " << n.carafe.c_mid << '\n'
     << "cgd.dilation = " << n.cgd.dilation << '\n'
     << "cgd.reduction = " << n.cgd.reduction << '\n'
     << "cgd.reduce_kernel = " << n.cgd.reduce_kernel << '\n'
     << "cgd.depthwise_branches = " << b(n.cgd.depthwise_branches) << '\n'
     << "irmb.expand_ratio = " << n.irmb.expand_ratio << '\n'
     << "irmb.heads = " << n.irmb.heads << '\n'
     << "irmb.window = " << n.irmb.window << '\n'
     << "objectness_prior = " << n.objectness_prior << '\n'
     << "loss.objectness = " << c.loss.objectness << '\n'
     << "loss.classification = " << c.loss.classification << '\n'
     << "loss.box = " << c.loss.box << '\n'
     << "class_names = ";
  for (std::size_t i = 0; i < c.class_names.size(); ++i) os << (i ? ", " : "") << c.class_names[i];
  os << '\n';
  return os.str();
}

}  // namespace cci
