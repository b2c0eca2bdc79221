#include "cci/weights_io.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include "cci/error.hpp"
#include "cci/fkt.hpp"

namespace cci::weights {

namespace {

constexpr const char* kHeader = "CCIW1";

}  // namespace

void save(const ParamStore& store, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << kHeader << '\n' << store.size() << '\n';
  for (const auto& [name, entry] : store.entries()) {
    const Shape& s = entry.value->shape();
    out << name << ' ' << s.n << ' ' << s.c << ' ' << s.h << ' ' << s.w << '\n';
  }
  out << "END\n";
  for (const auto& [name, entry] : store.entries()) fkt::write(out, *entry.value);
  if (!out) throw IoError("write failed for " + path.string());
}

void load(ParamStore& store, const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::string where = path.string() + ": ";
  std::string line;
  if (!std::getline(in, line) || line != kHeader) throw ParseError(where + "missing CCIW1 header");
  std::size_t count = 0;
  if (!std::getline(in, line) || !(std::istringstream(line) >> count)) {
    throw ParseError(where + "missing entry count");
  }
  std::vector<std::pair<std::string, Shape>> manifest;
  std::map<std::string, bool> seen;
  for (std::size_t i = 0; i < count; ++i) {
    if (!std::getline(in, line)) throw ParseError(where + "manifest truncated");
    std::istringstream ls(line);
    std::string name;
    Shape s;
    if (!(ls >> name >> s.n >> s.c >> s.h >> s.w)) {
      throw ParseError(where + "bad manifest line '" + line + "'");
    }
    if (!store.contains(name)) throw ParseError(where + "unknown parameter " + name);
    if (seen[name]) throw ParseError(where + "duplicate parameter " + name);
    seen[name] = true;
    const Shape& want = store.at(name).value->shape();
    if (s != want) {
      throw ParseError(where + "parameter " + name + " has shape " + s.str() + ", expected " +
                       want.str());
    }
    manifest.emplace_back(name, s);
  }
  if (!std::getline(in, line) || line != "END") throw ParseError(where + "missing END marker");
  for (const auto& [name, entry] : store.entries()) {
    if (!seen[name]) throw ParseError(where + "missing parameter " + name);
  }
  std::vector<Tensor> values;
  values.reserve(manifest.size());
  for (const auto& [name, shape] : manifest) {
    const auto offset = static_cast<std::size_t>(in.tellg());
    Tensor t;
    try {
      t = fkt::read(in, offset);
    } catch (const ParseError& e) {
      throw ParseError(where + "parameter " + name + ": " + e.what());
    }
    if (t.shape() != shape) {
      throw ParseError(where + "parameter " + name + " payload shape " + t.shape().str() +
                       " differs from manifest " + shape.str());
    }
    values.push_back(std::move(t));
  }
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    *store.at(manifest[i].first).value = std::move(values[i]);
  }
}

}  // namespace cci::weights
