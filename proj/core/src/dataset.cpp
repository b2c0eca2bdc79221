#include "cci/dataset.hpp"

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "cci/error.hpp"

namespace cci::data {

std::vector<BoundingBox> parse_labels(const std::string& text, int num_classes,
                                      const std::string& source) {
  std::vector<BoundingBox> out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = source + ":" + std::to_string(lineno) + ": ";
    std::istringstream ls(line);
    double cls = 0.0;
    BoundingBox b;
    if (!(ls >> cls >> b.cx >> b.cy >> b.w >> b.h)) throw ParseError(where + "expected 'class cx cy w h'");
    std::string extra;
    if (ls >> extra) throw ParseError(where + "trailing field '" + extra + "'");
    if (cls != static_cast<int>(cls) || cls < 0 || cls >= num_classes) {
      throw ParseError(where + "class must be an integer in [0, " + std::to_string(num_classes) + ")");
    }
    for (float v : {b.cx, b.cy, b.w, b.h}) {
      if (!(v >= 0.0f && v <= 1.0f)) throw ParseError(where + "coordinates must lie in [0, 1]");
    }
    if (!(b.w > 0.0f && b.h > 0.0f)) throw ParseError(where + "box size must be positive");
    b.class_id = static_cast<int>(cls);
    b.confidence = 1.0f;
    out.push_back(b);
  }
  return out;
}

std::vector<BoundingBox> read_labels(const std::filesystem::path& path, int num_classes) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_labels(ss.str(), num_classes, path.string());
}

void write_labels(const std::filesystem::path& path, const std::vector<BoundingBox>& boxes) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << std::fixed << std::setprecision(6);
  for (const BoundingBox& b : boxes) {
    out << b.class_id << ' ' << b.cx << ' ' << b.cy << ' ' << b.w << ' ' << b.h << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

bool in_validation(const std::string& stem) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : stem) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h % 10 == 0;
}

DatasetIndex index_dataset(const std::filesystem::path& root, std::vector<std::string> class_names,
                           Split split) {
  const std::filesystem::path images = root / "images";
  const std::filesystem::path labels = root / "labels";
  if (!std::filesystem::is_directory(images)) {
    throw IoError("dataset: " + images.string() + " is not a directory");
  }
  DatasetIndex index;
  index.class_names = std::move(class_names);
  index.split = split;
  for (const auto& entry : std::filesystem::directory_iterator(images)) {
    if (!entry.is_regular_file()) continue;
    const std::string ext = entry.path().extension().string();
    if (ext != ".ppm" && ext != ".fkt") continue;
    Sample s;
    s.stem = entry.path().stem().string();
    if (split != Split::all && in_validation(s.stem) != (split == Split::val)) continue;
    s.image = entry.path();
    const std::filesystem::path label = labels / (s.stem + ".txt");
    if (std::filesystem::is_regular_file(label)) s.labels = label;
    index.samples.push_back(std::move(s));
  }
  std::sort(index.samples.begin(), index.samples.end(),
            [](const Sample& a, const Sample& b) { return a.stem < b.stem; });
  for (std::size_t i = 1; i < index.samples.size(); ++i) {
    if (index.samples[i].stem == index.samples[i - 1].stem) {
      throw ConfigError("dataset: two images share the stem " + index.samples[i].stem);
    }
  }
  return index;
}

}  // namespace cci::data
