#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "cci/detect.hpp"

namespace cci::data {

/// Every line "class cx cy w h": integer class in [0, num_classes), the
/// rest in [0, 1] with w, h > 0. Blank lines are ignored.
std::vector<BoundingBox> parse_labels(const std::string& text, int num_classes,
                                      const std::string& source = "<labels>");
std::vector<BoundingBox> read_labels(const std::filesystem::path& path, int num_classes);
void write_labels(const std::filesystem::path& path, const std::vector<BoundingBox>& boxes);

enum class Split { all, train, val };

struct Sample {
  std::string stem;
  std::filesystem::path image;
  std::filesystem::path labels;  // empty when the image has no label file
};

struct DatasetIndex {
  std::vector<Sample> samples;  // sorted by stem
  std::vector<std::string> class_names;
  Split split = Split::all;
};

/// Deterministic 9:1 split on a 64-bit FNV-1a hash of the file stem.
bool in_validation(const std::string& stem);

/// Scans DIR/images for .ppm and .fkt files and pairs each with
/// DIR/labels/<stem>.txt. An image without a label file has no objects.
DatasetIndex index_dataset(const std::filesystem::path& root, std::vector<std::string> class_names,
                           Split split = Split::all);

}  // namespace cci::data
