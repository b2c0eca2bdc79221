#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "cci/detect.hpp"
#include "cci/tensor.hpp"

/// Toy detection data: dark noisy canvases with one or two non-overlapping
/// solid rectangles, gray for class 0 ("smoke") and orange for class 1 ("fire").
namespace cci::synth {

struct ToySample {
  Tensor image;  // 1 x 3 x size x size
  std::vector<BoundingBox> boxes;
};

ToySample make_toy_sample(Rng& rng, int size);
std::vector<ToySample> make_toy_set(int count, int size, std::uint64_t seed);

/// Writes DIR/images/toy_NNN.ppm and DIR/labels/toy_NNN.txt.
void write_dataset(const std::filesystem::path& root, const std::vector<ToySample>& samples);

}  // namespace cci::synth
