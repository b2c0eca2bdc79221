#include "cci/synthetic.hpp"

#include <algorithm>
#include <cstdio>

#include "cci/dataset.hpp"
#include "cci/error.hpp"
#include "cci/image.hpp"

namespace cci::synth {

namespace {

struct Rect {
  int x0, y0, w, h;
  [[nodiscard]] bool overlaps(const Rect& o, int gap) const {
    return x0 < o.x0 + o.w + gap && o.x0 < x0 + w + gap && y0 < o.y0 + o.h + gap &&
           o.y0 < y0 + h + gap;
  }
};

}  // namespace

ToySample make_toy_sample(Rng& rng, int size) {
  if (size < 32) throw ConfigError("make_toy_sample: size must be >= 32");
  std::uniform_real_distribution<float> unit(0.0f, 1.0f);
  const auto uniform = [&](float lo, float hi) { return lo + (hi - lo) * unit(rng); };
  const auto randint = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };

  ToySample s;
  s.image = Tensor({1, 3, size, size});
  const float base = uniform(0.05f, 0.25f);
  for (int c = 0; c < 3; ++c) {
    float* p = s.image.plane(0, c);
    for (std::size_t i = 0; i < s.image.shape().plane(); ++i) p[i] = base + uniform(-0.04f, 0.04f);
  }

  const int objects = randint(1, 2);
  const int lo = std::max(8, size * 3 / 20);
  const int hi = std::max(lo, size * 2 / 5);
  std::vector<Rect> placed;
  for (int k = 0; k < objects; ++k) {
    for (int attempt = 0; attempt < 100; ++attempt) {
      Rect r{0, 0, randint(lo, hi), randint(lo, hi)};
      r.x0 = randint(0, size - r.w);
      r.y0 = randint(0, size - r.h);
      if (std::any_of(placed.begin(), placed.end(), [&](const Rect& o) { return r.overlaps(o, 4); })) {
        continue;
      }
      placed.push_back(r);
      const int cls = randint(0, 1);
      float color[3];
      if (cls == 0) {
        const float g = uniform(0.6f, 0.8f);
        color[0] = g;
        color[1] = g;
        color[2] = g + uniform(-0.03f, 0.03f);
      } else {
        color[0] = uniform(0.9f, 1.0f);
        color[1] = uniform(0.3f, 0.55f);
        color[2] = uniform(0.0f, 0.12f);
      }
      for (int c = 0; c < 3; ++c) {
        for (int y = r.y0; y < r.y0 + r.h; ++y) {
          for (int x = r.x0; x < r.x0 + r.w; ++x) s.image.at(0, c, y, x) = color[c];
        }
      }
      BoundingBox b;
      b.class_id = cls;
      b.cx = (r.x0 + r.w / 2.0f) / static_cast<float>(size);
      b.cy = (r.y0 + r.h / 2.0f) / static_cast<float>(size);
      b.w = static_cast<float>(r.w) / static_cast<float>(size);
      b.h = static_cast<float>(r.h) / static_cast<float>(size);
      s.boxes.push_back(b);
      break;
    }
  }
  return s;
}

std::vector<ToySample> make_toy_set(int count, int size, std::uint64_t seed) {
  if (count < 1) throw ConfigError("make_toy_set: count must be >= 1");
  Rng rng(seed);
  std::vector<ToySample> out;
  for (int i = 0; i < count; ++i) out.push_back(make_toy_sample(rng, size));
  return out;
}

void write_dataset(const std::filesystem::path& root, const std::vector<ToySample>& samples) {
  std::filesystem::create_directories(root / "images");
  std::filesystem::create_directories(root / "labels");
  for (std::size_t i = 0; i < samples.size(); ++i) {
    char stem[32];
    std::snprintf(stem, sizeof stem, "toy_%03zu", i);
    image::save_p6(root / "images" / (std::string(stem) + ".ppm"), samples[i].image);
    data::write_labels(root / "labels" / (std::string(stem) + ".txt"), samples[i].boxes);
  }
}

}  // namespace cci::synth
