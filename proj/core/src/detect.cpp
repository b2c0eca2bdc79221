#include "cci/detect.hpp"

#include <algorithm>
#include <cmath>

#include "cci/error.hpp"

namespace cci {

double iou(const BoundingBox& a, const BoundingBox& b) {
  const double ax0 = a.cx - a.w / 2.0, ax1 = a.cx + a.w / 2.0;
  const double ay0 = a.cy - a.h / 2.0, ay1 = a.cy + a.h / 2.0;
  const double bx0 = b.cx - b.w / 2.0, bx1 = b.cx + b.w / 2.0;
  const double by0 = b.cy - b.h / 2.0, by1 = b.cy + b.h / 2.0;
  const double iw = std::min(ax1, bx1) - std::max(ax0, bx0);
  const double ih = std::min(ay1, by1) - std::max(ay0, by0);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

BoundingBox clamp_unit(const BoundingBox& b) {
  const float x0 = std::clamp(b.cx - b.w / 2.0f, 0.0f, 1.0f);
  const float x1 = std::clamp(b.cx + b.w / 2.0f, 0.0f, 1.0f);
  const float y0 = std::clamp(b.cy - b.h / 2.0f, 0.0f, 1.0f);
  const float y1 = std::clamp(b.cy + b.h / 2.0f, 0.0f, 1.0f);
  BoundingBox r = b;
  r.cx = (x0 + x1) / 2.0f;
  r.cy = (y0 + y1) / 2.0f;
  r.w = x1 - x0;
  r.h = y1 - y0;
  return r;
}

void sort_by_confidence(std::vector<BoundingBox>& boxes) {
  std::stable_sort(boxes.begin(), boxes.end(), [](const BoundingBox& a, const BoundingBox& b) {
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    return a.class_id < b.class_id;
  });
}

namespace detect {

namespace {

float sigmoid(float x) { return 1.0f / (1.0f + std::exp(-x)); }
float softplus(float x) { return x > 20.0f ? x : std::log1p(std::exp(x)); }

}  // namespace

std::vector<BoundingBox> decode(std::span<const Tensor> heads, std::span<const int> strides,
                                int input_size, float conf_threshold, int sample) {
  if (heads.size() != strides.size()) throw ConfigError("decode: heads and strides differ in count");
  if (input_size < 1) throw ConfigError("decode: input_size must be >= 1");
  std::vector<BoundingBox> out;
  for (std::size_t k = 0; k < heads.size(); ++k) {
    const Tensor& t = heads[k];
    const int stride = strides[k];
    const int classes = t.c() - kFirstClass;
    if (classes < 1) throw ConfigError("decode: head has too few channels " + t.shape().str());
    if (sample < 0 || sample >= t.n()) throw ConfigError("decode: sample index out of range");
    const float scale = static_cast<float>(stride) / static_cast<float>(input_size);
    for (int i = 0; i < t.h(); ++i) {
      for (int j = 0; j < t.w(); ++j) {
        int best = 0;
        float best_p = -1.0f;
        for (int c = 0; c < classes; ++c) {
          const float p = sigmoid(t.at(sample, kFirstClass + c, i, j));
          if (p > best_p) {
            best_p = p;
            best = c;
          }
        }
        const float conf = sigmoid(t.at(sample, kObjectness, i, j)) * best_p;
        if (!(conf >= conf_threshold)) continue;
        BoundingBox b;
        b.class_id = best;
        b.confidence = conf;
        b.cx = (static_cast<float>(j) + sigmoid(t.at(sample, kBoxX, i, j))) * scale;
        b.cy = (static_cast<float>(i) + sigmoid(t.at(sample, kBoxY, i, j))) * scale;
        b.w = softplus(t.at(sample, kBoxW, i, j)) * scale;
        b.h = softplus(t.at(sample, kBoxH, i, j)) * scale;
        out.push_back(clamp_unit(b));
      }
    }
  }
  return out;
}

std::vector<BoundingBox> nms(std::vector<BoundingBox> boxes, float iou_threshold) {
  sort_by_confidence(boxes);
  std::vector<BoundingBox> kept;
  for (const BoundingBox& b : boxes) {
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const BoundingBox& k) {
      return k.class_id == b.class_id && iou(k, b) > iou_threshold;
    });
    if (!suppressed) kept.push_back(b);
  }
  return kept;
}

}  // namespace detect
}  // namespace cci
