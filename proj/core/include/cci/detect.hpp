#pragma once

#include <span>
#include <vector>

#include "cci/tensor.hpp"

namespace cci {

/// Axis-aligned box in image-normalized coordinates. Ground truth carries
/// confidence 1.
struct BoundingBox {
  int class_id = 0;
  float cx = 0.0f;
  float cy = 0.0f;
  float w = 0.0f;
  float h = 0.0f;
  float confidence = 1.0f;
};

/// Intersection over union of two boxes; 0 when disjoint or degenerate.
double iou(const BoundingBox& a, const BoundingBox& b);

/// Clamps the box corners to the unit square.
BoundingBox clamp_unit(const BoundingBox& b);

/// Stable ordering by confidence descending, then lower class id; equal keys
/// keep their input order.
void sort_by_confidence(std::vector<BoundingBox>& boxes);

namespace detect {

/// Channel layout of one head output cell.
inline constexpr int kBoxX = 0;
inline constexpr int kBoxY = 1;
inline constexpr int kBoxW = 2;
inline constexpr int kBoxH = 3;
inline constexpr int kObjectness = 4;
inline constexpr int kFirstClass = 5;

/// Boxes for sample `sample` of the head outputs. Confidence is
/// sigmoid(objectness) * max class sigmoid; centers are
/// (cell + sigmoid(t)) * stride / S and sizes softplus(t) * stride / S,
/// clamped to the unit square. Cells below `conf_threshold` are dropped.
std::vector<BoundingBox> decode(std::span<const Tensor> heads, std::span<const int> strides,
                                int input_size, float conf_threshold, int sample = 0);

/// Greedy per-class suppression: boxes are visited in sort_by_confidence
/// order and a box is dropped when its IoU with a kept box of the same class
/// exceeds `iou_threshold`.
std::vector<BoundingBox> nms(std::vector<BoundingBox> boxes, float iou_threshold);

}  // namespace detect
}  // namespace cci
