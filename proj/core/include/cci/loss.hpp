#pragma once

#include <span>
#include <vector>

#include "cci/detect.hpp"
#include "cci/network.hpp"

/// Simplified detection objective and a plain gradient-descent step.
namespace cci::train {

struct LossWeights {
  float objectness = 1.0f;
  float classification = 1.0f;
  float box = 1.0f;
};

struct LossResult {
  double total = 0.0;
  double objectness = 0.0;
  double classification = 0.0;
  double box = 0.0;
  int positives = 0;
  std::vector<Tensor> grads;  // d total / d head output, one per head
};

/// One positive cell per ground-truth box.
struct Assignment {
  int head = 0;
  int row = 0;
  int col = 0;
  int class_id = 0;
  float target[4] = {};  // center offset in the cell, size in stride units
};

/// Picks the head whose stride best matches the box size
/// (minimizes |log2(max side in pixels / (4 * stride))|) and the cell
/// containing the box center. A cell already claimed by an earlier box is
/// not reassigned.
std::vector<Assignment> assign_targets(std::span<const BoundingBox> truth,
                                       std::span<const Shape> head_shapes,
                                       std::span<const int> strides, int input_size);

/// Objectness BCE over every cell, class BCE and smooth-L1 box loss at
/// assigned cells. Box terms compare (sigmoid(tx), sigmoid(ty), softplus(tw),
/// softplus(th)) with the cell offset and the size in stride units. Each
/// term is summed over cells, classes and batch images.
LossResult detection_loss(std::span<const Tensor> heads, std::span<const int> strides,
                          int input_size, std::span<const std::vector<BoundingBox>> truth,
                          const LossWeights& weights = {});

/// Zeroes gradients, runs a train-mode forward and backward, applies
/// value -= lr * grad and returns the loss before the update.
LossResult train_step(net::Graph& graph, const Tensor& images,
                      std::span<const std::vector<BoundingBox>> truth, float learning_rate,
                      const LossWeights& weights = {});

}  // namespace cci::train
