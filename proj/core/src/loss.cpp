#include "cci/loss.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cci/error.hpp"

namespace cci::train {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

// BCE with logits, numerically stable: max(z, 0) - z*y + log(1 + exp(-|z|)).
double bce(double z, double y) { return std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z))); }

double smooth_l1(double d) { return std::abs(d) < 1.0 ? 0.5 * d * d : std::abs(d) - 0.5; }
double smooth_l1_grad(double d) { return std::abs(d) < 1.0 ? d : (d > 0.0 ? 1.0 : -1.0); }

}  // namespace

std::vector<Assignment> assign_targets(std::span<const BoundingBox> truth,
                                       std::span<const Shape> head_shapes,
                                       std::span<const int> strides, int input_size) {
  if (head_shapes.size() != strides.size() || strides.empty()) {
    throw ConfigError("assign_targets: heads and strides differ in count");
  }
  std::vector<Assignment> out;
  for (const BoundingBox& b : truth) {
    if (!(b.w > 0.0f && b.h > 0.0f)) throw ConfigError("assign_targets: box with non-positive size");
    const double side = std::max(b.w, b.h) * static_cast<double>(input_size);
    int best = 0;
    double best_cost = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < strides.size(); ++k) {
      const double cost = std::abs(std::log2(side / (4.0 * strides[k])));
      if (cost < best_cost) {
        best_cost = cost;
        best = static_cast<int>(k);
      }
    }
    const auto bk = static_cast<std::size_t>(best);
    const Shape& s = head_shapes[bk];
    const double stride = strides[bk];
    const double gx = b.cx * input_size / stride;
    const double gy = b.cy * input_size / stride;
    const int col = std::clamp(static_cast<int>(std::floor(gx)), 0, s.w - 1);
    const int row = std::clamp(static_cast<int>(std::floor(gy)), 0, s.h - 1);
    bool claimed = false;
    for (const Assignment& a : out) {
      if (a.head == best && a.row == row && a.col == col) claimed = true;
    }
    if (claimed) continue;
    Assignment a;
    a.head = best;
    a.row = row;
    a.col = col;
    a.class_id = b.class_id;
    a.target[0] = static_cast<float>(std::clamp(gx - col, 0.0, 1.0));
    a.target[1] = static_cast<float>(std::clamp(gy - row, 0.0, 1.0));
    a.target[2] = static_cast<float>(b.w * input_size / stride);
    a.target[3] = static_cast<float>(b.h * input_size / stride);
    out.push_back(a);
  }
  return out;
}

LossResult detection_loss(std::span<const Tensor> heads, std::span<const int> strides,
                          int input_size, std::span<const std::vector<BoundingBox>> truth,
                          const LossWeights& weights) {
  if (heads.empty() || heads.size() != strides.size()) {
    throw ConfigError("detection_loss: heads and strides differ in count");
  }
  const int batch = heads[0].n();
  if (static_cast<int>(truth.size()) != batch) {
    throw ConfigError("detection_loss: " + std::to_string(truth.size()) + " targets for batch of " +
                      std::to_string(batch));
  }
  const int classes = heads[0].c() - detect::kFirstClass;
  std::vector<Shape> shapes;
  for (const Tensor& h : heads) {
    if (h.n() != batch || h.c() != heads[0].c()) {
      throw ConfigError("detection_loss: inconsistent head shapes");
    }
    shapes.push_back(h.shape());
  }

  LossResult r;
  for (const Tensor& h : heads) r.grads.emplace_back(h.shape());

  for (int n = 0; n < batch; ++n) {
    for (const BoundingBox& b : truth[static_cast<std::size_t>(n)]) {
      if (b.class_id < 0 || b.class_id >= classes) {
        throw ConfigError("detection_loss: class id " + std::to_string(b.class_id) +
                          " outside [0, " + std::to_string(classes) + ")");
      }
    }
    const std::vector<Assignment> pos =
        assign_targets(truth[static_cast<std::size_t>(n)], shapes, strides, input_size);
    r.positives += static_cast<int>(pos.size());

    // Objectness over all cells; positives flip the target to 1 below.
    for (std::size_t k = 0; k < heads.size(); ++k) {
      const float* z = heads[k].plane(n, detect::kObjectness);
      float* g = r.grads[k].plane(n, detect::kObjectness);
      const std::size_t plane = heads[k].shape().plane();
      for (std::size_t i = 0; i < plane; ++i) {
        r.objectness += weights.objectness * bce(z[i], 0.0);
        g[i] = static_cast<float>(weights.objectness * sigmoid(z[i]));
      }
    }
    for (const Assignment& a : pos) {
      const auto k = static_cast<std::size_t>(a.head);
      const Tensor& t = heads[k];
      Tensor& g = r.grads[k];
      const double zo = t.at(n, detect::kObjectness, a.row, a.col);
      r.objectness += weights.objectness * (bce(zo, 1.0) - bce(zo, 0.0));
      g.at(n, detect::kObjectness, a.row, a.col) =
          static_cast<float>(weights.objectness * (sigmoid(zo) - 1.0));

      for (int c = 0; c < classes; ++c) {
        const double z = t.at(n, detect::kFirstClass + c, a.row, a.col);
        const double y = c == a.class_id ? 1.0 : 0.0;
        r.classification += weights.classification * bce(z, y);
        g.at(n, detect::kFirstClass + c, a.row, a.col) =
            static_cast<float>(weights.classification * (sigmoid(z) - y));
      }

      for (int j = 0; j < 4; ++j) {
        const double z = t.at(n, detect::kBoxX + j, a.row, a.col);
        const double s = sigmoid(z);
        const double pred = j < 2 ? s : softplus(z);
        const double dpred = j < 2 ? s * (1.0 - s) : s;
        const double d = pred - a.target[j];
        r.box += weights.box * smooth_l1(d);
        g.at(n, detect::kBoxX + j, a.row, a.col) =
            static_cast<float>(weights.box * smooth_l1_grad(d) * dpred);
      }
    }
  }
  r.total = r.objectness + r.classification + r.box;
  return r;
}

LossResult train_step(net::Graph& graph, const Tensor& images,
                      std::span<const std::vector<BoundingBox>> truth, float learning_rate,
                      const LossWeights& weights) {
  net::check_image(images);
  graph.params().zero_grad();
  const std::vector<Tensor> heads = graph.forward(images, Mode::train);
  LossResult r = detection_loss(heads, graph.strides(), images.h(), truth, weights);
  graph.backward(r.grads);
  graph.params().sgd_step(learning_rate);
  return r;
}

}  // namespace cci::train
