#pragma once

#include <cstdint>

#include "cci/module_util.hpp"
#include "cci/ops.hpp"

/// Context-guided downsampling: a strided reduction followed by a local
/// extractor and a dilated surrounding-context extractor, fused with BN+ReLU
/// and re-weighted per channel by a pooled global-context gate.
namespace cci::cgd {

struct Config {
  int in_channels = 1;
  int out_channels = 0;   // 0 selects 2 * in_channels
  int dilation = 2;       // surrounding-context dilation r
  int reduction = 16;     // gate bottleneck ratio (width clamped to >= 1)
  int reduce_kernel = 1;  // 1, or 3 for a 3x3 strided entry conv
  bool depthwise_branches = false;

  [[nodiscard]] int out() const { return out_channels > 0 ? out_channels : 2 * in_channels; }
  [[nodiscard]] int half() const { return out() / 2; }
  [[nodiscard]] int hidden() const {
    const int h = out() / reduction;
    return h < 1 ? 1 : h;
  }
  [[nodiscard]] ConvSpec reduce_spec() const;
  [[nodiscard]] ConvSpec local_spec() const;
  [[nodiscard]] ConvSpec surround_spec() const;
  void validate() const;
};

struct Params {
  Tensor reduce_weight;  // (C_out/2, C, k, k), stride 2
  BatchNormParams reduce_bn;
  Tensor local_weight;     // LFE, 3x3
  Tensor surround_weight;  // SCE, 3x3 dilated
  BatchNormParams joint_bn;  // JFE over C_out
  Tensor fc1_weight;  // (C_out/rho, C_out, 1, 1)
  Tensor fc1_bias;
  Tensor fc2_weight;  // (C_out, C_out/rho, 1, 1)
  Tensor fc2_bias;

  static Params init(const Config& cfg, Rng& rng);

  template <class F>
  void visit(F&& f) {
    f("reduce.weight", reduce_weight, true);
    visit_batch_norm("reduce.bn", reduce_bn, f);
    f("lfe.weight", local_weight, true);
    f("sce.weight", surround_weight, true);
    visit_batch_norm("jfe.bn", joint_bn, f);
    f("gce.fc1.weight", fc1_weight, true);
    f("gce.fc1.bias", fc1_bias, true);
    f("gce.fc2.weight", fc2_weight, true);
    f("gce.fc2.bias", fc2_bias, true);
  }
};

struct Cache {
  Tensor reduce_bn_out;  // pre-ReLU
  BatchNormCache reduce_bn;
  Tensor reduced;
  Tensor local;
  Tensor surround;
  Tensor joint_bn_out;  // pre-ReLU
  BatchNormCache joint_bn;
  Tensor joint;  // JFE output
  Tensor pooled;
  Tensor hidden_pre;
  Tensor hidden;
  Tensor gate;
};

struct Gradients {
  Tensor x;
  Params params;
};

/// Output n x C_out x ceil(h/2) x ceil(w/2). Train mode updates both
/// batch-norm running statistics in `params`.
Tensor forward(const Tensor& x, const Config& cfg, Params& params, Mode mode,
               Cache* cache = nullptr);

/// GAP -> fc1 -> ReLU -> fc2 -> sigmoid. Returns n x C_out x 1 x 1 in (0, 1).
Tensor gce_gate(const Tensor& features, const Config& cfg, const Params& params,
                Cache* cache = nullptr);

/// Recomputes the forward pass in `mode` on a copy of the running statistics.
Gradients backward(const Tensor& x, const Config& cfg, const Params& params,
                   const Tensor& grad_out, Mode mode = Mode::train);
Gradients backward(const Tensor& x, const Config& cfg, const Params& params, const Cache& cache,
                   const Tensor& grad_out);

std::int64_t count_params(const Config& cfg);
std::int64_t count_flops(const Config& cfg, const Shape& in);

}  // namespace cci::cgd
