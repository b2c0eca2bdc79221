#pragma once

#include <cstdint>

#include "cci/module_util.hpp"
#include "cci/ops.hpp"

/// YOLOv8 plumbing blocks: conv + BN + SiLU, the two-conv bottleneck and SPPF.
namespace cci::block {

struct ConvBlockParams {
  Tensor weight;
  BatchNormParams bn;

  static ConvBlockParams init(const ConvSpec& spec, Rng& rng);

  template <class F>
  void visit(F&& f) {
    f("conv.weight", weight, true);
    visit_batch_norm("bn", bn, f);
  }
};

struct ConvBlockCache {
  Tensor pre_act;  // BN output
  BatchNormCache bn;
};

struct ConvBlockGrads {
  Tensor x;
  ConvBlockParams params;
};

/// silu(bn(conv(x))), no conv bias.
Tensor conv_block(const Tensor& x, const ConvSpec& spec, ConvBlockParams& params, Mode mode,
                  ConvBlockCache* cache = nullptr);
ConvBlockGrads conv_block_backward(const Tensor& x, const ConvSpec& spec,
                                   const ConvBlockParams& params, const ConvBlockCache& cache,
                                   const Tensor& grad_out, bool input_grad = true);
std::int64_t conv_block_params(const ConvSpec& spec);

struct BottleneckConfig {
  int channels = 1;
  bool shortcut = true;

  [[nodiscard]] ConvSpec conv_spec() const { return ConvSpec::same(channels, channels, 3); }
};

struct BottleneckParams {
  ConvBlockParams cv1;
  ConvBlockParams cv2;

  static BottleneckParams init(const BottleneckConfig& cfg, Rng& rng);

  template <class F>
  void visit(F&& f) {
    cv1.visit([&](const std::string& n, Tensor& t, bool tr) { f("cv1." + n, t, tr); });
    cv2.visit([&](const std::string& n, Tensor& t, bool tr) { f("cv2." + n, t, tr); });
  }
};

struct BottleneckCache {
  ConvBlockCache cv1;
  Tensor mid;
  ConvBlockCache cv2;
};

struct BottleneckGrads {
  Tensor x;
  BottleneckParams params;
};

Tensor bottleneck(const Tensor& x, const BottleneckConfig& cfg, BottleneckParams& params, Mode mode,
                  BottleneckCache* cache = nullptr);
BottleneckGrads bottleneck_backward(const Tensor& x, const BottleneckConfig& cfg,
                                    const BottleneckParams& params, const BottleneckCache& cache,
                                    const Tensor& grad_out);

/// Spatial pyramid pooling (fast): 1x1 to C/2, three cumulative k x k
/// max-pools, concat of the four maps, 1x1 to C_out.
struct SppfConfig {
  int in_channels = 2;
  int out_channels = 2;
  int pool = 5;

  [[nodiscard]] int hidden() const { return in_channels / 2; }
  [[nodiscard]] ConvSpec cv1_spec() const { return ConvSpec::same(in_channels, hidden(), 1); }
  [[nodiscard]] ConvSpec cv2_spec() const { return ConvSpec::same(4 * hidden(), out_channels, 1); }
  void validate() const;
};

struct SppfParams {
  ConvBlockParams cv1;
  ConvBlockParams cv2;

  static SppfParams init(const SppfConfig& cfg, Rng& rng);

  template <class F>
  void visit(F&& f) {
    cv1.visit([&](const std::string& n, Tensor& t, bool tr) { f("cv1." + n, t, tr); });
    cv2.visit([&](const std::string& n, Tensor& t, bool tr) { f("cv2." + n, t, tr); });
  }
};

struct SppfCache {
  ConvBlockCache cv1;
  Tensor pooled[4];  // cv1 output and the three successive pools
  Tensor cat;
  ConvBlockCache cv2;
};

struct SppfGrads {
  Tensor x;
  SppfParams params;
};

Tensor sppf(const Tensor& x, const SppfConfig& cfg, SppfParams& params, Mode mode,
            SppfCache* cache = nullptr);
SppfGrads sppf_backward(const Tensor& x, const SppfConfig& cfg, const SppfParams& params,
                        const SppfCache& cache, const Tensor& grad_out);
std::int64_t sppf_params(const SppfConfig& cfg);
std::int64_t sppf_flops(const SppfConfig& cfg, const Shape& in);

}  // namespace cci::block
