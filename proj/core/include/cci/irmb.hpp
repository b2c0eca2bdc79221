#pragma once

#include <cstdint>
#include <vector>

#include "cci/ops.hpp"

/// Inverted residual mobile block: windowed multi-head self-attention with
/// queries and keys taken directly from the input and values from a 1x1
/// channel expansion, then a depthwise 3x3 and a 1x1 projection, added back
/// to the input.
namespace cci::irmb {

struct Config {
  int channels = 1;      // C
  int expand_ratio = 2;  // e, values carry e*C channels
  int heads = 4;
  int window = 7;        // side of the square attention windows
  int dw_kernel = 3;

  [[nodiscard]] int value_channels() const { return expand_ratio * channels; }
  [[nodiscard]] int key_width() const { return channels / heads; }
  [[nodiscard]] int value_width() const { return value_channels() / heads; }
  [[nodiscard]] ConvSpec expand_spec() const { return ConvSpec::same(channels, value_channels(), 1); }
  [[nodiscard]] ConvSpec dw_spec() const { return ConvSpec::depthwise(value_channels(), dw_kernel); }
  [[nodiscard]] ConvSpec project_spec() const {
    return ConvSpec::same(value_channels(), channels, 1);
  }
  void validate() const;
};

struct Params {
  Tensor expand_weight;  // (eC, C, 1, 1)
  Tensor expand_bias;
  Tensor dw_weight;  // (eC, 1, 3, 3)
  Tensor dw_bias;
  Tensor project_weight;  // (C, eC, 1, 1)
  Tensor project_bias;

  static Params init(const Config& cfg, Rng& rng);

  template <class F>
  void visit(F&& f) {
    f("expand.weight", expand_weight, true);
    f("expand.bias", expand_bias, true);
    f("dw.weight", dw_weight, true);
    f("dw.bias", dw_bias, true);
    f("project.weight", project_weight, true);
    f("project.bias", project_bias, true);
  }
};

/// Non-overlapping window; border windows are clipped, never padded.
struct Window {
  int y0 = 0;
  int x0 = 0;
  int rows = 0;
  int cols = 0;
  [[nodiscard]] int tokens() const { return rows * cols; }
};

/// Raster-order partition of an h x w grid into side x side windows.
std::vector<Window> partition_windows(int h, int w, int side);

struct Cache {
  Tensor values;  // expand(x)
  /// Row-stochastic attention matrices, stored per sample, then window
  /// (raster order), then head, each tokens x tokens row-major.
  std::vector<float> attention;
  Tensor attended;  // X_att
  Tensor dw_out;    // X_dw
};

struct Gradients {
  Tensor x;
  Params params;
};

/// Expanded-window multi-head self-attention. Output n x eC x h x w.
Tensor ew_mhsa(const Tensor& x, const Config& cfg, const Params& params, Cache* cache = nullptr);

/// Gradients of ew_mhsa only (projection/dw fields of `params` left empty).
Gradients ew_mhsa_backward(const Tensor& x, const Config& cfg, const Params& params,
                           const Cache& cache, const Tensor& grad_out);

/// Y = X + project(dw(ew_mhsa(X))).
Tensor forward(const Tensor& x, const Config& cfg, const Params& params, Cache* cache = nullptr);

Gradients backward(const Tensor& x, const Config& cfg, const Params& params,
                   const Tensor& grad_out);
Gradients backward(const Tensor& x, const Config& cfg, const Params& params, const Cache& cache,
                   const Tensor& grad_out);

std::int64_t count_params(const Config& cfg);
/// Counts the expand/dw/project convolutions plus the QK^T and AV products.
std::int64_t count_flops(const Config& cfg, const Shape& in);

}  // namespace cci::irmb
