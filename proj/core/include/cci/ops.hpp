#pragma once

#include <span>
#include <vector>

#include "cci/tensor.hpp"

namespace cci {

enum class Mode { train, eval };

/// Geometry of a 2-D convolution. Cross-correlation, zero padding.
struct ConvSpec {
  int in_channels = 1;
  int out_channels = 1;
  int kernel = 1;
  int stride = 1;
  int padding = 0;
  int dilation = 1;
  int groups = 1;

  /// Padding that keeps the spatial size at stride 1: dilation * (kernel - 1) / 2.
  static ConvSpec same(int in_channels, int out_channels, int kernel, int stride = 1,
                       int dilation = 1, int groups = 1);
  static ConvSpec depthwise(int channels, int kernel, int dilation = 1);

  void validate() const;
  [[nodiscard]] int out_extent(int in) const;
  [[nodiscard]] Shape output_shape(const Shape& in) const;
  [[nodiscard]] Shape weight_shape() const {
    return {out_channels, in_channels / groups, kernel, kernel};
  }
  [[nodiscard]] bool is_depthwise() const {
    return groups == in_channels && groups == out_channels && groups > 1;
  }
  /// Multiply-accumulates for one forward pass on `in`.
  [[nodiscard]] std::int64_t macs(const Shape& in) const;
};

/// Batch-norm affine parameters plus running statistics (buffers, not trained).
struct BatchNormParams {
  Tensor gamma;
  Tensor beta;
  Tensor running_mean;
  Tensor running_var;

  /// gamma 1, beta 0, running mean 0, running var 1.
  static BatchNormParams identity(int channels);
  [[nodiscard]] int channels() const { return gamma.c(); }
};

inline constexpr float kBatchNormEps = 1e-5f;
inline constexpr float kBatchNormMomentum = 0.1f;

struct BatchNormCache {
  Tensor normalized;           // x-hat
  std::vector<float> inv_std;  // per channel
  Mode mode = Mode::eval;
};

struct ConvGrads {
  Tensor x;
  Tensor weight;
  Tensor bias;  // empty when the forward had no bias
};

struct BatchNormGrads {
  Tensor x;
  Tensor gamma;
  Tensor beta;
};

struct LinearGrads {
  Tensor x;
  Tensor weight;
  Tensor bias;
};

namespace ops {

/// Convolution; `bias` may be empty. Weight shape (out, in/groups, k, k).
Tensor conv2d(const Tensor& x, const ConvSpec& spec, const Tensor& weight,
              const Tensor& bias = {});
/// Gradients of conv2d. `grad_x` is skipped (left empty) when `input_grad` is false.
ConvGrads conv2d_backward(const Tensor& x, const ConvSpec& spec, const Tensor& weight,
                          const Tensor& grad_out, bool with_bias, bool input_grad = true);

/// Train mode normalizes with biased batch statistics and folds the unbiased
/// variance into the running buffers with the given momentum.
Tensor batch_norm(const Tensor& x, BatchNormParams& bn, Mode mode, BatchNormCache* cache = nullptr,
                  float eps = kBatchNormEps, float momentum = kBatchNormMomentum);
BatchNormGrads batch_norm_backward(const BatchNormCache& cache, const Tensor& gamma,
                                   const Tensor& grad_out);

Tensor relu(const Tensor& x);
Tensor relu_backward(const Tensor& x, const Tensor& grad_out);
Tensor sigmoid(const Tensor& x);
/// Takes the forward output y = sigmoid(x).
Tensor sigmoid_backward(const Tensor& y, const Tensor& grad_out);
Tensor silu(const Tensor& x);
Tensor silu_backward(const Tensor& x, const Tensor& grad_out);

/// Softmax over each contiguous run of `group_size` channels at every (n, h, w).
Tensor softmax_groups(const Tensor& x, int group_size);
/// Takes the forward output.
Tensor softmax_groups_backward(const Tensor& y, const Tensor& grad_out, int group_size);

/// (n, c*r*r, h, w) -> (n, c, r*h, r*w); out(c, r*i+di, r*j+dj) = in(c*r*r + di*r + dj, i, j).
Tensor pixel_shuffle(const Tensor& x, int r);
/// Exact inverse of pixel_shuffle, which is also its adjoint.
Tensor pixel_unshuffle(const Tensor& x, int r);

Tensor global_avg_pool(const Tensor& x);
Tensor global_avg_pool_backward(const Tensor& grad_out, const Shape& input_shape);

/// x is flattened per sample (c*h*w == in); weight (out, in, 1, 1); bias (1, out, 1, 1) or empty.
/// Returns n x out x 1 x 1.
Tensor fully_connected(const Tensor& x, const Tensor& weight, const Tensor& bias = {});
LinearGrads fully_connected_backward(const Tensor& x, const Tensor& weight,
                                     const Tensor& grad_out, bool with_bias);

Tensor concat_channels(std::span<const Tensor> xs);
Tensor concat_channels(std::span<const Tensor* const> xs);
Tensor concat_channels(std::initializer_list<const Tensor*> xs);
/// Concatenates along the batch axis.
Tensor stack_batch(std::span<const Tensor> xs);
std::vector<Tensor> split_channels(const Tensor& x, std::span<const int> sizes);
std::vector<Tensor> split_channels(const Tensor& x, std::initializer_list<int> sizes);

Tensor upsample_nearest(const Tensor& x, int r);
Tensor upsample_nearest_backward(const Tensor& grad_out, int r);

/// Max pooling with -inf padding. Ties resolve to the first window element in raster order.
Tensor max_pool2d(const Tensor& x, int kernel, int stride, int padding);
Tensor max_pool2d_backward(const Tensor& x, int kernel, int stride, int padding,
                           const Tensor& grad_out);

Tensor add(const Tensor& a, const Tensor& b);
/// out(n, c, :, :) = x(n, c, :, :) * gate(n, c). gate is n x c x 1 x 1.
Tensor scale_channels(const Tensor& x, const Tensor& gate);
struct ScaleGrads {
  Tensor x;
  Tensor gate;
};
ScaleGrads scale_channels_backward(const Tensor& x, const Tensor& gate, const Tensor& grad_out);

}  // namespace ops

/// U(-b, b) with b = 1 / sqrt(fan_in).
Tensor fan_in_uniform(Shape weight_shape, int fan_in, Rng& rng);

}  // namespace cci
