#pragma once

#include <cstdint>

#include "cci/ops.hpp"

/// Content-aware reassembly upsampling: a light encoder predicts a softmax-
/// normalized k_up x k_up kernel for every output location, and each output
/// value is that kernel's weighted sum over the source neighborhood.
namespace cci::carafe {

struct Config {
  int channels = 1;   // C, input and output channels
  int sigma = 2;      // upscale factor
  int k_up = 5;       // reassembly kernel size
  int k_encoder = 3;  // content encoder kernel size
  int c_mid = 64;     // compressed channels before the encoder (clamped to C)

  [[nodiscard]] int mid_channels() const { return c_mid < channels ? c_mid : channels; }
  [[nodiscard]] int taps() const { return k_up * k_up; }
  [[nodiscard]] ConvSpec compress_spec() const;
  [[nodiscard]] ConvSpec encode_spec() const;
  void validate() const;
};

struct Params {
  Tensor compress_weight;  // (Cm, C, 1, 1)
  Tensor compress_bias;    // (1, Cm, 1, 1)
  Tensor encode_weight;    // (sigma^2 * k_up^2, Cm, k_enc, k_enc)
  Tensor encode_bias;

  static Params init(const Config& cfg, Rng& rng);
  static Params zeros(const Config& cfg);

  template <class F>
  void visit(F&& f) {
    f("compress.weight", compress_weight, true);
    f("compress.bias", compress_bias, true);
    f("encode.weight", encode_weight, true);
    f("encode.bias", encode_bias, true);
  }
};

/// Forward intermediates kept for the backward pass.
struct Cache {
  Tensor compressed;
  Tensor kernels;
};

struct Gradients {
  Tensor x;
  Params params;
};

/// compress (1x1) -> encode (k_enc, same padding) -> pixel_shuffle(sigma) ->
/// softmax over each k_up^2 group. Output n x k_up^2 x sigma*h x sigma*w.
Tensor predict_kernels(const Tensor& x, const Config& cfg, const Params& params,
                       Cache* cache = nullptr);

/// out(n, c, i', j') = sum over the k_up x k_up window centred on
/// (i'/sigma, j'/sigma) of x(n, c, .) * kernels(n, tap, i', j'); zero padding.
Tensor reassemble(const Tensor& x, const Tensor& kernels, const Config& cfg);

struct ReassembleGrads {
  Tensor x;
  Tensor kernels;
};
ReassembleGrads reassemble_backward(const Tensor& x, const Tensor& kernels, const Config& cfg,
                                    const Tensor& grad_out);

Tensor forward(const Tensor& x, const Config& cfg, const Params& params, Cache* cache = nullptr);

/// Recomputes the forward pass, then differentiates through both the
/// reassembly taps and the kernel-prediction branch.
Gradients backward(const Tensor& x, const Config& cfg, const Params& params,
                   const Tensor& grad_out);
Gradients backward(const Tensor& x, const Config& cfg, const Params& params, const Cache& cache,
                   const Tensor& grad_out);

std::int64_t count_params(const Config& cfg);
/// 2 x MACs of the two convolutions and the reassembly weighted sums.
std::int64_t count_flops(const Config& cfg, const Shape& in);

}  // namespace cci::carafe
