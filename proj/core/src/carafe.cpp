#include "cci/carafe.hpp"

#include "cci/error.hpp"
#include "cci/module_util.hpp"

namespace cci::carafe {

void Config::validate() const {
  if (channels < 1) throw ConfigError("carafe: channels must be >= 1");
  if (sigma < 1) throw ConfigError("carafe: sigma must be >= 1");
  if (k_up < 1 || k_up % 2 == 0) throw ConfigError("carafe: k_up must be odd and >= 1");
  if (k_encoder < 1 || k_encoder % 2 == 0) {
    throw ConfigError("carafe: k_encoder must be odd and >= 1");
  }
  if (c_mid < 1) throw ConfigError("carafe: c_mid must be >= 1");
}

ConvSpec Config::compress_spec() const { return ConvSpec::same(channels, mid_channels(), 1); }

ConvSpec Config::encode_spec() const {
  return ConvSpec::same(mid_channels(), sigma * sigma * taps(), k_encoder);
}

Params Params::init(const Config& cfg, Rng& rng) {
  cfg.validate();
  const ConvSpec cs = cfg.compress_spec();
  const ConvSpec es = cfg.encode_spec();
  Params p;
  p.compress_weight = fan_in_uniform(cs.weight_shape(), cs.in_channels, rng);
  p.compress_bias = Tensor::zeros({1, cs.out_channels, 1, 1});
  p.encode_weight = fan_in_uniform(es.weight_shape(), es.in_channels * es.kernel * es.kernel, rng);
  p.encode_bias = Tensor::zeros({1, es.out_channels, 1, 1});
  return p;
}

Params Params::zeros(const Config& cfg) {
  cfg.validate();
  const ConvSpec cs = cfg.compress_spec();
  const ConvSpec es = cfg.encode_spec();
  return {Tensor::zeros(cs.weight_shape()), Tensor::zeros({1, cs.out_channels, 1, 1}),
          Tensor::zeros(es.weight_shape()), Tensor::zeros({1, es.out_channels, 1, 1})};
}

namespace {

void check_input(const Tensor& x, const Config& cfg) {
  cfg.validate();
  if (x.c() != cfg.channels) {
    throw ConfigError("carafe: input has " + std::to_string(x.c()) + " channels, configured " +
                      std::to_string(cfg.channels));
  }
}

void check_kernels(const Tensor& x, const Tensor& kernels, const Config& cfg) {
  const Shape expect{x.n(), cfg.taps(), x.h() * cfg.sigma, x.w() * cfg.sigma};
  if (kernels.shape() != expect) {
    throw ConfigError("carafe: kernel map " + kernels.shape().str() + " expected " +
                      expect.str());
  }
}

}  // namespace

Tensor predict_kernels(const Tensor& x, const Config& cfg, const Params& params, Cache* cache) {
  check_input(x, cfg);
  Tensor compressed =
      ops::conv2d(x, cfg.compress_spec(), params.compress_weight, params.compress_bias);
  Tensor logits =
      ops::conv2d(compressed, cfg.encode_spec(), params.encode_weight, params.encode_bias);
  Tensor kernels = ops::softmax_groups(ops::pixel_shuffle(logits, cfg.sigma), cfg.taps());
  if (cache) {
    cache->compressed = std::move(compressed);
    cache->kernels = kernels;
  }
  return kernels;
}

Tensor reassemble(const Tensor& x, const Tensor& kernels, const Config& cfg) {
  check_input(x, cfg);
  check_kernels(x, kernels, cfg);
  const int s = cfg.sigma;
  const int k = cfg.k_up;
  const int r = k / 2;
  const int oh = x.h() * s;
  const int ow = x.w() * s;
  Tensor out({x.n(), x.c(), oh, ow});
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      const float* src = x.plane(n, c);
      float* dst = out.plane(n, c);
      for (int i = 0; i < oh; ++i) {
        const int ci = i / s;
        for (int j = 0; j < ow; ++j) {
          const int cj = j / s;
          const std::size_t o = static_cast<std::size_t>(i) * ow + j;
          float acc = 0.0f;
          for (int a = 0; a < k; ++a) {
            const int yi = ci + a - r;
            if (yi < 0 || yi >= x.h()) continue;
            for (int b = 0; b < k; ++b) {
              const int xj = cj + b - r;
              if (xj < 0 || xj >= x.w()) continue;
              acc += kernels.plane(n, a * k + b)[o] * src[static_cast<std::size_t>(yi) * x.w() + xj];
            }
          }
          dst[o] = acc;
        }
      }
    }
  }
  CCI_CHECK_FINITE(out, "carafe::reassemble");
  return out;
}

ReassembleGrads reassemble_backward(const Tensor& x, const Tensor& kernels, const Config& cfg,
                                    const Tensor& grad_out) {
  check_input(x, cfg);
  check_kernels(x, kernels, cfg);
  const int s = cfg.sigma;
  const int k = cfg.k_up;
  const int r = k / 2;
  const int oh = x.h() * s;
  const int ow = x.w() * s;
  if (grad_out.shape() != Shape{x.n(), x.c(), oh, ow}) {
    throw ConfigError("carafe::reassemble_backward: grad_out shape " + grad_out.shape().str());
  }
  ReassembleGrads g{Tensor(x.shape()), Tensor(kernels.shape())};
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      const float* src = x.plane(n, c);
      const float* go = grad_out.plane(n, c);
      float* gx = g.x.plane(n, c);
      for (int i = 0; i < oh; ++i) {
        const int ci = i / s;
        for (int j = 0; j < ow; ++j) {
          const int cj = j / s;
          const std::size_t o = static_cast<std::size_t>(i) * ow + j;
          const float gv = go[o];
          for (int a = 0; a < k; ++a) {
            const int yi = ci + a - r;
            if (yi < 0 || yi >= x.h()) continue;
            for (int b = 0; b < k; ++b) {
              const int xj = cj + b - r;
              if (xj < 0 || xj >= x.w()) continue;
              const std::size_t idx = static_cast<std::size_t>(yi) * x.w() + xj;
              const int t = a * k + b;
              g.kernels.plane(n, t)[o] += gv * src[idx];
              gx[idx] += gv * kernels.plane(n, t)[o];
            }
          }
        }
      }
    }
  }
  return g;
}

Tensor forward(const Tensor& x, const Config& cfg, const Params& params, Cache* cache) {
  Cache local;
  Cache& c = cache ? *cache : local;
  predict_kernels(x, cfg, params, &c);
  return reassemble(x, c.kernels, cfg);
}

Gradients backward(const Tensor& x, const Config& cfg, const Params& params,
                   const Tensor& grad_out) {
  Cache cache;
  predict_kernels(x, cfg, params, &cache);
  return backward(x, cfg, params, cache, grad_out);
}

Gradients backward(const Tensor& x, const Config& cfg, const Params& params, const Cache& cache,
                   const Tensor& grad_out) {
  ReassembleGrads rg = reassemble_backward(x, cache.kernels, cfg, grad_out);
  const Tensor g_logits = ops::pixel_unshuffle(
      ops::softmax_groups_backward(cache.kernels, rg.kernels, cfg.taps()), cfg.sigma);
  ConvGrads enc =
      ops::conv2d_backward(cache.compressed, cfg.encode_spec(), params.encode_weight, g_logits, true);
  ConvGrads comp =
      ops::conv2d_backward(x, cfg.compress_spec(), params.compress_weight, enc.x, true);
  rg.x.add_(comp.x);
  return {std::move(rg.x),
          {std::move(comp.weight), std::move(comp.bias), std::move(enc.weight),
           std::move(enc.bias)}};
}

std::int64_t count_params(const Config& cfg) {
  cfg.validate();
  const ConvSpec cs = cfg.compress_spec();
  const ConvSpec es = cfg.encode_spec();
  return static_cast<std::int64_t>(cs.weight_shape().numel() + cs.out_channels +
                                   es.weight_shape().numel() + es.out_channels);
}

std::int64_t count_flops(const Config& cfg, const Shape& in) {
  cfg.validate();
  const ConvSpec cs = cfg.compress_spec();
  const Shape mid = cs.output_shape(in);
  const std::int64_t reassembly = static_cast<std::int64_t>(in.n) * in.c * in.h * cfg.sigma *
                                  in.w * cfg.sigma * cfg.taps();
  return flops_of(cs.macs(in) + cfg.encode_spec().macs(mid) + reassembly);
}

}  // namespace cci::carafe
