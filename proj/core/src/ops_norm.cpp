#include <cmath>

#include "cci/error.hpp"
#include "cci/ops.hpp"

namespace cci {

BatchNormParams BatchNormParams::identity(int channels) {
  const Shape s{1, channels, 1, 1};
  return {Tensor(s, 1.0f), Tensor(s, 0.0f), Tensor(s, 0.0f), Tensor(s, 1.0f)};
}

namespace ops {

Tensor batch_norm(const Tensor& x, BatchNormParams& bn, Mode mode, BatchNormCache* cache,
                  float eps, float momentum) {
  const Shape vs{1, x.c(), 1, 1};
  if (bn.gamma.shape() != vs || bn.beta.shape() != vs || bn.running_mean.shape() != vs ||
      bn.running_var.shape() != vs) {
    throw ConfigError("batch_norm: parameters do not match " + std::to_string(x.c()) +
                      " channels");
  }
  Tensor out(x.shape());
  Tensor normalized(x.shape());
  std::vector<float> inv_std(static_cast<std::size_t>(x.c()));
  const std::size_t plane = x.shape().plane();
  const double count = static_cast<double>(plane) * x.n();

  for (int c = 0; c < x.c(); ++c) {
    const auto ci = static_cast<std::size_t>(c);
    float mean = 0.0f;
    float var = 0.0f;
    if (mode == Mode::train) {
      double sum = 0.0;
      for (int n = 0; n < x.n(); ++n) {
        const float* p = x.plane(n, c);
        for (std::size_t i = 0; i < plane; ++i) sum += p[i];
      }
      const double m = sum / count;
      double sq = 0.0;
      for (int n = 0; n < x.n(); ++n) {
        const float* p = x.plane(n, c);
        for (std::size_t i = 0; i < plane; ++i) sq += (p[i] - m) * (p[i] - m);
      }
      const double v = sq / count;
      mean = static_cast<float>(m);
      var = static_cast<float>(v);
      const double unbiased = count > 1.0 ? v * count / (count - 1.0) : v;
      bn.running_mean[ci] = (1.0f - momentum) * bn.running_mean[ci] + momentum * mean;
      bn.running_var[ci] =
          (1.0f - momentum) * bn.running_var[ci] + momentum * static_cast<float>(unbiased);
    } else {
      mean = bn.running_mean[ci];
      var = bn.running_var[ci];
    }
    const float is = 1.0f / std::sqrt(var + eps);
    inv_std[ci] = is;
    const float g = bn.gamma[ci];
    const float b = bn.beta[ci];
    for (int n = 0; n < x.n(); ++n) {
      const float* p = x.plane(n, c);
      float* xh = normalized.plane(n, c);
      float* o = out.plane(n, c);
      for (std::size_t i = 0; i < plane; ++i) {
        xh[i] = (p[i] - mean) * is;
        o[i] = g * xh[i] + b;
      }
    }
  }
  if (cache) {
    cache->normalized = std::move(normalized);
    cache->inv_std = std::move(inv_std);
    cache->mode = mode;
  }
  CCI_CHECK_FINITE(out, "batch_norm");
  return out;
}

BatchNormGrads batch_norm_backward(const BatchNormCache& cache, const Tensor& gamma,
                                   const Tensor& grad_out) {
  require_same_shape(cache.normalized, grad_out, "batch_norm_backward");
  const Shape& s = grad_out.shape();
  BatchNormGrads g{Tensor(s), Tensor({1, s.c, 1, 1}), Tensor({1, s.c, 1, 1})};
  const std::size_t plane = s.plane();
  const double count = static_cast<double>(plane) * s.n;

  for (int c = 0; c < s.c; ++c) {
    const auto ci = static_cast<std::size_t>(c);
    double sum_g = 0.0;
    double sum_gx = 0.0;
    for (int n = 0; n < s.n; ++n) {
      const float* go = grad_out.plane(n, c);
      const float* xh = cache.normalized.plane(n, c);
      for (std::size_t i = 0; i < plane; ++i) {
        sum_g += go[i];
        sum_gx += static_cast<double>(go[i]) * xh[i];
      }
    }
    g.gamma[ci] = static_cast<float>(sum_gx);
    g.beta[ci] = static_cast<float>(sum_g);
    const float scale = gamma[ci] * cache.inv_std[ci];
    const auto mean_g = static_cast<float>(sum_g / count);
    const auto mean_gx = static_cast<float>(sum_gx / count);
    for (int n = 0; n < s.n; ++n) {
      const float* go = grad_out.plane(n, c);
      const float* xh = cache.normalized.plane(n, c);
      float* gx = g.x.plane(n, c);
      if (cache.mode == Mode::train) {
        for (std::size_t i = 0; i < plane; ++i) {
          gx[i] = scale * (go[i] - mean_g - xh[i] * mean_gx);
        }
      } else {
        for (std::size_t i = 0; i < plane; ++i) gx[i] = scale * go[i];
      }
    }
  }
  return g;
}

}  // namespace ops
}  // namespace cci
