#include "cci/irmb.hpp"

#include <algorithm>
#include <cmath>

#include "cci/error.hpp"
#include "cci/module_util.hpp"

namespace cci::irmb {

void Config::validate() const {
  if (channels < 1 || expand_ratio < 1 || heads < 1 || window < 1 || dw_kernel < 1) {
    throw ConfigError("irmb: channels, expand_ratio, heads, window must be >= 1");
  }
  if (channels % heads != 0) {
    throw ConfigError("irmb: heads " + std::to_string(heads) + " must divide channels " +
                      std::to_string(channels));
  }
  if (value_channels() % heads != 0) {
    throw ConfigError("irmb: heads " + std::to_string(heads) +
                      " must divide expanded channels " + std::to_string(value_channels()));
  }
}

Params Params::init(const Config& cfg, Rng& rng) {
  cfg.validate();
  const int ev = cfg.value_channels();
  Params p;
  p.expand_weight = fan_in_uniform(cfg.expand_spec().weight_shape(), cfg.channels, rng);
  p.expand_bias = Tensor::zeros({1, ev, 1, 1});
  p.dw_weight = fan_in_uniform(cfg.dw_spec().weight_shape(), cfg.dw_kernel * cfg.dw_kernel, rng);
  p.dw_bias = Tensor::zeros({1, ev, 1, 1});
  p.project_weight = fan_in_uniform(cfg.project_spec().weight_shape(), ev, rng);
  p.project_bias = Tensor::zeros({1, cfg.channels, 1, 1});
  return p;
}

std::vector<Window> partition_windows(int h, int w, int side) {
  if (side < 1) throw ConfigError("irmb: window side must be >= 1");
  std::vector<Window> out;
  for (int y = 0; y < h; y += side) {
    for (int x = 0; x < w; x += side) {
      out.push_back({y, x, std::min(side, h - y), std::min(side, w - x)});
    }
  }
  return out;
}

namespace {

void check_input(const Tensor& x, const Config& cfg) {
  cfg.validate();
  if (x.c() != cfg.channels) {
    throw ConfigError("irmb: input has " + std::to_string(x.c()) + " channels, configured " +
                      std::to_string(cfg.channels));
  }
}

// Copies `width` channels starting at c0 for every token of `win` into a
// width x tokens buffer (one contiguous row per channel).
void gather(const Tensor& t, int n, int c0, int width, const Window& win, float* dst) {
  for (int k = 0; k < width; ++k) {
    const float* plane = t.plane(n, c0 + k);
    for (int r = 0; r < win.rows; ++r) {
      const float* src = plane + static_cast<std::size_t>(win.y0 + r) * t.w() + win.x0;
      std::copy(src, src + win.cols, dst);
      dst += win.cols;
    }
  }
}

void scatter_add(Tensor& t, int n, int c0, int width, const Window& win, const float* src) {
  for (int k = 0; k < width; ++k) {
    float* plane = t.plane(n, c0 + k);
    for (int r = 0; r < win.rows; ++r) {
      float* dst = plane + static_cast<std::size_t>(win.y0 + r) * t.w() + win.x0;
      for (int c = 0; c < win.cols; ++c) dst[c] += src[c];
      src += win.cols;
    }
  }
}

// out[i][:] += sum_j coeff[j][i] * rows[j][:] for channel-major operands:
// out is m x len, coeff is inner x m (column i read with stride m), rows is inner x len.
void accumulate(float* out, int m, int len, const float* coeff, const float* rows, int inner) {
  for (int j = 0; j < inner; ++j) {
    const float* rj = rows + static_cast<std::size_t>(j) * len;
    const float* cj = coeff + static_cast<std::size_t>(j) * m;
    for (int i = 0; i < m; ++i) {
      const float c = cj[i];
      float* oi = out + static_cast<std::size_t>(i) * len;
      for (int s = 0; s < len; ++s) oi[s] += c * rj[s];
    }
  }
}

std::size_t attention_floats(const Config& cfg, const Shape& s,
                             const std::vector<Window>& windows) {
  std::size_t per_sample = 0;
  for (const Window& w : windows) {
    per_sample += static_cast<std::size_t>(w.tokens()) * w.tokens() * cfg.heads;
  }
  return per_sample * s.n;
}

}  // namespace

Tensor ew_mhsa(const Tensor& x, const Config& cfg, const Params& params, Cache* cache) {
  check_input(x, cfg);
  Tensor values = ops::conv2d(x, cfg.expand_spec(), params.expand_weight, params.expand_bias);
  const int d = cfg.key_width();
  const int dv = cfg.value_width();
  const float scale = 1.0f / std::sqrt(static_cast<float>(d));
  const std::vector<Window> windows = partition_windows(x.h(), x.w(), cfg.window);

  Tensor out({x.n(), cfg.value_channels(), x.h(), x.w()});
  std::vector<float> attention;
  if (cache) attention.reserve(attention_floats(cfg, x.shape(), windows));

  // Per window and head: logits = scale * q^T q over tokens (q is d x T),
  // attention rows are softmaxed, and out (dv x T) = v a^T.
  std::vector<float> q, v, a, at, o;
  for (int n = 0; n < x.n(); ++n) {
    for (const Window& win : windows) {
      const int tokens = win.tokens();
      const auto tt = static_cast<std::size_t>(tokens);
      q.resize(tt * d);
      v.resize(tt * dv);
      a.resize(tt * tt);
      at.resize(tt * tt);
      o.resize(tt * dv);
      for (int head = 0; head < cfg.heads; ++head) {
        gather(x, n, head * d, d, win, q.data());
        gather(values, n, head * dv, dv, win, v.data());
        std::fill(a.begin(), a.end(), 0.0f);
        accumulate(a.data(), tokens, tokens, q.data(), q.data(), d);
        for (int t = 0; t < tokens; ++t) {
          float* row = a.data() + t * tt;
          const float mx = *std::max_element(row, row + tokens);
          float sum = 0.0f;
          for (int s = 0; s < tokens; ++s) {
            row[s] = std::exp((row[s] - mx) * scale);
            sum += row[s];
          }
          const float inv = 1.0f / sum;
          for (int s = 0; s < tokens; ++s) {
            row[s] *= inv;
            at[s * tt + t] = row[s];
          }
        }
        // o[k][t] = sum_s v[k][s] a[t][s] = sum_s v[k][s] at[s][t]
        std::fill(o.begin(), o.end(), 0.0f);
        for (int k = 0; k < dv; ++k) {
          float* ok = o.data() + k * tt;
          const float* vk = v.data() + k * tt;
          for (int s = 0; s < tokens; ++s) {
            const float c = vk[s];
            const float* as = at.data() + s * tt;
            for (int t = 0; t < tokens; ++t) ok[t] += c * as[t];
          }
        }
        scatter_add(out, n, head * dv, dv, win, o.data());
        if (cache) attention.insert(attention.end(), a.begin(), a.end());
      }
    }
  }
  if (cache) {
    cache->values = std::move(values);
    cache->attention = std::move(attention);
    cache->attended = out;
  }
  CCI_CHECK_FINITE(out, "irmb::ew_mhsa");
  return out;
}

Gradients ew_mhsa_backward(const Tensor& x, const Config& cfg, const Params& params,
                           const Cache& cache, const Tensor& grad_out) {
  check_input(x, cfg);
  const Shape os{x.n(), cfg.value_channels(), x.h(), x.w()};
  if (grad_out.shape() != os) {
    throw ConfigError("irmb::ew_mhsa_backward: grad_out shape " + grad_out.shape().str());
  }
  const int d = cfg.key_width();
  const int dv = cfg.value_width();
  const float scale = 1.0f / std::sqrt(static_cast<float>(d));
  const std::vector<Window> windows = partition_windows(x.h(), x.w(), cfg.window);
  if (cache.attention.size() != attention_floats(cfg, x.shape(), windows)) {
    throw ConfigError("irmb::ew_mhsa_backward: cache does not match input");
  }

  Tensor g_x(x.shape());
  Tensor g_values(os);
  std::size_t offset = 0;
  std::vector<float> q, v, go, gv, ga, gq;
  for (int n = 0; n < x.n(); ++n) {
    for (const Window& win : windows) {
      const int tokens = win.tokens();
      const auto tt = static_cast<std::size_t>(tokens);
      q.resize(tt * d);
      v.resize(tt * dv);
      go.resize(tt * dv);
      gv.resize(tt * dv);
      ga.resize(tt * tt);
      gq.resize(tt * d);
      for (int head = 0; head < cfg.heads; ++head) {
        const float* a = cache.attention.data() + offset;
        offset += tt * tt;
        gather(x, n, head * d, d, win, q.data());
        gather(cache.values, n, head * dv, dv, win, v.data());
        gather(grad_out, n, head * dv, dv, win, go.data());
        // gv[k][s] = sum_t go[k][t] a[t][s]
        std::fill(gv.begin(), gv.end(), 0.0f);
        for (int k = 0; k < dv; ++k) {
          float* gvk = gv.data() + k * tt;
          const float* gok = go.data() + k * tt;
          for (int t = 0; t < tokens; ++t) {
            const float c = gok[t];
            const float* row = a + t * tt;
            for (int s = 0; s < tokens; ++s) gvk[s] += c * row[s];
          }
        }
        // ga[t][s] = sum_k go[k][t] v[k][s]
        std::fill(ga.begin(), ga.end(), 0.0f);
        accumulate(ga.data(), tokens, tokens, go.data(), v.data(), dv);
        // Softmax Jacobian, folded with the 1/sqrt(d) logit scale.
        for (int t = 0; t < tokens; ++t) {
          const float* row = a + t * tt;
          float* gat = ga.data() + t * tt;
          float row_dot = 0.0f;
          for (int s = 0; s < tokens; ++s) row_dot += row[s] * gat[s];
          for (int s = 0; s < tokens; ++s) gat[s] = row[s] * (gat[s] - row_dot) * scale;
        }
        // Logits are q_t . q_s, so q receives both the row and column terms.
        for (int t = 0; t < tokens; ++t) {
          for (int s = 0; s < t; ++s) {
            const float sum = ga[t * tt + s] + ga[s * tt + t];
            ga[t * tt + s] = sum;
            ga[s * tt + t] = sum;
          }
          ga[t * tt + t] *= 2.0f;
        }
        // gq[k][t] = sum_s q[k][s] g[s][t]
        std::fill(gq.begin(), gq.end(), 0.0f);
        for (int k = 0; k < d; ++k) {
          float* gqk = gq.data() + k * tt;
          const float* qk = q.data() + k * tt;
          for (int s = 0; s < tokens; ++s) {
            const float c = qk[s];
            const float* gs = ga.data() + s * tt;
            for (int t = 0; t < tokens; ++t) gqk[t] += c * gs[t];
          }
        }
        scatter_add(g_x, n, head * d, d, win, gq.data());
        scatter_add(g_values, n, head * dv, dv, win, gv.data());
      }
    }
  }
  ConvGrads expand = ops::conv2d_backward(x, cfg.expand_spec(), params.expand_weight, g_values, true);
  g_x.add_(expand.x);
  Gradients g;
  g.x = std::move(g_x);
  g.params.expand_weight = std::move(expand.weight);
  g.params.expand_bias = std::move(expand.bias);
  return g;
}

Tensor forward(const Tensor& x, const Config& cfg, const Params& params, Cache* cache) {
  Cache local;
  Cache& c = cache ? *cache : local;
  ew_mhsa(x, cfg, params, &c);
  c.dw_out = ops::conv2d(c.attended, cfg.dw_spec(), params.dw_weight, params.dw_bias);
  const Tensor ffn =
      ops::conv2d(c.dw_out, cfg.project_spec(), params.project_weight, params.project_bias);
  return ops::add(x, ffn);
}

Gradients backward(const Tensor& x, const Config& cfg, const Params& params,
                   const Tensor& grad_out) {
  Cache cache;
  forward(x, cfg, params, &cache);
  return backward(x, cfg, params, cache, grad_out);
}

Gradients backward(const Tensor& x, const Config& cfg, const Params& params, const Cache& cache,
                   const Tensor& grad_out) {
  require_same_shape(x, grad_out, "irmb::backward");
  ConvGrads proj = ops::conv2d_backward(cache.dw_out, cfg.project_spec(), params.project_weight,
                                        grad_out, true);
  ConvGrads dw =
      ops::conv2d_backward(cache.attended, cfg.dw_spec(), params.dw_weight, proj.x, true);
  Gradients g = ew_mhsa_backward(x, cfg, params, cache, dw.x);
  g.x.add_(grad_out);  // skip path
  g.params.dw_weight = std::move(dw.weight);
  g.params.dw_bias = std::move(dw.bias);
  g.params.project_weight = std::move(proj.weight);
  g.params.project_bias = std::move(proj.bias);
  return g;
}

std::int64_t count_params(const Config& cfg) {
  cfg.validate();
  const std::int64_t ev = cfg.value_channels();
  const std::int64_t c = cfg.channels;
  return c * ev + ev + ev * cfg.dw_kernel * cfg.dw_kernel + ev + ev * c + c;
}

std::int64_t count_flops(const Config& cfg, const Shape& in) {
  cfg.validate();
  std::int64_t attention = 0;
  for (const Window& w : partition_windows(in.h, in.w, cfg.window)) {
    const std::int64_t t = w.tokens();
    attention += t * t * (cfg.channels + cfg.value_channels());
  }
  attention *= in.n;
  const Shape vs{in.n, cfg.value_channels(), in.h, in.w};
  return flops_of(cfg.expand_spec().macs(in) + cfg.dw_spec().macs(vs) +
                  cfg.project_spec().macs(vs) + attention);
}

}  // namespace cci::irmb
