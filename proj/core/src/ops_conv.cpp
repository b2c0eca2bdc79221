// Dense convolutions go through im2col + sgemm; depthwise convolutions use
// direct loops. All reductions run in a fixed order (sample, group, then the
// BLAS call), so results are bit-stable for a fixed BLAS thread count.

#include <cblas.h>

#include <algorithm>
#include <cmath>

#include "cci/error.hpp"
#include "cci/ops.hpp"

namespace cci {

ConvSpec ConvSpec::same(int in_channels, int out_channels, int kernel, int stride, int dilation,
                        int groups) {
  return {in_channels, out_channels, kernel, stride, dilation * (kernel - 1) / 2, dilation, groups};
}

ConvSpec ConvSpec::depthwise(int channels, int kernel, int dilation) {
  return same(channels, channels, kernel, 1, dilation, channels);
}

void ConvSpec::validate() const {
  if (in_channels < 1 || out_channels < 1 || kernel < 1 || stride < 1 || padding < 0 ||
      dilation < 1 || groups < 1) {
    throw ConfigError("conv: invalid spec (all counts must be positive, padding >= 0)");
  }
  if (in_channels % groups != 0 || out_channels % groups != 0) {
    throw ConfigError("conv: channels " + std::to_string(in_channels) + "->" +
                      std::to_string(out_channels) + " not divisible by groups " +
                      std::to_string(groups));
  }
}

int ConvSpec::out_extent(int in) const {
  const int span = dilation * (kernel - 1) + 1;
  const int numer = in + 2 * padding - span;
  if (numer < 0) return 0;
  return numer / stride + 1;
}

Shape ConvSpec::output_shape(const Shape& in) const {
  validate();
  if (in.c != in_channels) {
    throw ConfigError("conv: input has " + std::to_string(in.c) + " channels, spec expects " +
                      std::to_string(in_channels));
  }
  const int oh = out_extent(in.h);
  const int ow = out_extent(in.w);
  if (oh < 1 || ow < 1) {
    throw ConfigError("conv: output size < 1 for input " + in.str());
  }
  return {in.n, out_channels, oh, ow};
}

std::int64_t ConvSpec::macs(const Shape& in) const {
  const Shape out = output_shape(in);
  return static_cast<std::int64_t>(out.n) * out.c * out.h * out.w * (in_channels / groups) *
         kernel * kernel;
}

Tensor fan_in_uniform(Shape weight_shape, int fan_in, Rng& rng) {
  const float bound = 1.0f / std::sqrt(static_cast<float>(fan_in));
  return Tensor::uniform(weight_shape, -bound, bound, rng);
}

namespace {

void check_weight(const ConvSpec& spec, const Tensor& weight, const Tensor& bias) {
  if (weight.shape() != spec.weight_shape()) {
    throw ConfigError("conv: weight shape " + weight.shape().str() + " expected " +
                      spec.weight_shape().str());
  }
  if (!bias.empty() && bias.shape() != Shape{1, spec.out_channels, 1, 1}) {
    throw ConfigError("conv: bias shape " + bias.shape().str() + " expected 1x" +
                      std::to_string(spec.out_channels) + "x1x1");
  }
}

bool is_pointwise(const ConvSpec& s) {
  return s.kernel == 1 && s.stride == 1 && s.padding == 0;
}

// col has (cin_g * k * k) rows and (oh * ow) columns.
void im2col(const float* src, int channels, int h, int w, const ConvSpec& s, int oh, int ow,
            float* col) {
  const int k = s.kernel;
  for (int c = 0; c < channels; ++c) {
    const float* plane = src + static_cast<std::size_t>(c) * h * w;
    for (int kh = 0; kh < k; ++kh) {
      for (int kw = 0; kw < k; ++kw) {
        float* row = col + ((static_cast<std::size_t>(c) * k + kh) * k + kw) * oh * ow;
        for (int y = 0; y < oh; ++y) {
          const int iy = y * s.stride - s.padding + kh * s.dilation;
          float* dst = row + static_cast<std::size_t>(y) * ow;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + ow, 0.0f);
            continue;
          }
          const float* srow = plane + static_cast<std::size_t>(iy) * w;
          for (int x = 0; x < ow; ++x) {
            const int ix = x * s.stride - s.padding + kw * s.dilation;
            dst[x] = (ix >= 0 && ix < w) ? srow[ix] : 0.0f;
          }
        }
      }
    }
  }
}

void col2im_add(const float* col, int channels, int h, int w, const ConvSpec& s, int oh, int ow,
                float* dst) {
  const int k = s.kernel;
  for (int c = 0; c < channels; ++c) {
    float* plane = dst + static_cast<std::size_t>(c) * h * w;
    for (int kh = 0; kh < k; ++kh) {
      for (int kw = 0; kw < k; ++kw) {
        const float* row = col + ((static_cast<std::size_t>(c) * k + kh) * k + kw) * oh * ow;
        for (int y = 0; y < oh; ++y) {
          const int iy = y * s.stride - s.padding + kh * s.dilation;
          if (iy < 0 || iy >= h) continue;
          float* drow = plane + static_cast<std::size_t>(iy) * w;
          const float* srow = row + static_cast<std::size_t>(y) * ow;
          for (int x = 0; x < ow; ++x) {
            const int ix = x * s.stride - s.padding + kw * s.dilation;
            if (ix >= 0 && ix < w) drow[ix] += srow[x];
          }
        }
      }
    }
  }
}

// Output columns [lo, hi) whose input column for this tap lies inside the row.
struct ColumnRange {
  int lo = 0;
  int hi = 0;
};

ColumnRange valid_columns(const ConvSpec& s, int kw, int in_w, int out_w) {
  const int offset = kw * s.dilation - s.padding;  // ix = xo * stride + offset
  ColumnRange r;
  r.lo = offset >= 0 ? 0 : (-offset + s.stride - 1) / s.stride;
  r.hi = in_w - offset <= 0 ? 0 : std::min(out_w, (in_w - offset + s.stride - 1) / s.stride);
  r.lo = std::min(r.lo, r.hi);
  return r;
}

Tensor depthwise_forward(const Tensor& x, const ConvSpec& s, const Tensor& weight,
                         const Tensor& bias, const Shape& os) {
  Tensor out(os);
  const int k = s.kernel;
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      const float* src = x.plane(n, c);
      const float* wk = weight.plane(c, 0);
      float* dst = out.plane(n, c);
      const float b = bias.empty() ? 0.0f : bias[static_cast<std::size_t>(c)];
      std::fill(dst, dst + os.plane(), b);
      for (int kh = 0; kh < k; ++kh) {
        for (int kw = 0; kw < k; ++kw) {
          const float w = wk[kh * k + kw];
          const ColumnRange cols = valid_columns(s, kw, x.w(), os.w);
          const int offset = kw * s.dilation - s.padding;
          for (int y = 0; y < os.h; ++y) {
            const int iy = y * s.stride - s.padding + kh * s.dilation;
            if (iy < 0 || iy >= x.h()) continue;
            const float* row = src + static_cast<std::ptrdiff_t>(iy) * x.w() + cols.lo * s.stride + offset;
            float* drow = dst + static_cast<std::ptrdiff_t>(y) * os.w + cols.lo;
            const int count = cols.hi - cols.lo;
            if (s.stride == 1) {
              for (int i = 0; i < count; ++i) drow[i] += w * row[i];
            } else {
              for (int i = 0; i < count; ++i) drow[i] += w * row[i * s.stride];
            }
          }
        }
      }
    }
  }
  return out;
}

ConvGrads depthwise_backward(const Tensor& x, const ConvSpec& s, const Tensor& weight,
                             const Tensor& grad_out, bool with_bias, bool input_grad) {
  ConvGrads g;
  g.weight = Tensor(weight.shape());
  if (with_bias) g.bias = Tensor({1, s.out_channels, 1, 1});
  if (input_grad) g.x = Tensor(x.shape());
  const int k = s.kernel;
  const int oh = grad_out.h();
  const int ow = grad_out.w();
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      const float* src = x.plane(n, c);
      const float* go = grad_out.plane(n, c);
      const float* wk = weight.plane(c, 0);
      float* gw = g.weight.plane(c, 0);
      float* gx = input_grad ? g.x.plane(n, c) : nullptr;
      if (with_bias) {
        double bsum = 0.0;
        for (std::size_t i = 0; i < grad_out.shape().plane(); ++i) bsum += go[i];
        g.bias[static_cast<std::size_t>(c)] += static_cast<float>(bsum);
      }
      for (int kh = 0; kh < k; ++kh) {
        for (int kw = 0; kw < k; ++kw) {
          const float w = wk[kh * k + kw];
          const ColumnRange cols = valid_columns(s, kw, x.w(), ow);
          const int offset = kw * s.dilation - s.padding;
          float acc = 0.0f;
          for (int y = 0; y < oh; ++y) {
            const int iy = y * s.stride - s.padding + kh * s.dilation;
            if (iy < 0 || iy >= x.h()) continue;
            const std::ptrdiff_t base = static_cast<std::ptrdiff_t>(iy) * x.w() + cols.lo * s.stride + offset;
            const float* row = src + base;
            const float* grow = go + static_cast<std::ptrdiff_t>(y) * ow + cols.lo;
            const int count = cols.hi - cols.lo;
            const int st = s.stride;
            for (int i = 0; i < count; ++i) acc += grow[i] * row[i * st];
            if (gx) {
              float* gxrow = gx + base;
              for (int i = 0; i < count; ++i) gxrow[i * st] += grow[i] * w;
            }
          }
          gw[kh * k + kw] += acc;
        }
      }
    }
  }
  return g;
}

}  // namespace

namespace ops {

Tensor conv2d(const Tensor& x, const ConvSpec& spec, const Tensor& weight, const Tensor& bias) {
  const Shape os = spec.output_shape(x.shape());
  check_weight(spec, weight, bias);
  if (spec.is_depthwise()) {
    Tensor out = depthwise_forward(x, spec, weight, bias, os);
    CCI_CHECK_FINITE(out, "conv2d");
    return out;
  }

  Tensor out(os);
  const int g = spec.groups;
  const int cin_g = spec.in_channels / g;
  const int cout_g = spec.out_channels / g;
  const int kk = cin_g * spec.kernel * spec.kernel;
  const int ohw = os.h * os.w;
  const bool pointwise = is_pointwise(spec);
  std::vector<float> col(pointwise ? 0 : static_cast<std::size_t>(kk) * ohw);

  for (int n = 0; n < x.n(); ++n) {
    for (int gi = 0; gi < g; ++gi) {
      const float* src = x.plane(n, gi * cin_g);
      const float* b_mat = src;
      if (!pointwise) {
        im2col(src, cin_g, x.h(), x.w(), spec, os.h, os.w, col.data());
        b_mat = col.data();
      }
      float* dst = out.plane(n, gi * cout_g);
      const float* w = weight.plane(gi * cout_g, 0);
      cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, cout_g, ohw, kk, 1.0f, w, kk, b_mat,
                  ohw, 0.0f, dst, ohw);
      if (!bias.empty()) {
        for (int co = 0; co < cout_g; ++co) {
          const float b = bias[static_cast<std::size_t>(gi * cout_g + co)];
          float* p = dst + static_cast<std::size_t>(co) * ohw;
          for (int i = 0; i < ohw; ++i) p[i] += b;
        }
      }
    }
  }
  CCI_CHECK_FINITE(out, "conv2d");
  return out;
}

ConvGrads conv2d_backward(const Tensor& x, const ConvSpec& spec, const Tensor& weight,
                          const Tensor& grad_out, bool with_bias, bool input_grad) {
  const Shape os = spec.output_shape(x.shape());
  if (grad_out.shape() != os) {
    throw ConfigError("conv2d_backward: grad_out shape " + grad_out.shape().str() +
                      " expected " + os.str());
  }
  check_weight(spec, weight, {});
  if (spec.is_depthwise()) {
    return depthwise_backward(x, spec, weight, grad_out, with_bias, input_grad);
  }

  ConvGrads g;
  g.weight = Tensor(weight.shape());
  if (with_bias) g.bias = Tensor({1, spec.out_channels, 1, 1});
  if (input_grad) g.x = Tensor(x.shape());

  const int groups = spec.groups;
  const int cin_g = spec.in_channels / groups;
  const int cout_g = spec.out_channels / groups;
  const int kk = cin_g * spec.kernel * spec.kernel;
  const int ohw = os.h * os.w;
  const bool pointwise = is_pointwise(spec);
  std::vector<float> col(pointwise ? 0 : static_cast<std::size_t>(kk) * ohw);
  std::vector<float> gcol(pointwise || !input_grad ? 0 : static_cast<std::size_t>(kk) * ohw);

  for (int n = 0; n < x.n(); ++n) {
    for (int gi = 0; gi < groups; ++gi) {
      const float* src = x.plane(n, gi * cin_g);
      const float* b_mat = src;
      if (!pointwise) {
        im2col(src, cin_g, x.h(), x.w(), spec, os.h, os.w, col.data());
        b_mat = col.data();
      }
      const float* go = grad_out.plane(n, gi * cout_g);
      const float* w = weight.plane(gi * cout_g, 0);
      float* gw = g.weight.plane(gi * cout_g, 0);
      cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasTrans, cout_g, kk, ohw, 1.0f, go, ohw, b_mat,
                  ohw, 1.0f, gw, kk);
      if (input_grad) {
        float* gx = g.x.plane(n, gi * cin_g);
        if (pointwise) {
          cblas_sgemm(CblasRowMajor, CblasTrans, CblasNoTrans, kk, ohw, cout_g, 1.0f, w, kk, go,
                      ohw, 1.0f, gx, ohw);
        } else {
          cblas_sgemm(CblasRowMajor, CblasTrans, CblasNoTrans, kk, ohw, cout_g, 1.0f, w, kk, go,
                      ohw, 0.0f, gcol.data(), ohw);
          col2im_add(gcol.data(), cin_g, x.h(), x.w(), spec, os.h, os.w, gx);
        }
      }
      if (with_bias) {
        for (int co = 0; co < cout_g; ++co) {
          const float* p = go + static_cast<std::size_t>(co) * ohw;
          float s = 0.0f;
          for (int i = 0; i < ohw; ++i) s += p[i];
          g.bias[static_cast<std::size_t>(gi * cout_g + co)] += s;
        }
      }
    }
  }
  return g;
}

}  // namespace ops
}  // namespace cci
