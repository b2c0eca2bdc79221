#include <algorithm>
#include <cmath>

#include "cci/error.hpp"
#include "cci/ops.hpp"

namespace cci::ops {

namespace {

float stable_sigmoid(float v) {
  if (v >= 0.0f) return 1.0f / (1.0f + std::exp(-v));
  const float e = std::exp(v);
  return e / (1.0f + e);
}

}  // namespace

Tensor relu(const Tensor& x) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) out[i] = x[i] > 0.0f ? x[i] : 0.0f;
  return out;
}

Tensor relu_backward(const Tensor& x, const Tensor& grad_out) {
  require_same_shape(x, grad_out, "relu_backward");
  Tensor g(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) g[i] = x[i] > 0.0f ? grad_out[i] : 0.0f;
  return g;
}

Tensor sigmoid(const Tensor& x) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) out[i] = stable_sigmoid(x[i]);
  return out;
}

Tensor sigmoid_backward(const Tensor& y, const Tensor& grad_out) {
  require_same_shape(y, grad_out, "sigmoid_backward");
  Tensor g(y.shape());
  for (std::size_t i = 0; i < y.numel(); ++i) g[i] = grad_out[i] * y[i] * (1.0f - y[i]);
  return g;
}

Tensor silu(const Tensor& x) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) out[i] = x[i] * stable_sigmoid(x[i]);
  return out;
}

Tensor silu_backward(const Tensor& x, const Tensor& grad_out) {
  require_same_shape(x, grad_out, "silu_backward");
  Tensor g(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const float s = stable_sigmoid(x[i]);
    g[i] = grad_out[i] * s * (1.0f + x[i] * (1.0f - s));
  }
  return g;
}

namespace {

void check_groups(const Tensor& x, int group_size, const char* op) {
  if (group_size < 1 || x.c() % group_size != 0) {
    throw ConfigError(std::string(op) + ": " + std::to_string(x.c()) +
                      " channels not divisible by group size " + std::to_string(group_size));
  }
}

}  // namespace

Tensor softmax_groups(const Tensor& x, int group_size) {
  check_groups(x, group_size, "softmax_groups");
  Tensor out(x.shape());
  const std::size_t plane = x.shape().plane();
  const int groups = x.c() / group_size;
  std::vector<float> buf(static_cast<std::size_t>(group_size));
  for (int n = 0; n < x.n(); ++n) {
    for (int gi = 0; gi < groups; ++gi) {
      const int c0 = gi * group_size;
      for (std::size_t p = 0; p < plane; ++p) {
        float mx = -INFINITY;
        for (int k = 0; k < group_size; ++k) mx = std::max(mx, x.plane(n, c0 + k)[p]);
        float sum = 0.0f;
        for (int k = 0; k < group_size; ++k) {
          buf[static_cast<std::size_t>(k)] = std::exp(x.plane(n, c0 + k)[p] - mx);
          sum += buf[static_cast<std::size_t>(k)];
        }
        const float inv = 1.0f / sum;
        for (int k = 0; k < group_size; ++k) {
          out.plane(n, c0 + k)[p] = buf[static_cast<std::size_t>(k)] * inv;
        }
      }
    }
  }
  CCI_CHECK_FINITE(out, "softmax_groups");
  return out;
}

Tensor softmax_groups_backward(const Tensor& y, const Tensor& grad_out, int group_size) {
  check_groups(y, group_size, "softmax_groups_backward");
  require_same_shape(y, grad_out, "softmax_groups_backward");
  Tensor g(y.shape());
  const std::size_t plane = y.shape().plane();
  const int groups = y.c() / group_size;
  for (int n = 0; n < y.n(); ++n) {
    for (int gi = 0; gi < groups; ++gi) {
      const int c0 = gi * group_size;
      for (std::size_t p = 0; p < plane; ++p) {
        float dot = 0.0f;
        for (int k = 0; k < group_size; ++k) {
          dot += y.plane(n, c0 + k)[p] * grad_out.plane(n, c0 + k)[p];
        }
        for (int k = 0; k < group_size; ++k) {
          const float yk = y.plane(n, c0 + k)[p];
          g.plane(n, c0 + k)[p] = yk * (grad_out.plane(n, c0 + k)[p] - dot);
        }
      }
    }
  }
  return g;
}

Tensor global_avg_pool(const Tensor& x) {
  Tensor out({x.n(), x.c(), 1, 1});
  const std::size_t plane = x.shape().plane();
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      const float* p = x.plane(n, c);
      double s = 0.0;
      for (std::size_t i = 0; i < plane; ++i) s += p[i];
      out.at(n, c, 0, 0) = static_cast<float>(s / static_cast<double>(plane));
    }
  }
  return out;
}

Tensor global_avg_pool_backward(const Tensor& grad_out, const Shape& input_shape) {
  if (grad_out.shape() != Shape{input_shape.n, input_shape.c, 1, 1}) {
    throw ConfigError("global_avg_pool_backward: grad shape " + grad_out.shape().str());
  }
  Tensor g(input_shape);
  const std::size_t plane = input_shape.plane();
  const float inv = 1.0f / static_cast<float>(plane);
  for (int n = 0; n < input_shape.n; ++n) {
    for (int c = 0; c < input_shape.c; ++c) {
      const float v = grad_out.at(n, c, 0, 0) * inv;
      float* p = g.plane(n, c);
      std::fill(p, p + plane, v);
    }
  }
  return g;
}

namespace {

int per_sample(const Tensor& x) { return x.c() * x.h() * x.w(); }

void check_linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (weight.h() != 1 || weight.w() != 1 || weight.c() != per_sample(x)) {
    throw ConfigError("fully_connected: weight " + weight.shape().str() + " does not accept " +
                      std::to_string(per_sample(x)) + " inputs");
  }
  if (!bias.empty() && bias.shape() != Shape{1, weight.n(), 1, 1}) {
    throw ConfigError("fully_connected: bias shape " + bias.shape().str());
  }
}

}  // namespace

Tensor fully_connected(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  check_linear(x, weight, bias);
  const int in = per_sample(x);
  const int outs = weight.n();
  Tensor out({x.n(), outs, 1, 1});
  for (int n = 0; n < x.n(); ++n) {
    const float* xv = x.data().data() + static_cast<std::size_t>(n) * in;
    for (int o = 0; o < outs; ++o) {
      const float* wv = weight.data().data() + static_cast<std::size_t>(o) * in;
      float acc = bias.empty() ? 0.0f : bias[static_cast<std::size_t>(o)];
      for (int i = 0; i < in; ++i) acc += wv[i] * xv[i];
      out.at(n, o, 0, 0) = acc;
    }
  }
  return out;
}

LinearGrads fully_connected_backward(const Tensor& x, const Tensor& weight,
                                     const Tensor& grad_out, bool with_bias) {
  check_linear(x, weight, {});
  const int in = per_sample(x);
  const int outs = weight.n();
  if (grad_out.shape() != Shape{x.n(), outs, 1, 1}) {
    throw ConfigError("fully_connected_backward: grad shape " + grad_out.shape().str());
  }
  LinearGrads g{Tensor(x.shape()), Tensor(weight.shape()), {}};
  if (with_bias) g.bias = Tensor({1, outs, 1, 1});
  for (int n = 0; n < x.n(); ++n) {
    const float* xv = x.data().data() + static_cast<std::size_t>(n) * in;
    float* gx = g.x.data().data() + static_cast<std::size_t>(n) * in;
    for (int o = 0; o < outs; ++o) {
      const float go = grad_out.at(n, o, 0, 0);
      const float* wv = weight.data().data() + static_cast<std::size_t>(o) * in;
      float* gw = g.weight.data().data() + static_cast<std::size_t>(o) * in;
      for (int i = 0; i < in; ++i) {
        gx[i] += go * wv[i];
        gw[i] += go * xv[i];
      }
      if (with_bias) g.bias[static_cast<std::size_t>(o)] += go;
    }
  }
  return g;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out[i] = a[i] + b[i];
  return out;
}

namespace {

void check_gate(const Tensor& x, const Tensor& gate) {
  if (gate.shape() != Shape{x.n(), x.c(), 1, 1}) {
    throw ConfigError("scale_channels: gate shape " + gate.shape().str() + " for input " +
                      x.shape().str());
  }
}

}  // namespace

Tensor scale_channels(const Tensor& x, const Tensor& gate) {
  check_gate(x, gate);
  Tensor out(x.shape());
  const std::size_t plane = x.shape().plane();
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      const float s = gate.at(n, c, 0, 0);
      const float* p = x.plane(n, c);
      float* o = out.plane(n, c);
      for (std::size_t i = 0; i < plane; ++i) o[i] = p[i] * s;
    }
  }
  return out;
}

ScaleGrads scale_channels_backward(const Tensor& x, const Tensor& gate, const Tensor& grad_out) {
  check_gate(x, gate);
  require_same_shape(x, grad_out, "scale_channels_backward");
  ScaleGrads g{Tensor(x.shape()), Tensor(gate.shape())};
  const std::size_t plane = x.shape().plane();
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      const float s = gate.at(n, c, 0, 0);
      const float* p = x.plane(n, c);
      const float* go = grad_out.plane(n, c);
      float* gx = g.x.plane(n, c);
      double acc = 0.0;
      for (std::size_t i = 0; i < plane; ++i) {
        gx[i] = go[i] * s;
        acc += static_cast<double>(go[i]) * p[i];
      }
      g.gate.at(n, c, 0, 0) = static_cast<float>(acc);
    }
  }
  return g;
}

}  // namespace cci::ops
