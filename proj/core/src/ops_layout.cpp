#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "cci/error.hpp"
#include "cci/ops.hpp"

namespace cci::ops {

Tensor pixel_shuffle(const Tensor& x, int r) {
  if (r < 1 || x.c() % (r * r) != 0) {
    throw ConfigError("pixel_shuffle: " + std::to_string(x.c()) +
                      " channels not divisible by r^2 = " + std::to_string(r * r));
  }
  const int oc = x.c() / (r * r);
  Tensor out({x.n(), oc, x.h() * r, x.w() * r});
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < oc; ++c) {
      for (int di = 0; di < r; ++di) {
        for (int dj = 0; dj < r; ++dj) {
          const float* src = x.plane(n, c * r * r + di * r + dj);
          for (int i = 0; i < x.h(); ++i) {
            for (int j = 0; j < x.w(); ++j) {
              out.at(n, c, r * i + di, r * j + dj) = src[static_cast<std::size_t>(i) * x.w() + j];
            }
          }
        }
      }
    }
  }
  return out;
}

Tensor pixel_unshuffle(const Tensor& x, int r) {
  if (r < 1 || x.h() % r != 0 || x.w() % r != 0) {
    throw ConfigError("pixel_unshuffle: spatial size " + x.shape().str() +
                      " not divisible by r = " + std::to_string(r));
  }
  const int oh = x.h() / r;
  const int ow = x.w() / r;
  Tensor out({x.n(), x.c() * r * r, oh, ow});
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      for (int di = 0; di < r; ++di) {
        for (int dj = 0; dj < r; ++dj) {
          float* dst = out.plane(n, c * r * r + di * r + dj);
          for (int i = 0; i < oh; ++i) {
            for (int j = 0; j < ow; ++j) {
              dst[static_cast<std::size_t>(i) * ow + j] = x.at(n, c, r * i + di, r * j + dj);
            }
          }
        }
      }
    }
  }
  return out;
}

Tensor concat_channels(std::span<const Tensor* const> xs) {
  if (xs.empty()) throw ConfigError("concat_channels: no inputs");
  const Shape& s0 = xs.front()->shape();
  int total = 0;
  for (const Tensor* t : xs) {
    if (t->n() != s0.n || t->h() != s0.h || t->w() != s0.w) {
      throw ConfigError("concat_channels: incompatible shapes " + s0.str() + " and " +
                        t->shape().str());
    }
    total += t->c();
  }
  Tensor out({s0.n, total, s0.h, s0.w});
  const std::size_t plane = s0.plane();
  for (int n = 0; n < s0.n; ++n) {
    int c0 = 0;
    for (const Tensor* t : xs) {
      std::memcpy(out.plane(n, c0), t->plane(n, 0), plane * t->c() * sizeof(float));
      c0 += t->c();
    }
  }
  return out;
}

Tensor concat_channels(std::span<const Tensor> xs) {
  std::vector<const Tensor*> ptrs;
  ptrs.reserve(xs.size());
  for (const Tensor& t : xs) ptrs.push_back(&t);
  return concat_channels(std::span<const Tensor* const>(ptrs));
}

Tensor concat_channels(std::initializer_list<const Tensor*> xs) {
  return concat_channels(std::span<const Tensor* const>(xs.begin(), xs.size()));
}

Tensor stack_batch(std::span<const Tensor> xs) {
  if (xs.empty()) throw ConfigError("stack_batch: no inputs");
  const Shape& s0 = xs.front().shape();
  int total = 0;
  for (const Tensor& t : xs) {
    if (t.c() != s0.c || t.h() != s0.h || t.w() != s0.w) {
      throw ConfigError("stack_batch: incompatible shapes " + s0.str() + " and " + t.shape().str());
    }
    total += t.n();
  }
  Tensor out({total, s0.c, s0.h, s0.w});
  float* dst = out.data().data();
  for (const Tensor& t : xs) {
    std::memcpy(dst, t.data().data(), t.numel() * sizeof(float));
    dst += t.numel();
  }
  return out;
}

std::vector<Tensor> split_channels(const Tensor& x, std::span<const int> sizes) {
  int total = 0;
  for (int s : sizes) {
    if (s < 1) throw ConfigError("split_channels: sizes must be >= 1");
    total += s;
  }
  if (total != x.c()) {
    throw ConfigError("split_channels: sizes sum to " + std::to_string(total) + ", tensor has " +
                      std::to_string(x.c()) + " channels");
  }
  std::vector<Tensor> parts;
  parts.reserve(sizes.size());
  const std::size_t plane = x.shape().plane();
  int c0 = 0;
  for (int s : sizes) {
    Tensor part({x.n(), s, x.h(), x.w()});
    for (int n = 0; n < x.n(); ++n) {
      std::memcpy(part.plane(n, 0), x.plane(n, c0), plane * s * sizeof(float));
    }
    parts.push_back(std::move(part));
    c0 += s;
  }
  return parts;
}

std::vector<Tensor> split_channels(const Tensor& x, std::initializer_list<int> sizes) {
  return split_channels(x, std::span<const int>(sizes.begin(), sizes.size()));
}

Tensor upsample_nearest(const Tensor& x, int r) {
  if (r < 1) throw ConfigError("upsample_nearest: factor must be >= 1");
  Tensor out({x.n(), x.c(), x.h() * r, x.w() * r});
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      const float* src = x.plane(n, c);
      float* dst = out.plane(n, c);
      const int ow = x.w() * r;
      for (int i = 0; i < x.h() * r; ++i) {
        const float* srow = src + static_cast<std::size_t>(i / r) * x.w();
        float* drow = dst + static_cast<std::size_t>(i) * ow;
        for (int j = 0; j < ow; ++j) drow[j] = srow[j / r];
      }
    }
  }
  return out;
}

Tensor upsample_nearest_backward(const Tensor& grad_out, int r) {
  if (r < 1 || grad_out.h() % r != 0 || grad_out.w() % r != 0) {
    throw ConfigError("upsample_nearest_backward: bad factor for " + grad_out.shape().str());
  }
  Tensor g({grad_out.n(), grad_out.c(), grad_out.h() / r, grad_out.w() / r});
  for (int n = 0; n < grad_out.n(); ++n) {
    for (int c = 0; c < grad_out.c(); ++c) {
      const float* src = grad_out.plane(n, c);
      float* dst = g.plane(n, c);
      for (int i = 0; i < grad_out.h(); ++i) {
        for (int j = 0; j < grad_out.w(); ++j) {
          dst[static_cast<std::size_t>(i / r) * g.w() + j / r] +=
              src[static_cast<std::size_t>(i) * grad_out.w() + j];
        }
      }
    }
  }
  return g;
}

namespace {

Shape pool_shape(const Tensor& x, int kernel, int stride, int padding) {
  if (kernel < 1 || stride < 1 || padding < 0 || 2 * padding > kernel) {
    throw ConfigError("max_pool2d: invalid geometry");
  }
  const int oh = (x.h() + 2 * padding - kernel) / stride + 1;
  const int ow = (x.w() + 2 * padding - kernel) / stride + 1;
  if (oh < 1 || ow < 1) throw ConfigError("max_pool2d: output size < 1");
  return {x.n(), x.c(), oh, ow};
}

// Calls visit(output index, argmax input index) for every pooled element.
template <class Visit>
void pool_argmax(const Tensor& x, int kernel, int stride, int padding, const Shape& os,
                 Visit&& visit) {
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      const float* src = x.plane(n, c);
      for (int y = 0; y < os.h; ++y) {
        const int y0 = std::max(0, y * stride - padding);
        const int y1 = std::min(x.h(), y * stride - padding + kernel);
        for (int xo = 0; xo < os.w; ++xo) {
          const int x0 = std::max(0, xo * stride - padding);
          const int x1 = std::min(x.w(), xo * stride - padding + kernel);
          std::size_t best = static_cast<std::size_t>(y0) * x.w() + x0;
          for (int iy = y0; iy < y1; ++iy) {
            for (int ix = x0; ix < x1; ++ix) {
              const std::size_t idx = static_cast<std::size_t>(iy) * x.w() + ix;
              if (src[idx] > src[best]) best = idx;
            }
          }
          visit(n, c, static_cast<std::size_t>(y) * os.w + xo, best);
        }
      }
    }
  }
}

}  // namespace

Tensor max_pool2d(const Tensor& x, int kernel, int stride, int padding) {
  const Shape os = pool_shape(x, kernel, stride, padding);
  Tensor out(os);
  pool_argmax(x, kernel, stride, padding, os,
              [&](int n, int c, std::size_t o, std::size_t i) {
                out.plane(n, c)[o] = x.plane(n, c)[i];
              });
  return out;
}

Tensor max_pool2d_backward(const Tensor& x, int kernel, int stride, int padding,
                           const Tensor& grad_out) {
  const Shape os = pool_shape(x, kernel, stride, padding);
  if (grad_out.shape() != os) throw ConfigError("max_pool2d_backward: grad shape mismatch");
  Tensor g(x.shape());
  pool_argmax(x, kernel, stride, padding, os,
              [&](int n, int c, std::size_t o, std::size_t i) {
                g.plane(n, c)[i] += grad_out.plane(n, c)[o];
              });
  return g;
}

}  // namespace cci::ops
