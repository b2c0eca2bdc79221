#include "cci/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <numeric>

#include "cci/c2f.hpp"
#include "cci/carafe.hpp"
#include "cci/cgd.hpp"
#include "cci/error.hpp"
#include "cci/irmb.hpp"
#include "cci/ops.hpp"

namespace cci::gradcheck {

bool Report::passed() const {
  return std::all_of(entries.begin(), entries.end(), [](const Entry& e) { return e.passed; });
}

std::string Report::format() const {
  std::string out;
  char line[256];
  int failed = 0;
  for (const Entry& e : entries) {
    std::snprintf(line, sizeof line, "%-4s %-11s %-22s max_rel_err %.3e  eps %.0e  configs %zu  [%s]\n",
                  e.passed ? "PASS" : "FAIL", e.module.c_str(), e.name.c_str(), e.max_rel_error,
                  e.epsilon, e.shapes.size(), e.shapes.empty() ? "" : e.shapes.front().c_str());
    out += line;
    if (!e.passed) ++failed;
  }
  std::snprintf(line, sizeof line, "%zu checks, %d failed, tolerance %.0e (floor %.0e)\n",
                entries.size(), failed, kTolerance, kFloor);
  out += line;
  return out;
}

namespace {

double weighted_sum(const Tensor& y, const Tensor& r) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.numel(); ++i) s += static_cast<double>(y[i]) * r[i];
  return s;
}

std::vector<std::size_t> sample_indices(std::size_t n, int samples, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (static_cast<int>(n) <= samples) return idx;
  for (int i = 0; i < samples; ++i) {
    const auto j = std::uniform_int_distribution<std::size_t>(static_cast<std::size_t>(i), n - 1)(rng);
    std::swap(idx[static_cast<std::size_t>(i)], idx[j]);
  }
  idx.resize(static_cast<std::size_t>(samples));
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

double check_case(const Case& c, Rng& rng, int samples, double step) {
  const Tensor y = c.forward();
  const Tensor r = Tensor::normal(y.shape(), rng);
  const std::vector<Tensor> analytic = c.backward(r);
  if (analytic.size() != c.wrt.size()) throw ConfigError("check_case: gradient count mismatch");
  double diff = 0.0;
  double a_max = 0.0;
  double n_max = 0.0;
  for (std::size_t k = 0; k < c.wrt.size(); ++k) {
    Tensor& t = *c.wrt[k].second;
    require_same_shape(t, analytic[k], c.wrt[k].first.c_str());
    for (std::size_t i : sample_indices(t.numel(), samples, rng)) {
      const float orig = t[i];
      t[i] = static_cast<float>(orig + step);
      const double up = weighted_sum(c.forward(), r);
      t[i] = static_cast<float>(orig - step);
      const double down = weighted_sum(c.forward(), r);
      t[i] = orig;
      // Divide by the step actually taken in float.
      const double taken = static_cast<double>(static_cast<float>(orig + step)) -
                           static_cast<double>(static_cast<float>(orig - step));
      const double numeric = (up - down) / taken;
      const double a = analytic[k][i];
      diff = std::max(diff, std::abs(a - numeric));
      a_max = std::max(a_max, std::abs(a));
      n_max = std::max(n_max, std::abs(numeric));
    }
  }
  return diff / std::max({a_max, n_max, kFloor});
}

namespace {

constexpr int kConfigs = 5;
constexpr float kKinkMargin = 5e-2f;

using Builder = std::function<Case(Rng&, int)>;

struct Spec {
  const char* module;
  const char* name;
  Builder build;
};

float min_abs(const Tensor& t) {
  float m = INFINITY;
  for (float v : t.data()) m = std::min(m, std::abs(v));
  return m;
}

Tensor normal(Shape s, Rng& rng) { return Tensor::normal(s, rng); }

/// Draws until every element is at least `margin` away from zero.
Tensor normal_away_from_zero(Shape s, Rng& rng, float margin = kKinkMargin) {
  for (;;) {
    Tensor t = normal(s, rng);
    if (min_abs(t) >= margin) return t;
  }
}

int pick(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

std::string shape_text(const Tensor& x) {
  const Shape& s = x.shape();
  return std::to_string(s.n) + "x" + std::to_string(s.c) + "x" + std::to_string(s.h) + "x" +
         std::to_string(s.w);
}

// Every case owns its tensors through shared state captured by the closures.
template <class State>
std::shared_ptr<State> share(State s) {
  return std::make_shared<State>(std::move(s));
}

Case conv_case(Rng& rng, int config) {
  struct S {
    ConvSpec spec;
    Tensor x, w, b;
  };
  const int n = pick(rng, 1, 2);
  const int h = pick(rng, 4, 7);
  const int w = pick(rng, 4, 7);
  ConvSpec spec;
  switch (config % kConfigs) {
    case 0: spec = ConvSpec::same(3, 4, 3); break;
    case 1: spec = ConvSpec::same(2, 3, 3, 2); break;
    case 2: spec = ConvSpec::same(2, 2, 3, 1, 2); break;
    case 3: spec = ConvSpec::same(4, 6, 3, 1, 1, 2); break;
    default: spec = ConvSpec::depthwise(4, 3, 1 + config % 2); break;
  }
  auto s = share(S{spec, normal({n, spec.in_channels, h, w}, rng),
                   normal(spec.weight_shape(), rng), normal({1, spec.out_channels, 1, 1}, rng)});
  Case c;
  c.shape = shape_text(s->x) + " k" + std::to_string(spec.kernel) + " s" + std::to_string(spec.stride) +
            " d" + std::to_string(spec.dilation) + " g" + std::to_string(spec.groups);
  c.forward = [s] { return ops::conv2d(s->x, s->spec, s->w, s->b); };
  c.wrt = {{"x", &s->x}, {"weight", &s->w}, {"bias", &s->b}};
  c.backward = [s](const Tensor& r) {
    ConvGrads g = ops::conv2d_backward(s->x, s->spec, s->w, r, true);
    return std::vector<Tensor>{g.x, g.weight, g.bias};
  };
  return c;
}

Case batch_norm_case(Rng& rng, int) {
  struct S {
    Tensor x;
    BatchNormParams bn;
  };
  const int ch = pick(rng, 1, 4);
  auto s = share(S{normal({pick(rng, 2, 3), ch, pick(rng, 2, 4), pick(rng, 2, 4)}, rng),
                   BatchNormParams::identity(ch)});
  s->bn.gamma = normal({1, ch, 1, 1}, rng);
  s->bn.beta = normal({1, ch, 1, 1}, rng);
  Case c;
  c.shape = shape_text(s->x);
  c.forward = [s] {
    BatchNormParams p = s->bn;
    return ops::batch_norm(s->x, p, Mode::train);
  };
  c.wrt = {{"x", &s->x}, {"gamma", &s->bn.gamma}, {"beta", &s->bn.beta}};
  c.backward = [s](const Tensor& r) {
    BatchNormParams p = s->bn;
    BatchNormCache cache;
    ops::batch_norm(s->x, p, Mode::train, &cache);
    BatchNormGrads g = ops::batch_norm_backward(cache, s->bn.gamma, r);
    return std::vector<Tensor>{g.x, g.gamma, g.beta};
  };
  return c;
}

Shape small_shape(Rng& rng) { return {pick(rng, 1, 2), pick(rng, 1, 4), pick(rng, 2, 5), pick(rng, 2, 5)}; }

Case unary_case(Rng& rng, Tensor (*fwd)(const Tensor&),
                Tensor (*bwd)(const Tensor&, const Tensor&), bool pass_output, bool kink) {
  struct S {
    Tensor x;
  };
  const Shape shape = small_shape(rng);
  auto s = share(S{kink ? normal_away_from_zero(shape, rng) : normal(shape, rng)});
  Case c;
  c.shape = shape_text(s->x);
  c.forward = [s, fwd] { return fwd(s->x); };
  c.wrt = {{"x", &s->x}};
  c.backward = [s, fwd, bwd, pass_output](const Tensor& r) {
    return std::vector<Tensor>{bwd(pass_output ? fwd(s->x) : s->x, r)};
  };
  return c;
}

Case softmax_case(Rng& rng, int) {
  struct S {
    Tensor x;
    int group;
  };
  const int group = pick(rng, 2, 4);
  auto s = share(S{normal({pick(rng, 1, 2), group * pick(rng, 1, 3), pick(rng, 1, 4), pick(rng, 1, 4)}, rng), group});
  Case c;
  c.shape = shape_text(s->x) + " group " + std::to_string(group);
  c.forward = [s] { return ops::softmax_groups(s->x, s->group); };
  c.wrt = {{"x", &s->x}};
  c.backward = [s](const Tensor& r) {
    return std::vector<Tensor>{ops::softmax_groups_backward(ops::softmax_groups(s->x, s->group), r, s->group)};
  };
  return c;
}

Case pixel_shuffle_case(Rng& rng, int config) {
  struct S {
    Tensor x;
    int r;
    bool inverse;
  };
  const int f = pick(rng, 1, 3);
  const bool inverse = config % 2 == 1;
  const int c0 = pick(rng, 1, 2);
  const int h = pick(rng, 1, 3);
  const int w = pick(rng, 1, 3);
  const Shape shape = inverse ? Shape{1, c0, h * f, w * f} : Shape{1, c0 * f * f, h, w};
  auto s = share(S{normal(shape, rng), f, inverse});
  Case c;
  c.shape = shape_text(s->x) + (inverse ? " unshuffle r" : " shuffle r") + std::to_string(f);
  c.forward = [s] { return s->inverse ? ops::pixel_unshuffle(s->x, s->r) : ops::pixel_shuffle(s->x, s->r); };
  c.wrt = {{"x", &s->x}};
  c.backward = [s](const Tensor& r) {
    return std::vector<Tensor>{s->inverse ? ops::pixel_shuffle(r, s->r) : ops::pixel_unshuffle(r, s->r)};
  };
  return c;
}

Case gap_case(Rng& rng, int) {
  struct S {
    Tensor x;
  };
  auto s = share(S{normal(small_shape(rng), rng)});
  Case c;
  c.shape = shape_text(s->x);
  c.forward = [s] { return ops::global_avg_pool(s->x); };
  c.wrt = {{"x", &s->x}};
  c.backward = [s](const Tensor& r) {
    return std::vector<Tensor>{ops::global_avg_pool_backward(r, s->x.shape())};
  };
  return c;
}

Case fc_case(Rng& rng, int) {
  struct S {
    Tensor x, w, b;
  };
  const Shape xs = {pick(rng, 1, 3), pick(rng, 1, 4), pick(rng, 1, 2), pick(rng, 1, 2)};
  const int in = xs.c * xs.h * xs.w;
  const int out = pick(rng, 1, 5);
  auto s = share(S{normal(xs, rng), normal({out, in, 1, 1}, rng), normal({1, out, 1, 1}, rng)});
  Case c;
  c.shape = shape_text(s->x) + " -> " + std::to_string(out);
  c.forward = [s] { return ops::fully_connected(s->x, s->w, s->b); };
  c.wrt = {{"x", &s->x}, {"weight", &s->w}, {"bias", &s->b}};
  c.backward = [s](const Tensor& r) {
    LinearGrads g = ops::fully_connected_backward(s->x, s->w, r, true);
    return std::vector<Tensor>{g.x, g.weight, g.bias};
  };
  return c;
}

Case concat_split_case(Rng& rng, int) {
  struct S {
    Tensor a, b;
  };
  const int n = pick(rng, 1, 2);
  const int h = pick(rng, 1, 4);
  const int w = pick(rng, 1, 4);
  auto s = share(S{normal({n, pick(rng, 1, 3), h, w}, rng), normal({n, pick(rng, 1, 3), h, w}, rng)});
  Case c;
  c.shape = shape_text(s->a) + " + " + shape_text(s->b);
  // Concatenate, split at a different boundary and swap the halves, so both
  // directions carry a non-trivial index map.
  c.forward = [s] {
    const Tensor cat = ops::concat_channels({&s->a, &s->b});
    const int first = cat.c() == 1 ? 1 : cat.c() - 1;
    if (first == cat.c()) return cat;
    std::vector<Tensor> parts = ops::split_channels(cat, {first, cat.c() - first});
    return ops::concat_channels({&parts[1], &parts[0]});
  };
  c.wrt = {{"a", &s->a}, {"b", &s->b}};
  c.backward = [s](const Tensor& r) {
    const int total = s->a.c() + s->b.c();
    Tensor g_cat = r;
    if (total > 1) {
      const int first = total - 1;
      std::vector<Tensor> parts = ops::split_channels(r, {total - first, first});
      g_cat = ops::concat_channels({&parts[1], &parts[0]});
    }
    return ops::split_channels(g_cat, {s->a.c(), s->b.c()});
  };
  return c;
}

Case upsample_case(Rng& rng, int) {
  struct S {
    Tensor x;
    int r;
  };
  auto s = share(S{normal(small_shape(rng), rng), pick(rng, 1, 3)});
  Case c;
  c.shape = shape_text(s->x) + " x" + std::to_string(s->r);
  c.forward = [s] { return ops::upsample_nearest(s->x, s->r); };
  c.wrt = {{"x", &s->x}};
  c.backward = [s](const Tensor& r) { return std::vector<Tensor>{ops::upsample_nearest_backward(r, s->r)}; };
  return c;
}

Case max_pool_case(Rng& rng, int config) {
  struct S {
    Tensor x;
    int k, stride, pad;
  };
  const Shape shape = {1, pick(rng, 1, 2), pick(rng, 3, 6), pick(rng, 3, 6)};
  // Distinct values 0.05 apart: a 1e-3 step never changes a window's argmax.
  std::vector<float> values(shape.numel());
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = 0.05f * static_cast<float>(i);
  std::shuffle(values.begin(), values.end(), rng);
  const int k = config % 2 == 0 ? 3 : 2;
  auto s = share(S{Tensor(shape, values), k, 1 + config % 2, k / 2});
  Case c;
  c.shape = shape_text(s->x) + " k" + std::to_string(k) + " s" + std::to_string(s->stride);
  c.forward = [s] { return ops::max_pool2d(s->x, s->k, s->stride, s->pad); };
  c.wrt = {{"x", &s->x}};
  c.backward = [s](const Tensor& r) {
    return std::vector<Tensor>{ops::max_pool2d_backward(s->x, s->k, s->stride, s->pad, r)};
  };
  return c;
}

Case scale_case(Rng& rng, int) {
  struct S {
    Tensor x, gate;
  };
  const Shape xs = small_shape(rng);
  auto s = share(S{normal(xs, rng), normal({xs.n, xs.c, 1, 1}, rng)});
  Case c;
  c.shape = shape_text(s->x);
  c.forward = [s] { return ops::scale_channels(s->x, s->gate); };
  c.wrt = {{"x", &s->x}, {"gate", &s->gate}};
  c.backward = [s](const Tensor& r) {
    ops::ScaleGrads g = ops::scale_channels_backward(s->x, s->gate, r);
    return std::vector<Tensor>{g.x, g.gate};
  };
  return c;
}

Case add_case(Rng& rng, int) {
  struct S {
    Tensor a, b;
  };
  const Shape xs = small_shape(rng);
  auto s = share(S{normal(xs, rng), normal(xs, rng)});
  Case c;
  c.shape = shape_text(s->a);
  c.forward = [s] { return ops::add(s->a, s->b); };
  c.wrt = {{"a", &s->a}, {"b", &s->b}};
  c.backward = [](const Tensor& r) { return std::vector<Tensor>{r, r}; };
  return c;
}

template <class P>
void add_params(Case& c, P& params, const std::string& prefix = {}) {
  params.visit([&](const std::string& name, Tensor& t, bool trainable) {
    if (trainable) c.wrt.emplace_back(prefix + name, &t);
  });
}

template <class P>
std::vector<Tensor> collect(P& grads, Tensor x) {
  std::vector<Tensor> out{std::move(x)};
  grads.visit([&](const std::string&, Tensor& t, bool trainable) {
    if (trainable) out.push_back(t);
  });
  return out;
}

template <class P>
void randomize(P& params, Rng& rng, float scale) {
  params.visit([&](const std::string&, Tensor& t, bool trainable) {
    if (!trainable) return;
    t = Tensor::normal(t.shape(), rng, 0.0f, scale);
  });
}

Case carafe_case(Rng& rng, int config) {
  struct S {
    carafe::Config cfg;
    Tensor x;
    carafe::Params p;
  };
  carafe::Config cfg;
  cfg.channels = pick(rng, 1, 4);
  cfg.k_up = config % 2 == 0 ? 3 : 5;
  cfg.k_encoder = config % 3 == 0 ? 1 : 3;
  cfg.c_mid = pick(rng, 1, 3);
  cfg.sigma = config == 4 ? 1 : 2;
  auto s = share(S{cfg, normal({pick(rng, 1, 2), cfg.channels, pick(rng, 2, 4), pick(rng, 2, 4)}, rng),
                   carafe::Params::init(cfg, rng)});
  randomize(s->p, rng, 0.5f);
  Case c;
  c.shape = shape_text(s->x) + " k_up" + std::to_string(cfg.k_up) + " s" + std::to_string(cfg.sigma);
  c.forward = [s] { return carafe::forward(s->x, s->cfg, s->p); };
  c.wrt = {{"x", &s->x}};
  add_params(c, s->p);
  c.backward = [s](const Tensor& r) {
    carafe::Gradients g = carafe::backward(s->x, s->cfg, s->p, r);
    return collect(g.params, g.x);
  };
  return c;
}

Case reassemble_case(Rng& rng, int) {
  struct S {
    carafe::Config cfg;
    Tensor x, kernels;
  };
  carafe::Config cfg;
  cfg.channels = pick(rng, 1, 3);
  cfg.k_up = pick(rng, 0, 1) == 0 ? 3 : 5;
  cfg.sigma = pick(rng, 1, 2);
  const Tensor x = normal({1, cfg.channels, pick(rng, 2, 4), pick(rng, 2, 4)}, rng);
  auto s = share(S{cfg, x, normal({1, cfg.taps(), x.h() * cfg.sigma, x.w() * cfg.sigma}, rng)});
  Case c;
  c.shape = shape_text(s->x) + " k_up" + std::to_string(cfg.k_up);
  c.forward = [s] { return carafe::reassemble(s->x, s->kernels, s->cfg); };
  c.wrt = {{"x", &s->x}, {"kernels", &s->kernels}};
  c.backward = [s](const Tensor& r) {
    carafe::ReassembleGrads g = carafe::reassemble_backward(s->x, s->kernels, s->cfg, r);
    return std::vector<Tensor>{g.x, g.kernels};
  };
  return c;
}

bool cgd_clear_of_kinks(const cgd::Cache& cache) {
  return min_abs(cache.reduce_bn_out) >= kKinkMargin && min_abs(cache.joint_bn_out) >= kKinkMargin &&
         min_abs(cache.hidden_pre) >= kKinkMargin;
}

Case cgd_case(Rng& rng, int config) {
  struct S {
    cgd::Config cfg;
    Tensor x;
    cgd::Params p;
  };
  cgd::Config cfg;
  cfg.in_channels = pick(rng, 2, 4);
  cfg.out_channels = 2 * pick(rng, 2, 4);
  cfg.reduction = pick(rng, 1, 4);
  cfg.dilation = 1 + config % 2;
  cfg.reduce_kernel = config == 3 ? 3 : 1;
  cfg.depthwise_branches = config == 4;
  const Shape xs{pick(rng, 1, 2), cfg.in_channels, pick(rng, 5, 7), pick(rng, 5, 7)};
  for (;;) {
    auto s = share(S{cfg, normal(xs, rng), cgd::Params::init(cfg, rng)});
    randomize(s->p, rng, 0.5f);
    cgd::Params scratch = s->p;
    cgd::Cache cache;
    cgd::forward(s->x, cfg, scratch, Mode::train, &cache);
    if (!cgd_clear_of_kinks(cache)) continue;
    Case c;
    c.shape = shape_text(s->x) + " -> " + std::to_string(cfg.out()) + " r" + std::to_string(cfg.dilation) +
              (cfg.depthwise_branches ? " dw" : "");
    c.forward = [s] {
      cgd::Params p = s->p;
      return cgd::forward(s->x, s->cfg, p, Mode::train);
    };
    c.wrt = {{"x", &s->x}};
    add_params(c, s->p);
    c.backward = [s](const Tensor& r) {
      cgd::Gradients g = cgd::backward(s->x, s->cfg, s->p, r, Mode::train);
      return collect(g.params, g.x);
    };
    return c;
  }
}

irmb::Config small_irmb(Rng& rng, int config) {
  irmb::Config cfg;
  cfg.heads = pick(rng, 1, 2);
  cfg.channels = cfg.heads * pick(rng, 1, 3);
  cfg.expand_ratio = pick(rng, 1, 3);
  cfg.window = 2 + config % 3;
  return cfg;
}

Case ew_mhsa_case(Rng& rng, int config) {
  struct S {
    irmb::Config cfg;
    Tensor x;
    irmb::Params p;
  };
  const irmb::Config cfg = small_irmb(rng, config);
  auto s = share(S{cfg, normal({pick(rng, 1, 2), cfg.channels, pick(rng, 2, 5), pick(rng, 2, 5)}, rng),
                   irmb::Params::init(cfg, rng)});
  randomize(s->p, rng, 0.5f);
  Case c;
  c.shape = shape_text(s->x) + " h" + std::to_string(cfg.heads) + " e" + std::to_string(cfg.expand_ratio) +
            " w" + std::to_string(cfg.window);
  c.forward = [s] { return irmb::ew_mhsa(s->x, s->cfg, s->p); };
  c.wrt = {{"x", &s->x}, {"expand.weight", &s->p.expand_weight}, {"expand.bias", &s->p.expand_bias}};
  c.backward = [s](const Tensor& r) {
    irmb::Cache cache;
    irmb::ew_mhsa(s->x, s->cfg, s->p, &cache);
    irmb::Gradients g = irmb::ew_mhsa_backward(s->x, s->cfg, s->p, cache, r);
    return std::vector<Tensor>{g.x, g.params.expand_weight, g.params.expand_bias};
  };
  return c;
}

Case irmb_case(Rng& rng, int config) {
  struct S {
    irmb::Config cfg;
    Tensor x;
    irmb::Params p;
  };
  const irmb::Config cfg = small_irmb(rng, config);
  auto s = share(S{cfg, normal({pick(rng, 1, 2), cfg.channels, pick(rng, 2, 5), pick(rng, 2, 5)}, rng),
                   irmb::Params::init(cfg, rng)});
  randomize(s->p, rng, 0.5f);
  Case c;
  c.shape = shape_text(s->x) + " h" + std::to_string(cfg.heads) + " e" + std::to_string(cfg.expand_ratio) +
            " w" + std::to_string(cfg.window);
  c.forward = [s] { return irmb::forward(s->x, s->cfg, s->p); };
  c.wrt = {{"x", &s->x}};
  add_params(c, s->p);
  c.backward = [s](const Tensor& r) {
    irmb::Gradients g = irmb::backward(s->x, s->cfg, s->p, r);
    return collect(g.params, g.x);
  };
  return c;
}

Case c2f_irmb_case(Rng& rng, int config) {
  struct S {
    c2f::Config cfg;
    Tensor x;
    c2f::Params p;
  };
  c2f::Config cfg;
  cfg.in_channels = pick(rng, 2, 4);
  cfg.out_channels = pick(rng, 2, 4);
  cfg.hidden = 2 * pick(rng, 1, 2);
  cfg.blocks = 1 + config % 2;
  cfg.kind = c2f::BlockKind::irmb;
  cfg.irmb.heads = 1;
  cfg.irmb.expand_ratio = pick(rng, 1, 2);
  cfg.irmb.window = 2 + config % 3;
  auto s = share(S{cfg, normal({2, cfg.in_channels, pick(rng, 3, 5), pick(rng, 3, 5)}, rng),
                   c2f::Params::init(cfg, rng)});
  randomize(s->p, rng, 0.5f);
  Case c;
  c.shape = shape_text(s->x) + " n" + std::to_string(cfg.blocks);
  c.forward = [s] {
    c2f::Params p = s->p;
    return c2f::forward(s->x, s->cfg, p, Mode::eval);
  };
  c.wrt = {{"x", &s->x}};
  add_params(c, s->p);
  c.backward = [s](const Tensor& r) {
    c2f::Params p = s->p;
    c2f::Cache cache;
    c2f::forward(s->x, s->cfg, p, Mode::eval, &cache);
    c2f::Gradients g = c2f::backward(s->x, s->cfg, s->p, cache, r);
    return collect(g.params, g.x);
  };
  return c;
}

const std::vector<Spec>& suite() {
  static const std::vector<Spec> specs = {
      {"tensor-core", "conv2d", conv_case},
      {"tensor-core", "batch_norm", batch_norm_case},
      {"tensor-core", "relu",
       [](Rng& rng, int) { return unary_case(rng, ops::relu, ops::relu_backward, false, true); }},
      {"tensor-core", "sigmoid",
       [](Rng& rng, int) { return unary_case(rng, ops::sigmoid, ops::sigmoid_backward, true, false); }},
      {"tensor-core", "silu",
       [](Rng& rng, int) { return unary_case(rng, ops::silu, ops::silu_backward, false, false); }},
      {"tensor-core", "softmax_groups", softmax_case},
      {"tensor-core", "pixel_shuffle", pixel_shuffle_case},
      {"tensor-core", "global_avg_pool", gap_case},
      {"tensor-core", "fully_connected", fc_case},
      {"tensor-core", "concat_split", concat_split_case},
      {"tensor-core", "upsample_nearest", upsample_case},
      {"tensor-core", "max_pool2d", max_pool_case},
      {"tensor-core", "scale_channels", scale_case},
      {"tensor-core", "add", add_case},
      {"carafe", "reassemble", reassemble_case},
      {"carafe", "carafe", carafe_case},
      {"cgd", "cgd", cgd_case},
      {"irmb", "ew_mhsa", ew_mhsa_case},
      {"irmb", "irmb", irmb_case},
      {"irmb", "c2f_irmb", c2f_irmb_case},
  };
  return specs;
}

}  // namespace

Report run(std::uint64_t seed, std::string_view filter) {
  const auto& specs = suite();
  const auto selected = [&](const Spec& s) {
    return filter.empty() || filter == s.module || filter == s.name;
  };
  if (std::none_of(specs.begin(), specs.end(), selected)) {
    throw ConfigError("gradcheck: no check matches filter '" + std::string(filter) + "'");
  }
  Report report;
  for (std::size_t k = 0; k < specs.size(); ++k) {
    const Spec& spec = specs[k];
    if (!selected(spec)) continue;
    // Each entry gets its own stream so filtering does not change results.
    Rng rng(seed * 1000003ULL + k);
    Entry e;
    e.module = spec.module;
    e.name = spec.name;
    for (int config = 0; config < kConfigs; ++config) {
      const Case c = spec.build(rng, config);
      e.max_rel_error = std::max(e.max_rel_error, check_case(c, rng));
      e.shapes.push_back(c.shape);
    }
    e.passed = e.max_rel_error <= kTolerance;
    report.entries.push_back(std::move(e));
  }
  return report;
}

}  // namespace cci::gradcheck
