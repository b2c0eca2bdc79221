#include "cci/cgd.hpp"

#include "cci/error.hpp"

namespace cci::cgd {

void Config::validate() const {
  if (in_channels < 1) throw ConfigError("cgd: in_channels must be >= 1");
  if (out() < 2 || out() % 2 != 0) {
    throw ConfigError("cgd: out_channels must be even, got " + std::to_string(out()));
  }
  if (dilation < 1) throw ConfigError("cgd: dilation must be >= 1");
  if (reduction < 1) throw ConfigError("cgd: reduction must be >= 1");
  if (reduce_kernel < 1 || reduce_kernel % 2 == 0) {
    throw ConfigError("cgd: reduce_kernel must be odd");
  }
}

ConvSpec Config::reduce_spec() const {
  return ConvSpec::same(in_channels, half(), reduce_kernel, 2);
}

ConvSpec Config::local_spec() const {
  return ConvSpec::same(half(), half(), 3, 1, 1, depthwise_branches ? half() : 1);
}

ConvSpec Config::surround_spec() const {
  return ConvSpec::same(half(), half(), 3, 1, dilation, depthwise_branches ? half() : 1);
}

Params Params::init(const Config& cfg, Rng& rng) {
  cfg.validate();
  const auto fan_in = [](const ConvSpec& s) { return s.in_channels / s.groups * s.kernel * s.kernel; };
  Params p;
  const ConvSpec rs = cfg.reduce_spec();
  p.reduce_weight = fan_in_uniform(rs.weight_shape(), fan_in(rs), rng);
  p.reduce_bn = BatchNormParams::identity(cfg.half());
  p.local_weight = fan_in_uniform(cfg.local_spec().weight_shape(), fan_in(cfg.local_spec()), rng);
  p.surround_weight =
      fan_in_uniform(cfg.surround_spec().weight_shape(), fan_in(cfg.surround_spec()), rng);
  p.joint_bn = BatchNormParams::identity(cfg.out());
  p.fc1_weight = fan_in_uniform({cfg.hidden(), cfg.out(), 1, 1}, cfg.out(), rng);
  p.fc1_bias = Tensor::zeros({1, cfg.hidden(), 1, 1});
  p.fc2_weight = fan_in_uniform({cfg.out(), cfg.hidden(), 1, 1}, cfg.hidden(), rng);
  p.fc2_bias = Tensor::zeros({1, cfg.out(), 1, 1});
  return p;
}

Tensor gce_gate(const Tensor& features, const Config& cfg, const Params& params, Cache* cache) {
  if (features.c() != cfg.out()) {
    throw ConfigError("cgd::gce_gate: features have " + std::to_string(features.c()) +
                      " channels, expected " + std::to_string(cfg.out()));
  }
  Tensor pooled = ops::global_avg_pool(features);
  Tensor hidden_pre = ops::fully_connected(pooled, params.fc1_weight, params.fc1_bias);
  Tensor hidden = ops::relu(hidden_pre);
  Tensor gate = ops::sigmoid(ops::fully_connected(hidden, params.fc2_weight, params.fc2_bias));
  if (cache) {
    cache->pooled = std::move(pooled);
    cache->hidden_pre = std::move(hidden_pre);
    cache->hidden = std::move(hidden);
    cache->gate = gate;
  }
  return gate;
}

Tensor forward(const Tensor& x, const Config& cfg, Params& params, Mode mode, Cache* cache) {
  cfg.validate();
  if (x.c() != cfg.in_channels) {
    throw ConfigError("cgd: input has " + std::to_string(x.c()) + " channels, configured " +
                      std::to_string(cfg.in_channels));
  }
  Cache local_cache;
  Cache& c = cache ? *cache : local_cache;
  // A k x k stride-2 conv with padding (k-1)/2 already yields ceil(h/2).
  const Tensor reduced_pre = ops::conv2d(x, cfg.reduce_spec(), params.reduce_weight);
  c.reduce_bn_out = ops::batch_norm(reduced_pre, params.reduce_bn, mode, &c.reduce_bn);
  c.reduced = ops::relu(c.reduce_bn_out);
  c.local = ops::conv2d(c.reduced, cfg.local_spec(), params.local_weight);
  c.surround = ops::conv2d(c.reduced, cfg.surround_spec(), params.surround_weight);
  const Tensor fused = ops::concat_channels({&c.local, &c.surround});
  c.joint_bn_out = ops::batch_norm(fused, params.joint_bn, mode, &c.joint_bn);
  c.joint = ops::relu(c.joint_bn_out);
  gce_gate(c.joint, cfg, params, &c);
  Tensor out = ops::scale_channels(c.joint, c.gate);
  CCI_CHECK_FINITE(out, "cgd::forward");
  return out;
}

Gradients backward(const Tensor& x, const Config& cfg, const Params& params,
                   const Tensor& grad_out, Mode mode) {
  Params scratch = params;
  Cache cache;
  forward(x, cfg, scratch, mode, &cache);
  return backward(x, cfg, params, cache, grad_out);
}

Gradients backward(const Tensor& x, const Config& cfg, const Params& params, const Cache& cache,
                   const Tensor& grad_out) {
  if (grad_out.shape() != cache.joint.shape()) {
    throw ConfigError("cgd::backward: grad_out shape " + grad_out.shape().str());
  }
  Gradients g;
  // Scale layer: product rule over features and gate.
  ops::ScaleGrads sg = ops::scale_channels_backward(cache.joint, cache.gate, grad_out);
  const Tensor g_gate_logits = ops::sigmoid_backward(cache.gate, sg.gate);
  LinearGrads fc2 = ops::fully_connected_backward(cache.hidden, params.fc2_weight, g_gate_logits, true);
  const Tensor g_hidden_pre = ops::relu_backward(cache.hidden_pre, fc2.x);
  LinearGrads fc1 = ops::fully_connected_backward(cache.pooled, params.fc1_weight, g_hidden_pre, true);
  Tensor g_joint = ops::global_avg_pool_backward(fc1.x, cache.joint.shape());
  g_joint.add_(sg.x);

  const Tensor g_joint_bn = ops::relu_backward(cache.joint_bn_out, g_joint);
  BatchNormGrads jbn = ops::batch_norm_backward(cache.joint_bn, params.joint_bn.gamma, g_joint_bn);
  std::vector<Tensor> g_branches = ops::split_channels(jbn.x, {cfg.half(), cfg.half()});

  ConvGrads loc = ops::conv2d_backward(cache.reduced, cfg.local_spec(), params.local_weight,
                                       g_branches[0], false);
  ConvGrads sur = ops::conv2d_backward(cache.reduced, cfg.surround_spec(),
                                       params.surround_weight, g_branches[1], false);
  Tensor g_reduced = std::move(loc.x);
  g_reduced.add_(sur.x);

  const Tensor g_reduce_bn = ops::relu_backward(cache.reduce_bn_out, g_reduced);
  BatchNormGrads rbn =
      ops::batch_norm_backward(cache.reduce_bn, params.reduce_bn.gamma, g_reduce_bn);
  ConvGrads red = ops::conv2d_backward(x, cfg.reduce_spec(), params.reduce_weight, rbn.x, false);

  g.x = std::move(red.x);
  g.params.reduce_weight = std::move(red.weight);
  g.params.reduce_bn = batch_norm_grads(rbn);
  g.params.local_weight = std::move(loc.weight);
  g.params.surround_weight = std::move(sur.weight);
  g.params.joint_bn = batch_norm_grads(jbn);
  g.params.fc1_weight = std::move(fc1.weight);
  g.params.fc1_bias = std::move(fc1.bias);
  g.params.fc2_weight = std::move(fc2.weight);
  g.params.fc2_bias = std::move(fc2.bias);
  return g;
}

std::int64_t count_params(const Config& cfg) {
  cfg.validate();
  const std::int64_t convs = static_cast<std::int64_t>(
      cfg.reduce_spec().weight_shape().numel() + cfg.local_spec().weight_shape().numel() +
      cfg.surround_spec().weight_shape().numel());
  const std::int64_t bns = 2 * cfg.half() + 2 * cfg.out();
  const std::int64_t fcs = 2LL * cfg.hidden() * cfg.out() + cfg.hidden() + cfg.out();
  return convs + bns + fcs;
}

std::int64_t count_flops(const Config& cfg, const Shape& in) {
  cfg.validate();
  const Shape mid = cfg.reduce_spec().output_shape(in);
  const std::int64_t macs = cfg.reduce_spec().macs(in) + cfg.local_spec().macs(mid) +
                            cfg.surround_spec().macs(mid) +
                            2LL * in.n * cfg.hidden() * cfg.out();
  return flops_of(macs);
}

}  // namespace cci::cgd
