#include "cci/layers.hpp"

#include "cci/error.hpp"

namespace cci::block {

ConvBlockParams ConvBlockParams::init(const ConvSpec& spec, Rng& rng) {
  spec.validate();
  const int fan_in = spec.in_channels / spec.groups * spec.kernel * spec.kernel;
  return {fan_in_uniform(spec.weight_shape(), fan_in, rng),
          BatchNormParams::identity(spec.out_channels)};
}

Tensor conv_block(const Tensor& x, const ConvSpec& spec, ConvBlockParams& params, Mode mode,
                  ConvBlockCache* cache) {
  ConvBlockCache local;
  ConvBlockCache& c = cache ? *cache : local;
  c.pre_act = ops::batch_norm(ops::conv2d(x, spec, params.weight), params.bn, mode, &c.bn);
  return ops::silu(c.pre_act);
}

ConvBlockGrads conv_block_backward(const Tensor& x, const ConvSpec& spec,
                                   const ConvBlockParams& params, const ConvBlockCache& cache,
                                   const Tensor& grad_out, bool input_grad) {
  const Tensor g_pre = ops::silu_backward(cache.pre_act, grad_out);
  BatchNormGrads bn = ops::batch_norm_backward(cache.bn, params.bn.gamma, g_pre);
  ConvGrads conv = ops::conv2d_backward(x, spec, params.weight, bn.x, false, input_grad);
  return {std::move(conv.x), {std::move(conv.weight), batch_norm_grads(bn)}};
}

std::int64_t conv_block_params(const ConvSpec& spec) {
  return static_cast<std::int64_t>(spec.weight_shape().numel()) + 2LL * spec.out_channels;
}

BottleneckParams BottleneckParams::init(const BottleneckConfig& cfg, Rng& rng) {
  BottleneckParams p;
  p.cv1 = ConvBlockParams::init(cfg.conv_spec(), rng);
  p.cv2 = ConvBlockParams::init(cfg.conv_spec(), rng);
  return p;
}

Tensor bottleneck(const Tensor& x, const BottleneckConfig& cfg, BottleneckParams& params, Mode mode,
                  BottleneckCache* cache) {
  BottleneckCache local;
  BottleneckCache& c = cache ? *cache : local;
  c.mid = conv_block(x, cfg.conv_spec(), params.cv1, mode, &c.cv1);
  Tensor out = conv_block(c.mid, cfg.conv_spec(), params.cv2, mode, &c.cv2);
  if (cfg.shortcut) out.add_(x);
  return out;
}

BottleneckGrads bottleneck_backward(const Tensor& x, const BottleneckConfig& cfg,
                                    const BottleneckParams& params, const BottleneckCache& cache,
                                    const Tensor& grad_out) {
  ConvBlockGrads g2 = conv_block_backward(cache.mid, cfg.conv_spec(), params.cv2, cache.cv2, grad_out);
  ConvBlockGrads g1 = conv_block_backward(x, cfg.conv_spec(), params.cv1, cache.cv1, g2.x);
  if (cfg.shortcut) g1.x.add_(grad_out);
  return {std::move(g1.x), {std::move(g1.params), std::move(g2.params)}};
}

void SppfConfig::validate() const {
  if (in_channels < 2 || in_channels % 2 != 0) {
    throw ConfigError("sppf: in_channels must be even and >= 2");
  }
  if (out_channels < 1) throw ConfigError("sppf: out_channels must be >= 1");
  if (pool < 1 || pool % 2 == 0) throw ConfigError("sppf: pool must be odd");
}

SppfParams SppfParams::init(const SppfConfig& cfg, Rng& rng) {
  cfg.validate();
  SppfParams p;
  p.cv1 = ConvBlockParams::init(cfg.cv1_spec(), rng);
  p.cv2 = ConvBlockParams::init(cfg.cv2_spec(), rng);
  return p;
}

Tensor sppf(const Tensor& x, const SppfConfig& cfg, SppfParams& params, Mode mode,
            SppfCache* cache) {
  cfg.validate();
  SppfCache local;
  SppfCache& c = cache ? *cache : local;
  c.pooled[0] = conv_block(x, cfg.cv1_spec(), params.cv1, mode, &c.cv1);
  for (int i = 1; i < 4; ++i) c.pooled[i] = ops::max_pool2d(c.pooled[i - 1], cfg.pool, 1, cfg.pool / 2);
  c.cat = ops::concat_channels(std::span<const Tensor>(c.pooled, 4));
  return conv_block(c.cat, cfg.cv2_spec(), params.cv2, mode, &c.cv2);
}

SppfGrads sppf_backward(const Tensor& x, const SppfConfig& cfg, const SppfParams& params,
                        const SppfCache& cache, const Tensor& grad_out) {
  ConvBlockGrads g2 = conv_block_backward(cache.cat, cfg.cv2_spec(), params.cv2, cache.cv2, grad_out);
  const int h = cfg.hidden();
  std::vector<Tensor> parts = ops::split_channels(g2.x, {h, h, h, h});
  for (int i = 3; i >= 1; --i) {
    parts[static_cast<std::size_t>(i - 1)].add_(
        ops::max_pool2d_backward(cache.pooled[i - 1], cfg.pool, 1, cfg.pool / 2, parts[static_cast<std::size_t>(i)]));
  }
  ConvBlockGrads g1 = conv_block_backward(x, cfg.cv1_spec(), params.cv1, cache.cv1, parts[0]);
  return {std::move(g1.x), {std::move(g1.params), std::move(g2.params)}};
}

std::int64_t sppf_params(const SppfConfig& cfg) {
  cfg.validate();
  return conv_block_params(cfg.cv1_spec()) + conv_block_params(cfg.cv2_spec());
}

std::int64_t sppf_flops(const SppfConfig& cfg, const Shape& in) {
  cfg.validate();
  const Shape mid{in.n, 4 * cfg.hidden(), in.h, in.w};
  return flops_of(cfg.cv1_spec().macs(in) + cfg.cv2_spec().macs(mid));
}

}  // namespace cci::block
