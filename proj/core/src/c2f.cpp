#include "cci/c2f.hpp"

#include "cci/error.hpp"

namespace cci::c2f {

irmb::Config Config::irmb_config() const {
  irmb::Config c = irmb;
  c.channels = half();
  return c;
}

void Config::validate() const {
  if (in_channels < 1 || out_channels < 1) throw ConfigError("c2f: channels must be >= 1");
  if (blocks < 1) throw ConfigError("c2f: blocks must be >= 1");
  if (hidden_channels() < 2 || hidden_channels() % 2 != 0) {
    throw ConfigError("c2f: hidden channels must be even, got " +
                      std::to_string(hidden_channels()));
  }
  if (kind == BlockKind::irmb) irmb_config().validate();
}

Params Params::init(const Config& cfg, Rng& rng) {
  cfg.validate();
  Params p;
  p.cv1 = block::ConvBlockParams::init(cfg.cv1_spec(), rng);
  for (int i = 0; i < cfg.blocks; ++i) {
    if (cfg.kind == BlockKind::bottleneck) {
      p.bottlenecks.push_back(block::BottleneckParams::init(cfg.bottleneck_config(), rng));
    } else {
      p.irmbs.push_back(irmb::Params::init(cfg.irmb_config(), rng));
    }
  }
  p.cv2 = block::ConvBlockParams::init(cfg.cv2_spec(), rng);
  return p;
}

Tensor forward(const Tensor& x, const Config& cfg, Params& params, Mode mode, Cache* cache) {
  cfg.validate();
  if (x.c() != cfg.in_channels) {
    throw ConfigError("c2f: input has " + std::to_string(x.c()) + " channels, configured " +
                      std::to_string(cfg.in_channels));
  }
  Cache local;
  Cache& c = cache ? *cache : local;
  const Tensor hidden = block::conv_block(x, cfg.cv1_spec(), params.cv1, mode, &c.cv1);
  c.parts = ops::split_channels(hidden, {cfg.half(), cfg.half()});
  c.bottlenecks.assign(cfg.kind == BlockKind::bottleneck ? cfg.blocks : 0, {});
  c.irmbs.assign(cfg.kind == BlockKind::irmb ? cfg.blocks : 0, {});
  const irmb::Config ic = cfg.irmb_config();
  for (int i = 0; i < cfg.blocks; ++i) {
    const auto u = static_cast<std::size_t>(i);
    const Tensor& in = c.parts.back();
    Tensor out = cfg.kind == BlockKind::bottleneck
                     ? block::bottleneck(in, cfg.bottleneck_config(), params.bottlenecks[u], mode,
                                         &c.bottlenecks[u])
                     : irmb::forward(in, ic, params.irmbs[u], &c.irmbs[u]);
    c.parts.push_back(std::move(out));
  }
  c.cat = ops::concat_channels(c.parts);
  return block::conv_block(c.cat, cfg.cv2_spec(), params.cv2, mode, &c.cv2);
}

Gradients backward(const Tensor& x, const Config& cfg, const Params& params, const Cache& cache,
                   const Tensor& grad_out) {
  Gradients g;
  block::ConvBlockGrads g2 =
      block::conv_block_backward(cache.cat, cfg.cv2_spec(), params.cv2, cache.cv2, grad_out);
  std::vector<int> sizes(cache.parts.size(), cfg.half());
  std::vector<Tensor> gp = ops::split_channels(g2.x, sizes);
  const irmb::Config ic = cfg.irmb_config();
  g.params.bottlenecks.resize(params.bottlenecks.size());
  g.params.irmbs.resize(params.irmbs.size());
  for (int i = cfg.blocks - 1; i >= 0; --i) {
    const auto u = static_cast<std::size_t>(i);
    const Tensor& in = cache.parts[u + 1];
    Tensor& g_out = gp[u + 2];
    if (cfg.kind == BlockKind::bottleneck) {
      block::BottleneckGrads bg = block::bottleneck_backward(
          in, cfg.bottleneck_config(), params.bottlenecks[u], cache.bottlenecks[u], g_out);
      gp[u + 1].add_(bg.x);
      g.params.bottlenecks[u] = std::move(bg.params);
    } else {
      irmb::Gradients ig = irmb::backward(in, ic, params.irmbs[u], cache.irmbs[u], g_out);
      gp[u + 1].add_(ig.x);
      g.params.irmbs[u] = std::move(ig.params);
    }
  }
  const Tensor g_hidden = ops::concat_channels(std::span<const Tensor>(gp.data(), 2));
  block::ConvBlockGrads g1 = block::conv_block_backward(x, cfg.cv1_spec(), params.cv1, cache.cv1, g_hidden);
  g.x = std::move(g1.x);
  g.params.cv1 = std::move(g1.params);
  g.params.cv2 = std::move(g2.params);
  return g;
}

std::int64_t count_params(const Config& cfg) {
  cfg.validate();
  std::int64_t total = block::conv_block_params(cfg.cv1_spec()) + block::conv_block_params(cfg.cv2_spec());
  const std::int64_t per_block =
      cfg.kind == BlockKind::bottleneck
          ? 2 * block::conv_block_params(cfg.bottleneck_config().conv_spec())
          : irmb::count_params(cfg.irmb_config());
  return total + per_block * cfg.blocks;
}

std::int64_t count_flops(const Config& cfg, const Shape& in) {
  cfg.validate();
  const Shape half{in.n, cfg.half(), in.h, in.w};
  const Shape cat{in.n, cfg.concat_channels(), in.h, in.w};
  std::int64_t total = flops_of(cfg.cv1_spec().macs(in) + cfg.cv2_spec().macs(cat));
  const std::int64_t per_block =
      cfg.kind == BlockKind::bottleneck
          ? flops_of(2 * cfg.bottleneck_config().conv_spec().macs(half))
          : irmb::count_flops(cfg.irmb_config(), half);
  return total + per_block * cfg.blocks;
}

}  // namespace cci::c2f
