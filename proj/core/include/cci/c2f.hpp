#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cci/irmb.hpp"
#include "cci/layers.hpp"

/// Split-transform-concat block. The inner transforms are either plain
/// bottlenecks or iRMB blocks.
namespace cci::c2f {

enum class BlockKind { bottleneck, irmb };

struct Config {
  int in_channels = 2;
  int out_channels = 2;
  int blocks = 1;
  int hidden = 0;  // 0 selects out_channels
  BlockKind kind = BlockKind::bottleneck;
  bool shortcut = false;  // bottleneck residual
  irmb::Config irmb;      // channels is overwritten with half()

  [[nodiscard]] int hidden_channels() const { return hidden > 0 ? hidden : out_channels; }
  [[nodiscard]] int half() const { return hidden_channels() / 2; }
  [[nodiscard]] int concat_channels() const { return half() * (2 + blocks); }
  [[nodiscard]] ConvSpec cv1_spec() const { return ConvSpec::same(in_channels, hidden_channels(), 1); }
  [[nodiscard]] ConvSpec cv2_spec() const { return ConvSpec::same(concat_channels(), out_channels, 1); }
  [[nodiscard]] block::BottleneckConfig bottleneck_config() const { return {half(), shortcut}; }
  [[nodiscard]] irmb::Config irmb_config() const;
  void validate() const;
};

struct Params {
  block::ConvBlockParams cv1;
  block::ConvBlockParams cv2;
  std::vector<block::BottleneckParams> bottlenecks;
  std::vector<irmb::Params> irmbs;

  static Params init(const Config& cfg, Rng& rng);

  template <class F>
  void visit(F&& f) {
    cv1.visit([&](const std::string& n, Tensor& t, bool tr) { f("cv1." + n, t, tr); });
    cv2.visit([&](const std::string& n, Tensor& t, bool tr) { f("cv2." + n, t, tr); });
    for (std::size_t i = 0; i < bottlenecks.size(); ++i) {
      const std::string p = "m." + std::to_string(i) + ".";
      bottlenecks[i].visit([&](const std::string& n, Tensor& t, bool tr) { f(p + n, t, tr); });
    }
    for (std::size_t i = 0; i < irmbs.size(); ++i) {
      const std::string p = "m." + std::to_string(i) + ".";
      irmbs[i].visit([&](const std::string& n, Tensor& t, bool tr) { f(p + n, t, tr); });
    }
  }
};

struct Cache {
  block::ConvBlockCache cv1;
  std::vector<Tensor> parts;  // half1, half2, block outputs
  std::vector<block::BottleneckCache> bottlenecks;
  std::vector<irmb::Cache> irmbs;
  Tensor cat;
  block::ConvBlockCache cv2;
};

struct Gradients {
  Tensor x;
  Params params;
};

Tensor forward(const Tensor& x, const Config& cfg, Params& params, Mode mode,
               Cache* cache = nullptr);
Gradients backward(const Tensor& x, const Config& cfg, const Params& params, const Cache& cache,
                   const Tensor& grad_out);

std::int64_t count_params(const Config& cfg);
std::int64_t count_flops(const Config& cfg, const Shape& in);

}  // namespace cci::c2f
