#include "cci/network.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "cci/error.hpp"

namespace cci::net {

int NetworkConfig::channels(int base) const {
  const double scaled = std::min(base, max_channels) * width_multiple;
  return static_cast<int>(std::ceil(scaled / 8.0)) * 8;
}

int NetworkConfig::depth(int base) const {
  return std::max(static_cast<int>(std::lround(base * depth_multiple)), 1);
}

void NetworkConfig::validate() const {
  if (!(width_multiple > 0.0) || !(depth_multiple > 0.0)) {
    throw ConfigError("network: width and depth multiples must be positive");
  }
  if (num_classes < 1) throw ConfigError("network: num_classes must be >= 1");
  if (input_size < 32 || input_size % 32 != 0) {
    throw ConfigError("network: input_size must be a positive multiple of 32, got " +
                      std::to_string(input_size));
  }
  if (max_channels < 8) throw ConfigError("network: max_channels must be >= 8");
  if (use_carafe && carafe.sigma != 2) {
    throw ConfigError("network: carafe sigma must be 2 to replace the 2x upsample");
  }
}

std::string_view kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv: return "conv";
    case LayerKind::c2f: return "c2f";
    case LayerKind::sppf: return "sppf";
    case LayerKind::cgd: return "cgd";
    case LayerKind::carafe: return "carafe";
    case LayerKind::upsample: return "upsample";
    case LayerKind::concat: return "concat";
    case LayerKind::head: return "head";
  }
  return "?";
}

void Layer::register_params(ParamStore&, const std::string&) {}

namespace {

const Tensor& single(std::span<const Tensor* const> in, const char* what) {
  if (in.size() != 1) throw ConfigError(std::string(what) + ": expects exactly one input");
  return *in[0];
}

const Shape& single(std::span<const Shape> in, const char* what) {
  if (in.size() != 1) throw ConfigError(std::string(what) + ": expects exactly one input");
  return in[0];
}

void expect_channels(const Shape& s, int c, const char* what) {
  if (s.c != c) {
    throw ConfigError(std::string(what) + ": input has " + std::to_string(s.c) +
                      " channels, expected " + std::to_string(c));
  }
}

std::vector<Tensor> one(Tensor t) {
  std::vector<Tensor> v;
  v.push_back(std::move(t));
  return v;
}

class ConvLayer final : public Layer {
 public:
  ConvLayer(const ConvSpec& spec, Rng& rng) : spec_(spec) {
    params_ = block::ConvBlockParams::init(spec, rng);
    grads_ = params_;
  }
  LayerKind kind() const override { return LayerKind::conv; }
  std::string describe() const override {
    return "conv " + std::to_string(spec_.in_channels) + "->" + std::to_string(spec_.out_channels) +
           " k" + std::to_string(spec_.kernel) + " s" + std::to_string(spec_.stride);
  }
  Shape output_shape(std::span<const Shape> in) const override {
    const Shape& s = single(in, "conv");
    expect_channels(s, spec_.in_channels, "conv");
    return spec_.output_shape(s);
  }
  std::int64_t flops(std::span<const Shape> in) const override {
    return flops_of(spec_.macs(single(in, "conv")));
  }
  void register_params(ParamStore& store, const std::string& prefix) override {
    cci::register_params(store, prefix, params_, grads_);
  }
  Tensor forward(std::span<const Tensor* const> in, Mode mode) override {
    return block::conv_block(single(in, "conv"), spec_, params_, mode, &cache_);
  }
  std::vector<Tensor> backward(std::span<const Tensor* const> in, const Tensor& g,
                               bool input_grad) override {
    block::ConvBlockGrads r =
        block::conv_block_backward(single(in, "conv"), spec_, params_, cache_, g, input_grad);
    accumulate_grads(grads_, r.params);
    return one(std::move(r.x));
  }

 private:
  ConvSpec spec_;
  block::ConvBlockParams params_, grads_;
  block::ConvBlockCache cache_;
};

class C2fLayer final : public Layer {
 public:
  C2fLayer(const c2f::Config& cfg, Rng& rng) : cfg_(cfg) {
    params_ = c2f::Params::init(cfg, rng);
    grads_ = params_;
  }
  LayerKind kind() const override { return LayerKind::c2f; }
  [[nodiscard]] const c2f::Config& config() const { return cfg_; }
  std::string describe() const override {
    std::string s = "c2f " + std::to_string(cfg_.in_channels) + "->" +
                    std::to_string(cfg_.out_channels) + " n" + std::to_string(cfg_.blocks);
    if (cfg_.kind == c2f::BlockKind::irmb) {
      const irmb::Config ic = cfg_.irmb_config();
      s += " irmb e" + std::to_string(ic.expand_ratio) + " h" + std::to_string(ic.heads) + " w" +
           std::to_string(ic.window);
    } else {
      s += cfg_.shortcut ? " bottleneck+res" : " bottleneck";
    }
    return s;
  }
  Shape output_shape(std::span<const Shape> in) const override {
    Shape s = single(in, "c2f");
    expect_channels(s, cfg_.in_channels, "c2f");
    s.c = cfg_.out_channels;
    return s;
  }
  std::int64_t flops(std::span<const Shape> in) const override {
    return c2f::count_flops(cfg_, single(in, "c2f"));
  }
  void register_params(ParamStore& store, const std::string& prefix) override {
    cci::register_params(store, prefix, params_, grads_);
  }
  Tensor forward(std::span<const Tensor* const> in, Mode mode) override {
    return c2f::forward(single(in, "c2f"), cfg_, params_, mode, &cache_);
  }
  std::vector<Tensor> backward(std::span<const Tensor* const> in, const Tensor& g,
                               bool) override {
    c2f::Gradients r = c2f::backward(single(in, "c2f"), cfg_, params_, cache_, g);
    accumulate_grads(grads_, r.params);
    return one(std::move(r.x));
  }

 private:
  c2f::Config cfg_;
  c2f::Params params_, grads_;
  c2f::Cache cache_;
};

class SppfLayer final : public Layer {
 public:
  SppfLayer(const block::SppfConfig& cfg, Rng& rng) : cfg_(cfg) {
    params_ = block::SppfParams::init(cfg, rng);
    grads_ = params_;
  }
  LayerKind kind() const override { return LayerKind::sppf; }
  std::string describe() const override {
    return "sppf " + std::to_string(cfg_.in_channels) + "->" + std::to_string(cfg_.out_channels) +
           " k" + std::to_string(cfg_.pool);
  }
  Shape output_shape(std::span<const Shape> in) const override {
    Shape s = single(in, "sppf");
    expect_channels(s, cfg_.in_channels, "sppf");
    s.c = cfg_.out_channels;
    return s;
  }
  std::int64_t flops(std::span<const Shape> in) const override {
    return block::sppf_flops(cfg_, single(in, "sppf"));
  }
  void register_params(ParamStore& store, const std::string& prefix) override {
    cci::register_params(store, prefix, params_, grads_);
  }
  Tensor forward(std::span<const Tensor* const> in, Mode mode) override {
    return block::sppf(single(in, "sppf"), cfg_, params_, mode, &cache_);
  }
  std::vector<Tensor> backward(std::span<const Tensor* const> in, const Tensor& g,
                               bool) override {
    block::SppfGrads r = block::sppf_backward(single(in, "sppf"), cfg_, params_, cache_, g);
    accumulate_grads(grads_, r.params);
    return one(std::move(r.x));
  }

 private:
  block::SppfConfig cfg_;
  block::SppfParams params_, grads_;
  block::SppfCache cache_;
};

class CgdLayer final : public Layer {
 public:
  CgdLayer(const cgd::Config& cfg, Rng& rng) : cfg_(cfg) {
    params_ = cgd::Params::init(cfg, rng);
    grads_ = params_;
  }
  LayerKind kind() const override { return LayerKind::cgd; }
  std::string describe() const override {
    return "cgd " + std::to_string(cfg_.in_channels) + "->" + std::to_string(cfg_.out()) + " r" +
           std::to_string(cfg_.dilation) + (cfg_.depthwise_branches ? " dw" : "");
  }
  Shape output_shape(std::span<const Shape> in) const override {
    const Shape& s = single(in, "cgd");
    expect_channels(s, cfg_.in_channels, "cgd");
    return {s.n, cfg_.out(), (s.h + 1) / 2, (s.w + 1) / 2};
  }
  std::int64_t flops(std::span<const Shape> in) const override {
    return cgd::count_flops(cfg_, single(in, "cgd"));
  }
  void register_params(ParamStore& store, const std::string& prefix) override {
    cci::register_params(store, prefix, params_, grads_);
  }
  Tensor forward(std::span<const Tensor* const> in, Mode mode) override {
    return cgd::forward(single(in, "cgd"), cfg_, params_, mode, &cache_);
  }
  std::vector<Tensor> backward(std::span<const Tensor* const> in, const Tensor& g,
                               bool) override {
    cgd::Gradients r = cgd::backward(single(in, "cgd"), cfg_, params_, cache_, g);
    accumulate_grads(grads_, r.params);
    return one(std::move(r.x));
  }

 private:
  cgd::Config cfg_;
  cgd::Params params_, grads_;
  cgd::Cache cache_;
};

class CarafeLayer final : public Layer {
 public:
  CarafeLayer(const carafe::Config& cfg, Rng& rng) : cfg_(cfg) {
    params_ = carafe::Params::init(cfg, rng);
    grads_ = params_;
  }
  LayerKind kind() const override { return LayerKind::carafe; }
  std::string describe() const override {
    return "carafe " + std::to_string(cfg_.channels) + " x" + std::to_string(cfg_.sigma) + " k" +
           std::to_string(cfg_.k_up) + " enc" + std::to_string(cfg_.k_encoder) + " mid" +
           std::to_string(cfg_.mid_channels());
  }
  Shape output_shape(std::span<const Shape> in) const override {
    const Shape& s = single(in, "carafe");
    expect_channels(s, cfg_.channels, "carafe");
    return {s.n, s.c, s.h * cfg_.sigma, s.w * cfg_.sigma};
  }
  std::int64_t flops(std::span<const Shape> in) const override {
    return carafe::count_flops(cfg_, single(in, "carafe"));
  }
  void register_params(ParamStore& store, const std::string& prefix) override {
    cci::register_params(store, prefix, params_, grads_);
  }
  Tensor forward(std::span<const Tensor* const> in, Mode) override {
    return carafe::forward(single(in, "carafe"), cfg_, params_, &cache_);
  }
  std::vector<Tensor> backward(std::span<const Tensor* const> in, const Tensor& g,
                               bool) override {
    carafe::Gradients r = carafe::backward(single(in, "carafe"), cfg_, params_, cache_, g);
    accumulate_grads(grads_, r.params);
    return one(std::move(r.x));
  }

 private:
  carafe::Config cfg_;
  carafe::Params params_, grads_;
  carafe::Cache cache_;
};

class UpsampleLayer final : public Layer {
 public:
  explicit UpsampleLayer(int factor) : factor_(factor) {
    if (factor < 1) throw ConfigError("upsample: factor must be >= 1");
  }
  LayerKind kind() const override { return LayerKind::upsample; }
  std::string describe() const override { return "upsample nearest x" + std::to_string(factor_); }
  Shape output_shape(std::span<const Shape> in) const override {
    const Shape& s = single(in, "upsample");
    return {s.n, s.c, s.h * factor_, s.w * factor_};
  }
  std::int64_t flops(std::span<const Shape>) const override { return 0; }
  Tensor forward(std::span<const Tensor* const> in, Mode) override {
    return ops::upsample_nearest(single(in, "upsample"), factor_);
  }
  std::vector<Tensor> backward(std::span<const Tensor* const>, const Tensor& g, bool) override {
    return one(ops::upsample_nearest_backward(g, factor_));
  }

 private:
  int factor_;
};

class ConcatLayer final : public Layer {
 public:
  LayerKind kind() const override { return LayerKind::concat; }
  std::string describe() const override { return "concat"; }
  Shape output_shape(std::span<const Shape> in) const override {
    if (in.empty()) throw ConfigError("concat: no inputs");
    Shape s = in[0];
    s.c = 0;
    for (const Shape& t : in) {
      if (t.n != s.n || t.h != s.h || t.w != s.w) {
        throw ConfigError("concat: incompatible shapes " + in[0].str() + " and " + t.str());
      }
      s.c += t.c;
    }
    return s;
  }
  std::int64_t flops(std::span<const Shape>) const override { return 0; }
  Tensor forward(std::span<const Tensor* const> in, Mode) override {
    return ops::concat_channels(in);
  }
  std::vector<Tensor> backward(std::span<const Tensor* const> in, const Tensor& g, bool) override {
    std::vector<int> sizes;
    for (const Tensor* t : in) sizes.push_back(t->c());
    return ops::split_channels(g, sizes);
  }
};

struct HeadParams {
  block::ConvBlockParams box1, box2, cls1, cls2;
  Tensor box_weight, box_bias, cls_weight, cls_bias;

  template <class F>
  void visit(F&& f) {
    const auto sub = [&](const std::string& p, block::ConvBlockParams& b) {
      b.visit([&](const std::string& n, Tensor& t, bool tr) { f(p + n, t, tr); });
    };
    sub("box.cv1.", box1);
    sub("box.cv2.", box2);
    f("box.pred.weight", box_weight, true);
    f("box.pred.bias", box_bias, true);
    sub("cls.cv1.", cls1);
    sub("cls.cv2.", cls2);
    f("cls.pred.weight", cls_weight, true);
    f("cls.pred.bias", cls_bias, true);
  }
};

class HeadLayer final : public Layer {
 public:
  HeadLayer(const HeadConfig& cfg, Rng& rng) : cfg_(cfg) {
    if (cfg.in_channels < 1 || cfg.width < 1 || cfg.num_classes < 1) {
      throw ConfigError("head: channels, width and num_classes must be >= 1");
    }
    if (!(cfg.objectness_prior > 0.0f && cfg.objectness_prior < 1.0f)) {
      throw ConfigError("head: objectness_prior must lie in (0, 1)");
    }
    p_.box1 = block::ConvBlockParams::init(first(), rng);
    p_.box2 = block::ConvBlockParams::init(second(), rng);
    p_.box_weight = fan_in_uniform(box_spec().weight_shape(), cfg.width, rng);
    p_.box_bias = Tensor::zeros({1, 5, 1, 1});
    const float prior = cfg.objectness_prior;
    p_.box_bias[4] = std::log(prior / (1.0f - prior));
    p_.cls1 = block::ConvBlockParams::init(first(), rng);
    p_.cls2 = block::ConvBlockParams::init(second(), rng);
    p_.cls_weight = fan_in_uniform(cls_spec().weight_shape(), cfg.width, rng);
    p_.cls_bias = Tensor::zeros({1, cfg.num_classes, 1, 1});
    g_ = p_;
  }
  LayerKind kind() const override { return LayerKind::head; }
  std::string describe() const override {
    return "head " + std::to_string(cfg_.in_channels) + " w" + std::to_string(cfg_.width) +
           " out" + std::to_string(cfg_.outputs());
  }
  Shape output_shape(std::span<const Shape> in) const override {
    Shape s = single(in, "head");
    expect_channels(s, cfg_.in_channels, "head");
    s.c = cfg_.outputs();
    return s;
  }
  std::int64_t flops(std::span<const Shape> in) const override {
    const Shape& s = single(in, "head");
    const Shape mid{s.n, cfg_.width, s.h, s.w};
    return flops_of(2 * (first().macs(s) + second().macs(mid)) + box_spec().macs(mid) +
                    cls_spec().macs(mid));
  }
  void register_params(ParamStore& store, const std::string& prefix) override {
    cci::register_params(store, prefix, p_, g_);
  }
  Tensor forward(std::span<const Tensor* const> in, Mode mode) override {
    const Tensor& x = single(in, "head");
    box_mid1_ = block::conv_block(x, first(), p_.box1, mode, &box1_);
    box_mid2_ = block::conv_block(box_mid1_, second(), p_.box2, mode, &box2_);
    cls_mid1_ = block::conv_block(x, first(), p_.cls1, mode, &cls1_);
    cls_mid2_ = block::conv_block(cls_mid1_, second(), p_.cls2, mode, &cls2_);
    const Tensor box = ops::conv2d(box_mid2_, box_spec(), p_.box_weight, p_.box_bias);
    const Tensor cls = ops::conv2d(cls_mid2_, cls_spec(), p_.cls_weight, p_.cls_bias);
    return ops::concat_channels({&box, &cls});
  }
  std::vector<Tensor> backward(std::span<const Tensor* const> in, const Tensor& g,
                               bool input_grad) override {
    const Tensor& x = single(in, "head");
    std::vector<Tensor> parts = ops::split_channels(g, {5, cfg_.num_classes});
    ConvGrads bp = ops::conv2d_backward(box_mid2_, box_spec(), p_.box_weight, parts[0], true);
    ConvGrads cp = ops::conv2d_backward(cls_mid2_, cls_spec(), p_.cls_weight, parts[1], true);
    block::ConvBlockGrads b2 = block::conv_block_backward(box_mid1_, second(), p_.box2, box2_, bp.x);
    block::ConvBlockGrads c2 = block::conv_block_backward(cls_mid1_, second(), p_.cls2, cls2_, cp.x);
    block::ConvBlockGrads b1 =
        block::conv_block_backward(x, first(), p_.box1, box1_, b2.x, input_grad);
    block::ConvBlockGrads c1 =
        block::conv_block_backward(x, first(), p_.cls1, cls1_, c2.x, input_grad);
    HeadParams r{std::move(b1.params), std::move(b2.params), std::move(c1.params),
                 std::move(c2.params), std::move(bp.weight), std::move(bp.bias),
                 std::move(cp.weight), std::move(cp.bias)};
    accumulate_grads(g_, r);
    if (input_grad) b1.x.add_(c1.x);
    return one(std::move(b1.x));
  }

 private:
  [[nodiscard]] ConvSpec first() const { return ConvSpec::same(cfg_.in_channels, cfg_.width, 3); }
  [[nodiscard]] ConvSpec second() const { return ConvSpec::same(cfg_.width, cfg_.width, 3); }
  [[nodiscard]] ConvSpec box_spec() const { return ConvSpec::same(cfg_.width, 5, 1); }
  [[nodiscard]] ConvSpec cls_spec() const { return ConvSpec::same(cfg_.width, cfg_.num_classes, 1); }

  HeadConfig cfg_;
  HeadParams p_, g_;
  block::ConvBlockCache box1_, box2_, cls1_, cls2_;
  Tensor box_mid1_, box_mid2_, cls_mid1_, cls_mid2_;
};

}  // namespace

std::unique_ptr<Layer> make_conv(const ConvSpec& spec, Rng& rng) {
  return std::make_unique<ConvLayer>(spec, rng);
}
std::unique_ptr<Layer> make_c2f(const c2f::Config& cfg, Rng& rng) {
  return std::make_unique<C2fLayer>(cfg, rng);
}
std::unique_ptr<Layer> make_sppf(const block::SppfConfig& cfg, Rng& rng) {
  return std::make_unique<SppfLayer>(cfg, rng);
}
std::unique_ptr<Layer> make_cgd(const cgd::Config& cfg, Rng& rng) {
  return std::make_unique<CgdLayer>(cfg, rng);
}
std::unique_ptr<Layer> make_carafe(const carafe::Config& cfg, Rng& rng) {
  return std::make_unique<CarafeLayer>(cfg, rng);
}
std::unique_ptr<Layer> make_upsample(int factor) { return std::make_unique<UpsampleLayer>(factor); }
std::unique_ptr<Layer> make_concat() { return std::make_unique<ConcatLayer>(); }
std::unique_ptr<Layer> make_head(const HeadConfig& cfg, Rng& rng) {
  return std::make_unique<HeadLayer>(cfg, rng);
}

int Graph::add(std::string name, std::vector<int> inputs, std::unique_ptr<Layer> layer) {
  if (!layer) throw ConfigError("graph: null layer for " + name);
  if (index_of(name) >= 0) throw ConfigError("graph: duplicate node name " + name);
  if (inputs.empty()) throw ConfigError("graph: node " + name + " has no inputs");
  const int index = static_cast<int>(nodes_.size());
  for (int i : inputs) {
    if (i != kImageInput && (i < 0 || i >= index)) {
      throw ConfigError("graph: node " + name + " refers to input " + std::to_string(i) +
                        " that does not precede it");
    }
  }
  layer->register_params(store_, name);
  nodes_.push_back({std::move(name), std::move(inputs), std::move(layer)});
  return index;
}

void Graph::set_outputs(std::vector<int> nodes, std::vector<int> strides) {
  if (nodes.size() != strides.size() || nodes.empty()) {
    throw ConfigError("graph: outputs and strides must be non-empty and the same length");
  }
  for (int i : nodes) {
    if (i < 0 || i >= static_cast<int>(nodes_.size())) {
      throw ConfigError("graph: output index " + std::to_string(i) + " out of range");
    }
  }
  for (int s : strides) {
    if (s < 1) throw ConfigError("graph: strides must be >= 1");
  }
  outputs_ = std::move(nodes);
  strides_ = std::move(strides);
}

int Graph::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

std::vector<Tensor> Graph::forward(const Tensor& image, Mode mode) {
  if (outputs_.empty()) throw ConfigError("graph: outputs not set");
  check_image(image);
  image_ = image;
  acts_.assign(nodes_.size(), Tensor());
  std::vector<const Tensor*> ins;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    ins.clear();
    for (int j : nodes_[i].inputs) {
      ins.push_back(j == kImageInput ? &image_ : &acts_[static_cast<std::size_t>(j)]);
    }
    try {
      acts_[i] = nodes_[i].layer->forward(ins, mode);
    } catch (const ConfigError& e) {
      throw ConfigError(nodes_[i].name + ": " + e.what());
    }
  }
  std::vector<Tensor> out;
  out.reserve(outputs_.size());
  for (int o : outputs_) out.push_back(acts_[static_cast<std::size_t>(o)]);
  return out;
}

Tensor Graph::backward(std::span<const Tensor> grad_outputs, bool image_grad) {
  if (acts_.size() != nodes_.size()) throw ConfigError("graph: backward before forward");
  if (grad_outputs.size() != outputs_.size()) {
    throw ConfigError("graph: expected " + std::to_string(outputs_.size()) + " output gradients");
  }
  std::vector<Tensor> grads(nodes_.size());
  const auto accumulate = [](Tensor& into, Tensor&& g) {
    if (into.empty()) {
      into = std::move(g);
    } else {
      into.add_(g);
    }
  };
  for (std::size_t k = 0; k < outputs_.size(); ++k) {
    const auto o = static_cast<std::size_t>(outputs_[k]);
    require_same_shape(acts_[o], grad_outputs[k], "graph::backward");
    accumulate(grads[o], Tensor(grad_outputs[k]));
  }
  Tensor g_image;
  std::vector<const Tensor*> ins;
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    if (grads[i].empty()) continue;
    const Node& node = nodes_[i];
    ins.clear();
    bool need_input = image_grad;
    for (int j : node.inputs) {
      ins.push_back(j == kImageInput ? &image_ : &acts_[static_cast<std::size_t>(j)]);
      if (j != kImageInput) need_input = true;
    }
    std::vector<Tensor> gin = node.layer->backward(ins, grads[i], need_input);
    grads[i] = Tensor();
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      const int j = node.inputs[k];
      if (gin[k].empty()) continue;
      if (j == kImageInput) {
        if (image_grad) accumulate(g_image, std::move(gin[k]));
      } else {
        accumulate(grads[static_cast<std::size_t>(j)], std::move(gin[k]));
      }
    }
  }
  return g_image;
}

std::vector<Shape> Graph::node_shapes(const Shape& image) const {
  std::vector<Shape> shapes;
  std::vector<Shape> ins;
  for (const Node& node : nodes_) {
    ins.clear();
    for (int j : node.inputs) {
      ins.push_back(j == kImageInput ? image : shapes[static_cast<std::size_t>(j)]);
    }
    shapes.push_back(node.layer->output_shape(ins));
  }
  return shapes;
}

std::vector<std::int64_t> Graph::node_flops(const Shape& image) const {
  const std::vector<Shape> shapes = node_shapes(image);
  std::vector<std::int64_t> flops;
  std::vector<Shape> ins;
  for (const Node& node : nodes_) {
    ins.clear();
    for (int j : node.inputs) {
      ins.push_back(j == kImageInput ? image : shapes[static_cast<std::size_t>(j)]);
    }
    flops.push_back(node.layer->flops(ins));
  }
  return flops;
}

std::int64_t Graph::node_params(int index) const {
  const std::string prefix = nodes_.at(static_cast<std::size_t>(index)).name + ".";
  std::int64_t total = 0;
  for (const auto& [name, entry] : store_.entries()) {
    if (entry.trainable() && name.compare(0, prefix.size(), prefix) == 0) {
      total += static_cast<std::int64_t>(entry.value->numel());
    }
  }
  return total;
}

std::int64_t Graph::flop_count(const Shape& image) const {
  std::int64_t total = 0;
  for (std::int64_t f : node_flops(image)) total += f;
  return total;
}

std::vector<std::string> Graph::layer_list() const {
  std::vector<std::string> lines;
  for (const Node& node : nodes_) {
    std::ostringstream os;
    os << node.name << ": " << node.layer->describe() << " <-";
    for (int j : node.inputs) {
      os << ' ' << (j == kImageInput ? std::string("image") : nodes_[static_cast<std::size_t>(j)].name);
    }
    lines.push_back(os.str());
  }
  return lines;
}

int Graph::count(LayerKind kind) const {
  return static_cast<int>(std::count_if(nodes_.begin(), nodes_.end(),
                                        [&](const Node& n) { return n.layer->kind() == kind; }));
}

int Graph::count_irmb_blocks() const {
  int total = 0;
  for (const Node& node : nodes_) {
    if (const auto* c = dynamic_cast<const C2fLayer*>(node.layer.get())) {
      if (c->config().kind == c2f::BlockKind::irmb) total += c->config().blocks;
    }
  }
  return total;
}

void check_image(const Tensor& image) {
  if (image.c() != 3 || image.h() != image.w() || image.h() % 32 != 0) {
    throw ConfigError("network: image must be n x 3 x S x S with S a multiple of 32, got " +
                      image.shape().str());
  }
}

Graph build_network(const NetworkConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  Graph g;
  const int c0 = cfg.channels(64);
  const std::array<int, 5> ch{c0, cfg.channels(128), cfg.channels(256), cfg.channels(512),
                              cfg.channels(1024)};
  const std::array<int, 4> depth{cfg.depth(3), cfg.depth(6), cfg.depth(6), cfg.depth(3)};

  const auto c2f_config = [&](int in, int out, int blocks, bool shortcut) {
    c2f::Config c;
    c.in_channels = in;
    c.out_channels = out;
    c.blocks = blocks;
    c.shortcut = shortcut;
    c.kind = cfg.use_irmb ? c2f::BlockKind::irmb : c2f::BlockKind::bottleneck;
    c.irmb = cfg.irmb;
    return c;
  };
  const auto downsample = [&](int in, int out, bool cgd_site) {
    if (cgd_site) {
      cgd::Config c = cfg.cgd;
      c.in_channels = in;
      c.out_channels = out;
      return make_cgd(c, rng);
    }
    return make_conv(ConvSpec::same(in, out, 3, 2), rng);
  };
  const auto upsample = [&](int channels) {
    if (cfg.use_carafe) {
      carafe::Config c = cfg.carafe;
      c.channels = channels;
      return make_carafe(c, rng);
    }
    return make_upsample(2);
  };

  int prev = g.add("backbone.stem", {kImageInput}, make_conv(ConvSpec::same(3, c0, 3, 2), rng));
  std::array<int, 4> stage{};
  for (int i = 0; i < 4; ++i) {
    const auto u = static_cast<std::size_t>(i);
    const std::string k = std::to_string(i + 1);
    prev = g.add("backbone.down" + k, {prev},
                 downsample(ch[u], ch[u + 1], cfg.use_cgd && cfg.cgd_stages[u]));
    prev = g.add("backbone.c2f" + k, {prev},
                 make_c2f(c2f_config(ch[u + 1], ch[u + 1], depth[u], true), rng));
    stage[u] = prev;
  }
  const int p5 = g.add("backbone.sppf", {prev}, make_sppf({ch[4], ch[4], 5}, rng));

  const int n = cfg.depth(3);
  int x = g.add("neck.up1", {p5}, upsample(ch[4]));
  x = g.add("neck.cat1", {x, stage[2]}, make_concat());
  const int n4 = g.add("neck.c2f1", {x}, make_c2f(c2f_config(ch[4] + ch[3], ch[3], n, false), rng));
  x = g.add("neck.up2", {n4}, upsample(ch[3]));
  x = g.add("neck.cat2", {x, stage[1]}, make_concat());
  const int out3 = g.add("neck.c2f2", {x}, make_c2f(c2f_config(ch[3] + ch[2], ch[2], n, false), rng));
  x = g.add("neck.down1", {out3}, make_conv(ConvSpec::same(ch[2], ch[2], 3, 2), rng));
  x = g.add("neck.cat3", {x, n4}, make_concat());
  const int out4 = g.add("neck.c2f3", {x}, make_c2f(c2f_config(ch[2] + ch[3], ch[3], n, false), rng));
  x = g.add("neck.down2", {out4}, make_conv(ConvSpec::same(ch[3], ch[3], 3, 2), rng));
  x = g.add("neck.cat4", {x, p5}, make_concat());
  const int out5 = g.add("neck.c2f4", {x}, make_c2f(c2f_config(ch[3] + ch[4], ch[4], n, false), rng));

  const int width = std::max({16, std::min(cfg.num_classes, 100), ch[2]});
  std::vector<int> heads;
  const std::array<std::pair<const char*, int>, 3> sites{
      {{"head.p3", out3}, {"head.p4", out4}, {"head.p5", out5}}};
  for (const auto& [name, src] : sites) {
    const int in_ch = g.node_shapes({1, 3, cfg.input_size, cfg.input_size})[static_cast<std::size_t>(src)].c;
    heads.push_back(g.add(name, {src}, make_head({in_ch, width, cfg.num_classes, cfg.objectness_prior}, rng)));
  }
  g.set_outputs(heads, {8, 16, 32});
  return g;
}

}  // namespace cci::net
