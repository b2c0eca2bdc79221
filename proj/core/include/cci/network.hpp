#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cci/c2f.hpp"
#include "cci/carafe.hpp"
#include "cci/cgd.hpp"
#include "cci/irmb.hpp"
#include "cci/layers.hpp"
#include "cci/param_store.hpp"

namespace cci::net {

struct NetworkConfig {
  double width_multiple = 0.25;
  double depth_multiple = 0.33;
  int num_classes = 2;
  int input_size = 640;
  int max_channels = 1024;  // before width scaling
  bool use_carafe = true;
  bool use_cgd = true;
  bool use_irmb = true;
  std::array<bool, 4> cgd_stages{true, true, true, true};
  carafe::Config carafe;  // channels filled per site
  cgd::Config cgd;        // channels filled per site
  irmb::Config irmb{.channels = 1, .expand_ratio = 9};
  float objectness_prior = 0.01f;  // initial sigmoid(objectness) of every head cell

  /// Width-scaled channel count, rounded up to a multiple of 8.
  [[nodiscard]] int channels(int base) const;
  /// Depth-scaled block count, at least 1.
  [[nodiscard]] int depth(int base) const;
  void validate() const;
};

enum class LayerKind { conv, c2f, sppf, cgd, carafe, upsample, concat, head };

std::string_view kind_name(LayerKind kind);

/// One graph node's computation. Forward caches whatever backward needs;
/// backward adds parameter gradients into the slots registered in the store
/// and returns one gradient per input.
class Layer {
 public:
  virtual ~Layer() = default;

  [[nodiscard]] virtual LayerKind kind() const = 0;
  /// Kind plus hyperparameters, e.g. "conv 16->32 k3 s2".
  [[nodiscard]] virtual std::string describe() const = 0;
  [[nodiscard]] virtual Shape output_shape(std::span<const Shape> in) const = 0;
  [[nodiscard]] virtual std::int64_t flops(std::span<const Shape> in) const = 0;

  virtual void register_params(ParamStore& store, const std::string& prefix);
  virtual Tensor forward(std::span<const Tensor* const> in, Mode mode) = 0;
  virtual std::vector<Tensor> backward(std::span<const Tensor* const> in, const Tensor& grad_out,
                                       bool input_grad) = 0;
};

std::unique_ptr<Layer> make_conv(const ConvSpec& spec, Rng& rng);
std::unique_ptr<Layer> make_c2f(const c2f::Config& cfg, Rng& rng);
std::unique_ptr<Layer> make_sppf(const block::SppfConfig& cfg, Rng& rng);
std::unique_ptr<Layer> make_cgd(const cgd::Config& cfg, Rng& rng);
std::unique_ptr<Layer> make_carafe(const carafe::Config& cfg, Rng& rng);
std::unique_ptr<Layer> make_upsample(int factor);
std::unique_ptr<Layer> make_concat();

/// Decoupled detection head: a box branch and a class branch, each two 3x3
/// conv blocks and a 1x1 predictor. Output channels are
/// [tx, ty, tw, th, objectness, class logits...].
struct HeadConfig {
  int in_channels = 1;
  int width = 16;
  int num_classes = 1;
  float objectness_prior = 0.01f;  // initial sigmoid(objectness)

  [[nodiscard]] int outputs() const { return 5 + num_classes; }
};
std::unique_ptr<Layer> make_head(const HeadConfig& cfg, Rng& rng);

inline constexpr int kImageInput = -1;

struct Node {
  std::string name;
  std::vector<int> inputs;  // node indices, kImageInput for the image
  std::unique_ptr<Layer> layer;
};

/// Acyclic layer list with named parameters. Nodes are evaluated in
/// insertion order; every input refers to an earlier node or the image.
class Graph {
 public:
  int add(std::string name, std::vector<int> inputs, std::unique_ptr<Layer> layer);
  /// Marks detection outputs and their strides relative to the image.
  void set_outputs(std::vector<int> nodes, std::vector<int> strides);

  [[nodiscard]] const std::vector<Node>& nodes() const { return nodes_; }
  [[nodiscard]] const std::vector<int>& outputs() const { return outputs_; }
  [[nodiscard]] const std::vector<int>& strides() const { return strides_; }
  [[nodiscard]] ParamStore& params() { return store_; }
  [[nodiscard]] const ParamStore& params() const { return store_; }
  [[nodiscard]] int index_of(std::string_view name) const;

  /// Evaluates every node and returns the output tensors. Activations are
  /// kept for a following backward().
  std::vector<Tensor> forward(const Tensor& image, Mode mode);
  /// Accumulates parameter gradients from per-output gradients. Returns the
  /// image gradient when requested, otherwise an empty tensor.
  Tensor backward(std::span<const Tensor> grad_outputs, bool image_grad = false);

  [[nodiscard]] std::vector<Shape> node_shapes(const Shape& image) const;
  [[nodiscard]] std::vector<std::int64_t> node_flops(const Shape& image) const;
  [[nodiscard]] std::int64_t node_params(int index) const;
  [[nodiscard]] std::int64_t param_count() const { return store_.trainable_count(); }
  [[nodiscard]] std::int64_t flop_count(const Shape& image) const;
  /// "name: description <- inputs" per node.
  [[nodiscard]] std::vector<std::string> layer_list() const;
  [[nodiscard]] int count(LayerKind kind) const;
  [[nodiscard]] int count_irmb_blocks() const;

 private:
  std::vector<Node> nodes_;
  std::vector<int> outputs_;
  std::vector<int> strides_;
  ParamStore store_;
  std::vector<Tensor> acts_;
  Tensor image_;
};

/// YOLOv8n-shaped detector with the configured module substitutions.
/// Heads sit at strides 8, 16 and 32.
Graph build_network(const NetworkConfig& cfg, std::uint64_t seed);

/// Throws ConfigError unless the image is n x 3 x S x S with S a positive multiple of 32.
void check_image(const Tensor& image);

}  // namespace cci::net
