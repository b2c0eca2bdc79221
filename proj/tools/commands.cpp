#include "commands.hpp"

#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

#include "cci/config.hpp"
#include "cci/dataset.hpp"
#include "cci/error.hpp"
#include "cci/gradcheck.hpp"
#include "cci/image.hpp"
#include "cci/loss.hpp"
#include "cci/metrics.hpp"
#include "cci/network.hpp"
#include "cci/ops.hpp"
#include "cci/synthetic.hpp"
#include "cci/weights_io.hpp"

namespace cci::cli {

namespace {

// Decode threshold for ranking-based metrics; the user's --conf only sets
// the precision/recall cutoff.
constexpr float kEvalDecodeConf = 0.001f;

HarnessConfig read_config(const Common& common) {
  return common.config.empty() ? HarnessConfig{} : load_config(common.config);
}

net::Graph make_graph(const HarnessConfig& cfg, const Common& common) {
  net::Graph graph = net::build_network(cfg.network, common.seed);
  if (!common.weights.empty()) weights::load(graph.params(), common.weights);
  return graph;
}

std::string fmt(const char* format, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

std::string on_off(bool v) { return v ? "on" : "off"; }

std::string toggles(const net::NetworkConfig& n) {
  std::string stages;
  for (bool s : n.cgd_stages) stages += s ? '1' : '0';
  return "toggles: carafe " + on_off(n.use_carafe) + ", cgd " + on_off(n.use_cgd) + " (stages " +
         stages + "), irmb " + on_off(n.use_irmb);
}

void write_text(const fs::path& path, const std::string& text, std::ostream& out) {
  if (path.empty()) {
    out << text;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
  if (!f) throw IoError("write failed: " + path.string());
}

std::vector<BoundingBox> predict(net::Graph& graph, const Tensor& canvas, int input_size, float conf,
                                 float iou) {
  const std::vector<Tensor> heads = graph.forward(canvas, Mode::eval);
  return detect::nms(detect::decode(heads, graph.strides(), input_size, conf), iou);
}

struct Loaded {
  Tensor canvas;  // 1 x 3 x S x S
  image::Letterbox geometry;
  std::vector<BoundingBox> truth;  // source-normalized
};

Loaded load_sample(const data::Sample& s, int input_size, int num_classes) {
  Loaded l;
  const Tensor img = image::load(s.image);
  l.geometry = image::letterbox_geometry(img.w(), img.h(), input_size);
  l.canvas = image::letterbox(img, l.geometry);
  if (!s.labels.empty()) l.truth = data::read_labels(s.labels, num_classes);
  return l;
}

data::Split parse_split(const std::string& s) {
  if (s == "all") return data::Split::all;
  if (s == "train") return data::Split::train;
  if (s == "val") return data::Split::val;
  throw ConfigError("unknown split '" + s + "' (expected all, train or val)");
}

}  // namespace

int cmd_gradcheck(std::uint64_t seed, const std::string& filter, std::ostream& out) {
  const gradcheck::Report report = gradcheck::run(seed, filter);
  out << report.format();
  return report.passed() ? 0 : 1;
}

int cmd_params(const Common& common, std::ostream& out) {
  const HarnessConfig cfg = read_config(common);
  const net::Graph graph = make_graph(cfg, common);
  const int s = cfg.network.input_size;
  const Shape image{1, 3, s, s};
  const std::vector<std::int64_t> flops = graph.node_flops(image);
  const auto& nodes = graph.nodes();

  out << fmt("width %.4g  depth %.4g  classes %d  input %dx%d\n", cfg.network.width_multiple,
             cfg.network.depth_multiple, cfg.network.num_classes, s, s);
  out << toggles(cfg.network) << '\n';
  out << fmt("%-16s %10s %10s  %s\n", "node", "params", "GFLOPs", "layer");
  std::vector<std::pair<std::string, std::pair<std::int64_t, std::int64_t>>> stages;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const std::int64_t p = graph.node_params(static_cast<int>(i));
    out << fmt("%-16s %10lld %10.4f  ", nodes[i].name.c_str(), static_cast<long long>(p),
               static_cast<double>(flops[i]) * 1e-9)
        << nodes[i].layer->describe() << '\n';
    const std::string stage = nodes[i].name.substr(0, nodes[i].name.find('.'));
    if (stages.empty() || stages.back().first != stage) stages.push_back({stage, {0, 0}});
    stages.back().second.first += p;
    stages.back().second.second += flops[i];
  }
  for (const auto& [stage, counts] : stages) {
    out << fmt("stage %-10s params %10lld  GFLOPs %8.4f\n", stage.c_str(),
               static_cast<long long>(counts.first), static_cast<double>(counts.second) * 1e-9);
  }
  const std::int64_t total = graph.param_count();
  out << fmt("total params %lld (%.4f M)  GFLOPs %.4f\n", static_cast<long long>(total),
             static_cast<double>(total) * 1e-6, static_cast<double>(graph.flop_count(image)) * 1e-9);
  out << fmt("layers: %d cgd, %d carafe, %d irmb blocks\n", graph.count(net::LayerKind::cgd),
             graph.count(net::LayerKind::carafe), graph.count_irmb_blocks());
  out << "FLOPs = 2 x multiply-accumulates of convolutions, fully-connected layers, attention "
         "and reassembly products; activations, normalization and pooling are not counted.\n";
  return 0;
}

int cmd_infer(const Common& common, const InferOptions& opt, std::ostream& out) {
  if (opt.image.empty()) throw ConfigError("infer: --image is required");
  const HarnessConfig cfg = read_config(common);
  net::Graph graph = make_graph(cfg, common);
  const int s = cfg.network.input_size;
  const Tensor img = image::load(opt.image);
  const image::Letterbox geo = image::letterbox_geometry(img.w(), img.h(), s);
  std::string text;
  for (const BoundingBox& b : predict(graph, image::letterbox(img, geo), s, opt.conf, opt.iou)) {
    const BoundingBox src = image::to_source(b, geo);
    text += fmt("%d %.6f %.6f %.6f %.6f %.6f\n", src.class_id, src.confidence, src.cx, src.cy, src.w,
                src.h);
  }
  write_text(opt.output, text, out);
  return 0;
}

int cmd_eval(const Common& common, const EvalOptions& opt, std::ostream& out) {
  if (opt.data.empty()) throw ConfigError("eval: --data is required");
  const HarnessConfig cfg = read_config(common);
  net::Graph graph = make_graph(cfg, common);
  const data::DatasetIndex index = data::index_dataset(opt.data, cfg.class_names, parse_split(opt.split));
  if (index.samples.empty()) throw ConfigError("eval: no images in " + opt.data.string());
  const int s = cfg.network.input_size;
  std::vector<std::vector<BoundingBox>> preds;
  std::vector<std::vector<BoundingBox>> truth;
  for (const data::Sample& sample : index.samples) {
    Loaded l = load_sample(sample, s, cfg.network.num_classes);
    std::vector<BoundingBox> p = predict(graph, l.canvas, s, kEvalDecodeConf, opt.iou);
    for (BoundingBox& b : p) b = image::to_source(b, l.geometry);
    preds.push_back(std::move(p));
    truth.push_back(std::move(l.truth));
  }
  const metrics::EvalReport report = metrics::map_at(preds, truth, opt.conf);
  write_text(opt.output, metrics::format_report(report, cfg.class_names), out);
  return 0;
}

int cmd_train_toy(const Common& common, const TrainOptions& opt, std::ostream& out) {
  if (opt.data.empty()) throw ConfigError("train-toy: --data is required");
  if (opt.output.empty()) throw ConfigError("train-toy: --out is required");
  if (opt.steps < 0) throw ConfigError("train-toy: --steps must be >= 0");
  if (opt.batch < 1) throw ConfigError("train-toy: --batch must be >= 1");
  if (!(opt.lr >= 0.0f)) throw ConfigError("train-toy: --lr must be >= 0");
  const HarnessConfig cfg = read_config(common);
  net::Graph graph = make_graph(cfg, common);
  const data::DatasetIndex index = data::index_dataset(opt.data, cfg.class_names);
  if (index.samples.empty()) throw ConfigError("train-toy: no images in " + opt.data.string());
  const int s = cfg.network.input_size;

  // Everything lives in canvas coordinates during training.
  std::vector<Tensor> canvases;
  std::vector<std::vector<BoundingBox>> truth;
  for (const data::Sample& sample : index.samples) {
    Loaded l = load_sample(sample, s, cfg.network.num_classes);
    for (BoundingBox& b : l.truth) b = image::to_canvas(b, l.geometry);
    canvases.push_back(std::move(l.canvas));
    truth.push_back(std::move(l.truth));
  }
  struct Batch {
    Tensor images;
    std::vector<std::vector<BoundingBox>> truth;
  };
  std::vector<Batch> batches;
  for (std::size_t i = 0; i < canvases.size(); i += static_cast<std::size_t>(opt.batch)) {
    const std::size_t end = std::min(canvases.size(), i + static_cast<std::size_t>(opt.batch));
    Batch b;
    b.images = ops::stack_batch(std::span<const Tensor>(canvases.data() + i, end - i));
    b.truth.assign(truth.begin() + static_cast<std::ptrdiff_t>(i),
                   truth.begin() + static_cast<std::ptrdiff_t>(end));
    batches.push_back(std::move(b));
  }

  for (int step = 1; step <= opt.steps; ++step) {
    const Batch& b = batches[static_cast<std::size_t>(step - 1) % batches.size()];
    const train::LossResult r = train::train_step(graph, b.images, b.truth, opt.lr, cfg.loss);
    out << fmt("step %d loss %.6f obj %.6f cls %.6f box %.6f\n", step, r.total, r.objectness,
               r.classification, r.box)
        << std::flush;
  }
  weights::save(graph.params(), opt.output);

  std::vector<std::vector<BoundingBox>> preds;
  for (const Tensor& c : canvases) preds.push_back(predict(graph, c, s, kEvalDecodeConf, 0.45f));
  const metrics::EvalReport report = metrics::map_at(preds, truth);
  out << fmt("train images %zu  mAP50 %.4f  mAP50:95 %.4f\n", canvases.size(), report.map50,
             report.map50_95);
  out << "weights written to " << opt.output.string() << '\n';
  return 0;
}

int cmd_synth(std::uint64_t seed, const SynthOptions& opt, std::ostream& out) {
  if (opt.output.empty()) throw ConfigError("synth: --out is required");
  if (opt.count < 1 || opt.size < 8) throw ConfigError("synth: need --count >= 1 and --size >= 8");
  synth::write_dataset(opt.output, synth::make_toy_set(opt.count, opt.size, seed));
  out << "wrote " << opt.count << " images to " << opt.output.string() << '\n';
  return 0;
}

}  // namespace cci::cli
