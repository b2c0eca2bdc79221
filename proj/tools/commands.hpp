#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>

namespace cci::cli {

namespace fs = std::filesystem;

struct Common {
  fs::path config;  // empty: built-in defaults
  fs::path weights;  // empty: weights initialised from `seed`
  std::uint64_t seed = 0;
};

/// Returns the process exit code: 0 when every check passes.
int cmd_gradcheck(std::uint64_t seed, const std::string& filter, std::ostream& out);

/// Per-node, per-stage and total parameter and FLOP counts plus the toggle set.
int cmd_params(const Common& common, std::ostream& out);

struct InferOptions {
  fs::path image;
  fs::path output;  // empty: write to `out`
  float conf = 0.25f;
  float iou = 0.45f;
};
/// One "class confidence cx cy w h" line per detection, normalized to the source image.
int cmd_infer(const Common& common, const InferOptions& opt, std::ostream& out);

struct EvalOptions {
  fs::path data;
  fs::path output;
  std::string split = "all";
  float conf = 0.25f;  // precision/recall cutoff
  float iou = 0.45f;   // NMS threshold
};
int cmd_eval(const Common& common, const EvalOptions& opt, std::ostream& out);

struct TrainOptions {
  fs::path data;
  fs::path output;  // weights file
  int steps = 300;
  int batch = 8;
  float lr = 1e-3f;
};
/// Logs one "step N loss L" line per step, writes the weights, then reports
/// train-set metrics.
int cmd_train_toy(const Common& common, const TrainOptions& opt, std::ostream& out);

struct SynthOptions {
  fs::path output;
  int count = 8;
  int size = 160;
};
int cmd_synth(std::uint64_t seed, const SynthOptions& opt, std::ostream& out);

}  // namespace cci::cli
