#include <exception>
#include <iostream>

#include "CLI11.hpp"
#include "commands.hpp"

namespace {

void add_common(CLI::App* sub, cci::cli::Common& c, bool weights = true) {
  sub->add_option("--config", c.config, "key = value config file")->check(CLI::ExistingFile);
  if (weights) sub->add_option("--weights", c.weights, "weights file")->check(CLI::ExistingFile);
  sub->add_option("--seed", c.seed, "seed for weight initialisation (default 0)");
}

}  // namespace

int main(int argc, char** argv) {
  using namespace cci::cli;
  CLI::App app{"CCi-YOLOv8n operator library harness"};
  app.require_subcommand(1);

  std::uint64_t gc_seed = 0;
  std::string filter;
  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  gc->add_option("--seed", gc_seed);
  gc->add_option("--filter", filter, "module or op name (tensor-core, carafe, cgd, irmb, ...)");

  Common params_common;
  auto* params = app.add_subcommand("params", "parameter and FLOP counts");
  add_common(params, params_common);

  Common infer_common;
  InferOptions infer_opt;
  auto* infer = app.add_subcommand("infer", "detect objects in one image");
  add_common(infer, infer_common);
  infer->add_option("--image", infer_opt.image, "P6 or FKT1 image")->required()->check(CLI::ExistingFile);
  infer->add_option("--out", infer_opt.output, "detections file (default stdout)");
  infer->add_option("--conf", infer_opt.conf, "confidence threshold");
  infer->add_option("--iou", infer_opt.iou, "NMS IoU threshold");

  Common eval_common;
  EvalOptions eval_opt;
  auto* eval = app.add_subcommand("eval", "precision, recall and mAP over a dataset");
  add_common(eval, eval_common);
  eval->add_option("--data", eval_opt.data, "dataset root with images/ and labels/")->required();
  eval->add_option("--split", eval_opt.split, "all, train or val");
  eval->add_option("--out", eval_opt.output, "report file (default stdout)");
  eval->add_option("--conf", eval_opt.conf, "precision/recall confidence cutoff");
  eval->add_option("--iou", eval_opt.iou, "NMS IoU threshold");

  Common train_common;
  TrainOptions train_opt;
  auto* train = app.add_subcommand("train-toy", "gradient-descent training on a small dataset");
  add_common(train, train_common);
  train->add_option("--data", train_opt.data, "dataset root with images/ and labels/")->required();
  train->add_option("--out", train_opt.output, "weights file to write")->required();
  train->add_option("--steps", train_opt.steps);
  train->add_option("--batch", train_opt.batch, "images per step");
  train->add_option("--lr", train_opt.lr);

  std::uint64_t synth_seed = 0;
  SynthOptions synth_opt;
  auto* synth = app.add_subcommand("synth", "write a synthetic rectangle dataset");
  synth->add_option("--out", synth_opt.output)->required();
  synth->add_option("--count", synth_opt.count);
  synth->add_option("--size", synth_opt.size);
  synth->add_option("--seed", synth_seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "ERROR: " << e.what() << '\n';
    return 2;
  }

  try {
    if (*gc) return cmd_gradcheck(gc_seed, filter, std::cout);
    if (*params) return cmd_params(params_common, std::cout);
    if (*infer) return cmd_infer(infer_common, infer_opt, std::cout);
    if (*eval) return cmd_eval(eval_common, eval_opt, std::cout);
    if (*train) return cmd_train_toy(train_common, train_opt, std::cout);
    if (*synth) return cmd_synth(synth_seed, synth_opt, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "ERROR: " << e.what() << '\n';
    return 2;
  }
  return 2;
}
