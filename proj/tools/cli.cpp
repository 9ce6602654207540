#include "commands.hpp"

#include "mmfuse/types.hpp"

#include <CLI11.hpp>

#include <ostream>

namespace mmfuse::cli {

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"mmfuse: multimodal fusion models over precomputed embeddings"};
  app.require_subcommand(1);

  std::string config, checkpoint, manifest, module;
  bool negative = false;

  auto* gen = app.add_subcommand("gen-synth", "Write a synthetic embedding dataset and manifest");
  gen->add_option("--config", config, "Run configuration JSON")->required();
  auto* train = app.add_subcommand("train", "Train a model; writes log.jsonl and checkpoints");
  train->add_option("--config", config, "Run configuration JSON")->required();
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a manifest");
  eval->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required();
  eval->add_option("--manifest", manifest, "Manifest (JSON lines)")->required();
  auto* grad = app.add_subcommand("grad-check", "Finite-difference gradient check of one module (or 'all')");
  grad->add_option("module", module, "Module name")->required();
  grad->add_flag("--negative-control", negative, "Scale analytic gradients by 2; the check must flag it");
  auto* inspect = app.add_subcommand("inspect-memory", "Dump memory bank sizes and prototype norms");
  inspect->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*gen) return cmd_gen_synth(config, out);
    if (*train) return cmd_train(config, out);
    if (*eval) return cmd_eval(checkpoint, manifest, out);
    if (*grad) return cmd_grad_check(module, negative, out);
    if (*inspect) return cmd_inspect_memory(checkpoint, out);
  } catch (const NumericError& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const Error& e) {
    // Config, load and shape errors are all problems with the inputs.
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailed;
  }
  return kExitConfig;
}

}  // namespace mmfuse::cli
