#include "commands.hpp"

#include "mmfuse/checkpoint.hpp"
#include "mmfuse/config.hpp"
#include "mmfuse/grad_suite.hpp"
#include "mmfuse/synthetic.hpp"
#include "mmfuse/trainer.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>

namespace mmfuse::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<SampleRecord> load_manifest_samples(const fs::path& path, Task task) {
  return load_samples(load_manifest(path, task == Task::gesture));
}

void check_streams(const std::vector<SampleRecord>& samples, const ModelSpec& spec) {
  std::map<Modality, int> dims;
  int n_classes = 2;
  if (spec.task == Task::gesture) {
    dims = {{Modality::rgb, spec.cmtf.d_rgb}, {Modality::pose, spec.cmtf.d_pose}};
    n_classes = spec.cmtf.n_classes;
  } else {
    dims = {{Modality::ctx, spec.emotion.d_ctx}, {Modality::face, spec.emotion.d_face}};
  }
  for (const auto& s : samples) {
    for (const auto& [tag, d] : dims) {
      auto it = s.streams.find(tag);
      if (it == s.streams.end())
        throw ConfigError("sample " + s.id + " lacks the " + std::string(to_string(tag)) + " stream");
      if (it->second.dim() != d)
        throw ConfigError("sample " + s.id + " " + std::string(to_string(tag)) + " stream has dim " +
                          std::to_string(it->second.dim()) + ", model expects " + std::to_string(d));
    }
    if (s.label < 0 || s.label >= n_classes)
      throw ConfigError("sample " + s.id + " label " + std::to_string(s.label) + " outside [0, " +
                        std::to_string(n_classes) + ")");
  }
}

std::vector<SampleRecord> pick(const std::vector<SampleRecord>& all, const std::vector<std::size_t>& idx) {
  std::vector<SampleRecord> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(all[i]);
  return out;
}

std::vector<int> labels_of(const std::vector<SampleRecord>& s) {
  std::vector<int> out;
  for (const auto& r : s) out.push_back(r.label);
  return out;
}

}  // namespace

int cmd_gen_synth(const fs::path& config, std::ostream& out) {
  const RunConfig cfg = load_run_config(config);
  if (!cfg.data.synthetic) throw ConfigError("gen-synth needs a data.synthetic section");
  const SyntheticSpec& spec = *cfg.data.synthetic;
  const Manifest manifest = generate_synthetic_dataset(spec, cfg.output_dir);
  const auto samples = load_samples(manifest);
  std::vector<int> counts(static_cast<std::size_t>(spec.n_classes), 0);
  for (const auto& e : manifest.entries) ++counts[static_cast<std::size_t>(e.label)];
  json j;
  j["manifest"] = (cfg.output_dir / "manifest.jsonl").string();
  j["n"] = manifest.size();
  j["class_counts"] = counts;
  j["centroid_accuracy"] = nearest_centroid_accuracy(samples, spec.n_classes);
  out << j.dump() << '\n';
  return kExitOk;
}

int cmd_train(const fs::path& config, std::ostream& out) {
  const RunConfig cfg = load_run_config(config);
  validate_paths(cfg);
  const Task task = cfg.model.task;

  std::vector<SampleRecord> all;
  if (cfg.data.synthetic) all = generate_synthetic_samples(*cfg.data.synthetic);
  else if (cfg.data.manifest) all = load_manifest_samples(*cfg.data.manifest, task);
  else throw ConfigError("data needs a manifest or a synthetic section");
  check_streams(all, cfg.model);

  std::vector<SampleRecord> train, val;
  if (cfg.data.val_manifest) {
    train = std::move(all);
    val = load_manifest_samples(*cfg.data.val_manifest, task);
    check_streams(val, cfg.model);
  } else if (cfg.data.val_fraction > 0.0) {
    const Split split = stratified_split(labels_of(all), cfg.data.val_fraction, cfg.train.seed);
    train = pick(all, split.train);
    val = pick(all, split.val);
  } else {
    train = std::move(all);
  }
  if (train.empty()) throw ConfigError("training set is empty");

  fs::create_directories(cfg.output_dir);
  std::ofstream log(cfg.output_dir / "log.jsonl", std::ios::trunc);
  if (!log) throw ConfigError("cannot write " + (cfg.output_dir / "log.jsonl").string());
  auto on_epoch = [&](const EpochMetrics& m) { log << m.to_json_line(task) << '\n' << std::flush; };

  FitResult result;
  auto save = [&](const char* name, TaskTrainer& trainer, const TaskTrainer::Snapshot& state, int epoch,
                  const MemoryBank* memory) {
    trainer.restore(state);
    save_checkpoint(cfg.output_dir / "checkpoints" / name, cfg.model, trainer.parameters(), memory,
                    CheckpointMeta{epoch, state.refine_active});
  };

  if (task == Task::gesture) {
    gesture::GestureModel model(cfg.model.cmtf, cfg.model.variant, cfg.model.seed);
    std::optional<MemoryBank> memory;
    if (cfg.model.variant == gesture::Variant::cmtf_memory)
      memory.emplace(cfg.model.cmtf.n_classes, cfg.model.cmtf.d_hidden, cfg.model.memory);
    GestureTrainer trainer(model, memory ? &*memory : nullptr, cfg.model, cfg.train);
    result = fit(trainer, train, val, cfg.train, on_epoch);
    const MemoryBank* mem = memory ? &*memory : nullptr;
    save("final", trainer, result.final_state, static_cast<int>(result.log.size()), mem);
    save("best", trainer, result.best_state, result.best_epoch, mem);
  } else {
    emotion::EmotionModel model(cfg.model.emotion, cfg.model.seed);
    std::vector<double> weights;
    if (cfg.train.class_weights) weights = compute_class_weights(labels_of(train), 2);
    EmotionTrainer trainer(model, cfg.train, weights);
    result = fit(trainer, train, val, cfg.train, on_epoch);
    save("final", trainer, result.final_state, static_cast<int>(result.log.size()), nullptr);
    save("best", trainer, result.best_state, result.best_epoch, nullptr);
  }

  json j;
  j["output_dir"] = cfg.output_dir.string();
  j["epochs"] = result.log.size();
  j["best_epoch"] = result.best_epoch;
  j["stopped_early"] = result.stopped_early;
  j["best_metric"] = result.best_monitored;
  j["final_metric"] = result.log.back().metric;
  j["n_train"] = train.size();
  j["n_val"] = val.size();
  std::ofstream(cfg.output_dir / "summary.json", std::ios::trunc) << j.dump(2) << '\n';
  out << j.dump() << '\n';
  return kExitOk;
}

int cmd_eval(const fs::path& checkpoint, const fs::path& manifest, std::ostream& out) {
  LoadedModel loaded = load_checkpoint(checkpoint);
  if (!fs::exists(manifest)) throw ConfigError("manifest " + manifest.string() + " does not exist");
  const auto samples = load_manifest_samples(manifest, loaded.spec.task);
  check_streams(samples, loaded.spec);
  EvalResult r;
  if (loaded.gesture) {
    const MemoryBank* mem = loaded.memory ? &*loaded.memory : nullptr;
    r = evaluate_gesture(*loaded.gesture, mem, loaded.meta.refine_active, samples);
  } else {
    r = evaluate_emotion(*loaded.emotion, samples, 0.5);
  }
  json j;
  j["metric"] = r.metric;
  j["n"] = r.n;
  out << j.dump() << '\n';
  return kExitOk;
}

int cmd_grad_check(const std::string& module, bool negative_control, std::ostream& out) {
  const auto& names = grad_check_modules();
  std::vector<std::string> modules;
  if (module == "all") modules = names;
  else if (std::find(names.begin(), names.end(), module) != names.end()) modules = {module};
  else throw ConfigError("unknown grad-check module '" + module + "'");

  GradCheckOptions opts;
  if (negative_control) opts.analytic_scale = 2.0;
  bool ok = true;
  for (const auto& name : modules) {
    const GradCheckReport report = run_module_grad_check(name, opts);
    for (const auto& g : report.groups)
      out << json{{"module", name}, {"group", g.name}, {"coordinates", g.coordinates}, {"max_rel_error", g.max_rel_error}}
                 .dump()
          << '\n';
    json summary{{"module", name}, {"max_rel_error", report.max_rel_error}};
    if (negative_control) {
      // The doubled gradient must be caught: rel error |2a - a| / |2a| = 0.5.
      const bool detected = std::abs(report.max_rel_error - 0.5) <= 0.05;
      summary["negative_control"] = true;
      summary["detected"] = detected;
      ok = ok && detected;
    } else {
      summary["passed"] = report.passed(1e-4);
      ok = ok && report.passed(1e-4);
    }
    out << summary.dump() << '\n';
  }
  return ok ? kExitOk : kExitFailed;
}

int cmd_inspect_memory(const fs::path& checkpoint, std::ostream& out) {
  LoadedModel loaded = load_checkpoint(checkpoint);
  if (!loaded.memory) throw ConfigError("checkpoint " + checkpoint.string() + " has no memory bank");
  const MemoryBank& bank = *loaded.memory;
  const PrototypeSet protos = bank.prototypes();
  json classes = json::array();
  for (int c = 0; c < bank.n_classes(); ++c) {
    json e{{"class", c}, {"size", bank.size(c)}, {"cursor", bank.cursor(c)}};
    if (protos.has(c)) {
      RowVec mean = RowVec::Zero(bank.dim());
      for (const auto& s : bank.slots(c)) mean += s;
      mean /= static_cast<double>(bank.size(c));
      e["prototype_norm"] = protos.vectors.at(c).norm();
      e["mean_norm"] = mean.norm();
    }
    classes.push_back(e);
  }
  json j{{"capacity", bank.config().capacity}, {"dim", bank.dim()}, {"classes", classes}};
  out << j.dump() << '\n';
  return kExitOk;
}

}  // namespace mmfuse::cli
