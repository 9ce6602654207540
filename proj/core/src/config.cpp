#include "mmfuse/config.hpp"

#include <json.hpp>

#include <fstream>
#include <set>
#include <sstream>

namespace mmfuse {

namespace fs = std::filesystem;
using nlohmann::json;

void ModelSpec::validate() const {
  if (task == Task::gesture) {
    cmtf.validate();
    memory.validate();
  } else {
    emotion.validate();
  }
}

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("train.lr must be > 0");
  if (weight_decay < 0.0) throw ConfigError("train.weight_decay must be >= 0");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (max_epochs < 1) throw ConfigError("train.max_epochs must be >= 1");
  if (plateau_patience < 1) throw ConfigError("train.plateau_patience must be >= 1");
  if (!(plateau_factor > 0.0 && plateau_factor < 1.0)) throw ConfigError("train.plateau_factor must be in (0, 1)");
  if (early_stop_patience < 1) throw ConfigError("train.early_stop_patience must be >= 1");
  if (focal_gamma < 0.0) throw ConfigError("train.focal_gamma must be >= 0");
  if (alpha_warmup_epochs < 0) throw ConfigError("train.alpha_warmup_epochs must be >= 0");
  if (n_buckets < 1) throw ConfigError("train.n_buckets must be >= 1");
  if (refinement_margin < 0.0) throw ConfigError("train.refinement_margin must be >= 0");
}

TrainConfig TrainConfig::gesture_defaults() {
  TrainConfig c;
  c.task = Task::gesture;
  c.lr = 1e-4;
  c.weight_decay = 1e-4;
  c.class_weights = false;
  c.balanced_sampling = true;
  return c;
}

TrainConfig TrainConfig::emotion_defaults() {
  TrainConfig c;
  c.task = Task::emotion;
  c.lr = 1e-5;
  c.weight_decay = 1e-4;
  c.focal_gamma = 0.5;
  c.class_weights = true;
  c.balanced_sampling = false;
  c.n_buckets = 1;
  return c;
}

namespace {

// Reads keys from one JSON object and fails on anything left unread.
class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw ConfigError(name_ + " must be a JSON object");
  }
  ~Section() noexcept(false) {
    if (std::uncaught_exceptions() == 0) finish();
  }

  bool has(const char* key) const { return j_.contains(key); }

  template <typename T>
  void read(const char* key, T& out) {
    if (!j_.contains(key)) return;
    used_.insert(key);
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(name_ + "." + key + ": " + e.what());
    }
  }

  const json& sub(const char* key) {
    used_.insert(key);
    return j_.at(key);
  }

  const std::string& name() const { return name_; }

  void finish() {
    for (const auto& [k, v] : j_.items())
      if (!used_.count(k)) throw ConfigError("unknown key '" + name_ + "." + k + "'");
  }

 private:
  const json& j_;
  std::string name_;
  std::set<std::string> used_;
};

SyntheticSpec parse_synthetic(const json& j, Task task) {
  SyntheticSpec s;
  s.task = task;
  s.n_classes = task == Task::emotion ? 2 : 8;
  Section sec(j, "data.synthetic");
  std::string task_name;
  sec.read("task", task_name);
  if (!task_name.empty()) s.task = task_from_string(task_name);
  sec.read("n_classes", s.n_classes);
  sec.read("n_samples", s.n_samples);
  sec.read("min_length", s.min_length);
  sec.read("max_length", s.max_length);
  sec.read("rho", s.rho);
  sec.read("noise", s.noise);
  sec.read("seed", s.seed);
  sec.read("signal", s.signal);
  sec.read("salient_fraction", s.salient_fraction);
  sec.read("jitter", s.jitter);
  sec.read("activity_axis", s.activity_axis);
  sec.read("class_proportions", s.class_proportions);
  if (sec.has("dims")) {
    const json& d = sec.sub("dims");
    if (!d.is_object()) throw ConfigError("data.synthetic.dims must be an object");
    for (const auto& [k, v] : d.items()) s.dims[modality_from_string(k)] = v.get<int>();
  }
  sec.finish();
  s.validate();
  return s;
}

void apply_model(const json& j, ModelSpec& m) {
  Section sec(j, "model");
  std::string variant;
  sec.read("variant", variant);
  if (!variant.empty()) m.variant = gesture::variant_from_string(variant);
  int d_hidden = -1, n_heads = -1;
  sec.read("d_hidden", d_hidden);
  sec.read("n_heads", n_heads);
  if (d_hidden > 0) m.cmtf.d_hidden = m.emotion.d_hidden = d_hidden;
  if (n_heads > 0) m.cmtf.n_heads = m.emotion.n_heads = n_heads;
  sec.read("d_rgb", m.cmtf.d_rgb);
  sec.read("d_pose", m.cmtf.d_pose);
  sec.read("n_classes", m.cmtf.n_classes);
  sec.read("classify_refined", m.cmtf.classify_refined);
  if (sec.has("memory")) {
    Section mem(sec.sub("memory"), "model.memory");
    mem.read("capacity", m.memory.capacity);
    mem.read("top_k", m.memory.top_k);
    mem.read("momentum", m.memory.momentum);
    mem.read("confidence_threshold", m.memory.confidence_threshold);
    mem.finish();
  }
  sec.read("d_ctx", m.emotion.d_ctx);
  sec.read("d_face", m.emotion.d_face);
  sec.read("encoder_depth", m.emotion.encoder_depth);
  sec.read("dropout", m.emotion.dropout);
  sec.read("ffn_multiplier", m.emotion.ffn_multiplier);
  std::string gate;
  sec.read("gate_mode", gate);
  if (!gate.empty()) m.emotion.gate_mode = emotion::gate_mode_from_string(gate);
  sec.read("outer_residual", m.emotion.outer_residual);
  sec.read("seed", m.seed);
  std::string task;
  sec.read("task", task);  // already consumed by the caller
  sec.finish();
}

void apply_train(const json& j, TrainConfig& t) {
  Section sec(j, "train");
  std::string task;
  sec.read("task", task);
  if (!task.empty() && task_from_string(task) != t.task) throw ConfigError("train.task disagrees with model.task");
  sec.read("lr", t.lr);
  sec.read("weight_decay", t.weight_decay);
  sec.read("batch_size", t.batch_size);
  sec.read("max_epochs", t.max_epochs);
  std::string schedule;
  sec.read("schedule", schedule);
  if (schedule == "reduce_on_plateau") t.schedule = LrSchedule::reduce_on_plateau;
  else if (schedule == "none") t.schedule = LrSchedule::none;
  else if (!schedule.empty()) throw ConfigError("train.schedule must be reduce_on_plateau or none");
  sec.read("plateau_factor", t.plateau_factor);
  sec.read("plateau_patience", t.plateau_patience);
  sec.read("early_stopping", t.early_stopping);
  sec.read("early_stop_patience", t.early_stop_patience);
  sec.read("focal_gamma", t.focal_gamma);
  sec.read("class_weights", t.class_weights);
  sec.read("alpha_warmup_epochs", t.alpha_warmup_epochs);
  sec.read("refinement_margin", t.refinement_margin);
  sec.read("n_buckets", t.n_buckets);
  sec.read("balanced_sampling", t.balanced_sampling);
  sec.read("track_train_metric", t.track_train_metric);
  sec.read("seed", t.seed);
  sec.finish();
}

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path = p;
  return path.is_relative() ? base / path : path;
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text, const fs::path& base_dir) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig cfg;
  Section top(root, "config");

  Task task = Task::gesture;
  if (top.has("model")) {
    const json& model = root.at("model");
    if (model.is_object() && model.contains("task")) task = task_from_string(model.at("task").get<std::string>());
  }
  cfg.model.task = task;
  cfg.train = task == Task::gesture ? TrainConfig::gesture_defaults() : TrainConfig::emotion_defaults();
  if (task == Task::gesture) cfg.model.cmtf.n_heads = 8;
  else cfg.model.emotion.n_heads = 4;

  if (top.has("model")) apply_model(top.sub("model"), cfg.model);
  if (top.has("train")) apply_train(top.sub("train"), cfg.train);
  if (top.has("data")) {
    Section data(top.sub("data"), "data");
    std::string manifest, val_manifest;
    data.read("manifest", manifest);
    data.read("val_manifest", val_manifest);
    data.read("val_fraction", cfg.data.val_fraction);
    if (!manifest.empty()) cfg.data.manifest = resolve(base_dir, manifest);
    if (!val_manifest.empty()) cfg.data.val_manifest = resolve(base_dir, val_manifest);
    if (data.has("synthetic")) cfg.data.synthetic = parse_synthetic(data.sub("synthetic"), task);
    data.finish();
    if (cfg.data.manifest && cfg.data.synthetic) throw ConfigError("data: give either manifest or synthetic, not both");
  }
  if (top.has("output")) {
    Section out(top.sub("output"), "output");
    std::string dir;
    out.read("dir", dir);
    if (!dir.empty()) cfg.output_dir = resolve(base_dir, dir);
    out.finish();
  }
  top.finish();

  cfg.model.validate();
  cfg.train.validate();
  if (cfg.data.val_fraction < 0.0 || cfg.data.val_fraction >= 1.0) throw ConfigError("data.val_fraction must be in [0, 1)");
  if (cfg.data.synthetic && cfg.data.synthetic->task != task) throw ConfigError("data.synthetic.task disagrees with model.task");
  return cfg;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), path.has_parent_path() ? path.parent_path() : fs::path("."));
}

void validate_paths(const RunConfig& cfg) {
  if (cfg.data.manifest && !fs::exists(*cfg.data.manifest))
    throw ConfigError("data.manifest " + cfg.data.manifest->string() + " does not exist");
  if (cfg.data.val_manifest && !fs::exists(*cfg.data.val_manifest))
    throw ConfigError("data.val_manifest " + cfg.data.val_manifest->string() + " does not exist");
}

std::string model_spec_to_json(const ModelSpec& m) {
  json j;
  j["task"] = std::string(to_string(m.task));
  j["seed"] = m.seed;
  if (m.task == Task::gesture) {
    j["variant"] = std::string(gesture::to_string(m.variant));
    j["d_rgb"] = m.cmtf.d_rgb;
    j["d_pose"] = m.cmtf.d_pose;
    j["d_hidden"] = m.cmtf.d_hidden;
    j["n_heads"] = m.cmtf.n_heads;
    j["n_classes"] = m.cmtf.n_classes;
    j["classify_refined"] = m.cmtf.classify_refined;
    j["memory"] = {{"capacity", m.memory.capacity},
                   {"top_k", m.memory.top_k},
                   {"momentum", m.memory.momentum},
                   {"confidence_threshold", m.memory.confidence_threshold}};
  } else {
    j["d_ctx"] = m.emotion.d_ctx;
    j["d_face"] = m.emotion.d_face;
    j["d_hidden"] = m.emotion.d_hidden;
    j["n_heads"] = m.emotion.n_heads;
    j["encoder_depth"] = m.emotion.encoder_depth;
    j["dropout"] = m.emotion.dropout;
    j["ffn_multiplier"] = m.emotion.ffn_multiplier;
    j["gate_mode"] = std::string(emotion::to_string(m.emotion.gate_mode));
    j["outer_residual"] = m.emotion.outer_residual;
  }
  return j.dump(2);
}

ModelSpec model_spec_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model spec is not valid JSON: ") + e.what());
  }
  ModelSpec m;
  m.task = task_from_string(j.at("task").get<std::string>());
  if (m.task == Task::emotion) m.emotion.n_heads = 4;
  apply_model(j, m);
  m.validate();
  return m;
}

std::string synthetic_spec_to_json(const SyntheticSpec& s) {
  json j;
  j["task"] = std::string(to_string(s.task));
  j["n_classes"] = s.n_classes;
  j["n_samples"] = s.n_samples;
  j["min_length"] = s.min_length;
  j["max_length"] = s.max_length;
  j["rho"] = s.rho;
  j["noise"] = s.noise;
  j["seed"] = s.seed;
  j["signal"] = s.signal;
  j["salient_fraction"] = s.salient_fraction;
  j["jitter"] = s.jitter;
  j["activity_axis"] = s.activity_axis;
  json dims = json::object();
  for (const auto& [tag, d] : s.resolved_dims()) dims[std::string(to_string(tag))] = d;
  j["dims"] = dims;
  if (!s.class_proportions.empty()) j["class_proportions"] = s.class_proportions;
  return j.dump();
}

}  // namespace mmfuse
