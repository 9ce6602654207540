#pragma once

// Run configuration records and their JSON form. Parsing rejects unknown
// keys so a typo never silently falls back to a default.

#include "mmfuse/emotion.hpp"
#include "mmfuse/gesture.hpp"
#include "mmfuse/memory.hpp"
#include "mmfuse/synthetic.hpp"

#include <filesystem>
#include <optional>
#include <string>

namespace mmfuse {

struct ModelSpec {
  Task task = Task::gesture;
  gesture::CmtfConfig cmtf;
  gesture::Variant variant = gesture::Variant::cmtf_memory;
  MemoryConfig memory;
  emotion::EmotionConfig emotion;
  std::uint64_t seed = 0;

  void validate() const;
};

enum class LrSchedule { reduce_on_plateau, none };

struct TrainConfig {
  Task task = Task::gesture;
  double lr = 1e-4;
  double weight_decay = 1e-4;
  int batch_size = 8;
  int max_epochs = 20;
  LrSchedule schedule = LrSchedule::reduce_on_plateau;
  double plateau_factor = 0.1;
  int plateau_patience = 3;
  bool early_stopping = true;
  int early_stop_patience = 7;
  double focal_gamma = 0.5;
  bool class_weights = false;
  int alpha_warmup_epochs = 5;
  double refinement_margin = 0.2;
  int n_buckets = 4;
  bool balanced_sampling = true;
  bool track_train_metric = true;
  std::uint64_t seed = 0;

  void validate() const;
  // Default records for each task.
  static TrainConfig gesture_defaults();
  static TrainConfig emotion_defaults();
};

struct DataConfig {
  std::optional<std::filesystem::path> manifest;
  std::optional<std::filesystem::path> val_manifest;
  double val_fraction = 0.2;
  std::optional<SyntheticSpec> synthetic;
};

struct RunConfig {
  DataConfig data;
  ModelSpec model;
  TrainConfig train;
  std::filesystem::path output_dir = "run";
};

// Defaults are filled in per task before the document is applied.
RunConfig parse_run_config(const std::string& json_text, const std::filesystem::path& base_dir = ".");
RunConfig load_run_config(const std::filesystem::path& path);
// Checks that referenced inputs exist; called before any compute.
void validate_paths(const RunConfig& cfg);

std::string model_spec_to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const std::string& json_text);
std::string synthetic_spec_to_json(const SyntheticSpec& spec);

}  // namespace mmfuse
