#pragma once

// Epoch loop for both tasks: batching, loss, AdamW step, memory updates,
// validation, plateau scheduling and early stopping with best-state restore.

#include "mmfuse/config.hpp"
#include "mmfuse/emotion.hpp"
#include "mmfuse/gesture.hpp"
#include "mmfuse/memory.hpp"
#include "mmfuse/optimizer.hpp"
#include "mmfuse/schedule.hpp"

#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mmfuse {

struct EpochMetrics {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double train_lc = 0.0;  // classification term
  double train_lp = 0.0;  // refinement term (gesture memory models)
  double alpha = 0.0;
  double val_loss = 0.0;
  double metric = 0.0;  // top-1 (gesture) or binary accuracy (emotion) on validation
  double train_metric = std::numeric_limits<double>::quiet_NaN();
  double lr = 0.0;
  bool refine_active = false;
  bool stopped_early = false;

  // One JSON object, no trailing newline.
  std::string to_json_line(Task task) const;
};

struct EvalResult {
  double loss = 0.0;
  double metric = 0.0;
  std::size_t n = 0;
};

struct TrainStats {
  double loss = 0.0;
  double lc = 0.0;
  double lp = 0.0;
  double alpha = 0.0;
  bool refine_active = false;
};

// Task-specific half of the loop.
class TaskTrainer {
 public:
  virtual ~TaskTrainer() = default;

  // epoch is zero-based.
  virtual TrainStats train_epoch(const std::vector<SampleRecord>& data, int epoch, double lr) = 0;
  virtual EvalResult evaluate(const std::vector<SampleRecord>& data) = 0;
  virtual ParamList parameters() = 0;
  virtual MonitorMode monitor_mode() const = 0;
  // Metric the early stopper watches.
  virtual double monitored(const EvalResult& r) const = 0;

  // Full restorable state (parameters plus anything else that shapes the
  // forward pass).
  struct Snapshot {
    std::vector<Mat> values;
    std::optional<MemoryBank> memory;
    bool refine_active = false;
  };
  virtual Snapshot snapshot();
  virtual void restore(const Snapshot& s);
};

class GestureTrainer : public TaskTrainer {
 public:
  // memory may be null; it is required for the cmtf_memory variant.
  GestureTrainer(gesture::GestureModel& model, MemoryBank* memory, const ModelSpec& spec, const TrainConfig& cfg);

  TrainStats train_epoch(const std::vector<SampleRecord>& data, int epoch, double lr) override;
  EvalResult evaluate(const std::vector<SampleRecord>& data) override;
  ParamList parameters() override { return model_.parameters(); }
  MonitorMode monitor_mode() const override { return MonitorMode::maximize; }
  double monitored(const EvalResult& r) const override { return r.metric; }
  Snapshot snapshot() override;
  void restore(const Snapshot& s) override;

  bool refine_active() const { return refine_active_; }
  const AlphaSchedule& alpha_schedule() const { return schedule_; }

 private:
  gesture::GestureModel& model_;
  MemoryBank* memory_;
  ModelSpec spec_;
  TrainConfig cfg_;
  AlphaSchedule schedule_;
  AdamW opt_;
  std::vector<double> class_weights_;
  bool refine_active_ = false;
};

class EmotionTrainer : public TaskTrainer {
 public:
  EmotionTrainer(emotion::EmotionModel& model, const TrainConfig& cfg, std::vector<double> class_weights = {});

  TrainStats train_epoch(const std::vector<SampleRecord>& data, int epoch, double lr) override;
  EvalResult evaluate(const std::vector<SampleRecord>& data) override;
  ParamList parameters() override { return model_.parameters(); }
  MonitorMode monitor_mode() const override { return MonitorMode::minimize; }
  double monitored(const EvalResult& r) const override { return r.loss; }

 private:
  emotion::EmotionModel& model_;
  TrainConfig cfg_;
  AdamW opt_;
  std::vector<double> class_weights_;
};

struct FitResult {
  std::vector<EpochMetrics> log;
  bool stopped_early = false;
  int best_epoch = 0;  // 1-based
  double best_monitored = std::numeric_limits<double>::quiet_NaN();
  TaskTrainer::Snapshot best_state;
  TaskTrainer::Snapshot final_state;  // state after the last epoch, before any restore
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

// Runs up to cfg.max_epochs epochs. On early stop the best-epoch state is
// restored into the model. The callback sees each log entry as it is made.
FitResult fit(TaskTrainer& trainer, const std::vector<SampleRecord>& train, const std::vector<SampleRecord>& val,
              const TrainConfig& cfg, const EpochCallback& on_epoch = {});

// Inference-mode evaluation shared by the trainers and `mmfuse eval`.
EvalResult evaluate_gesture(gesture::GestureModel& model, const MemoryBank* memory, bool refine,
                            const std::vector<SampleRecord>& data, std::span<const double> class_weights = {});
EvalResult evaluate_emotion(emotion::EmotionModel& model, const std::vector<SampleRecord>& data, double gamma,
                            std::span<const double> class_weights = {});

// Deterministic seed derivation for per-epoch streams.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

// Top-1 accuracy of row-wise argmax against labels.
double top1_accuracy(const Mat& logits, const std::vector<int>& labels);
// Fraction of logits whose sign (logit > 0 -> 1) matches the label.
double binary_accuracy(const Mat& logits, const std::vector<int>& labels);

}  // namespace mmfuse
