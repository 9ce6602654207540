#include "mmfuse/trainer.hpp"

#include "mmfuse/losses.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace mmfuse {

using nlohmann::json;

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

int argmax(const Eigen::Ref<const RowVec>& row) {
  Eigen::Index best = 0;
  row.maxCoeff(&best);
  return static_cast<int>(best);
}

double softmax_prob(const Eigen::Ref<const RowVec>& row, int cls) {
  const double mx = row.maxCoeff();
  const double z = (row.array() - mx).exp().sum();
  return std::exp(row(cls) - mx) / z;
}

std::vector<int> labels_of(const std::vector<SampleRecord>& data) {
  std::vector<int> out;
  out.reserve(data.size());
  for (const auto& s : data) out.push_back(s.label);
  return out;
}

const EmbeddingSequence& stream(const SampleRecord& s, Modality m) {
  auto it = s.streams.find(m);
  if (it == s.streams.end()) throw ShapeError("sample " + s.id + " has no " + std::string(to_string(m)) + " stream");
  return it->second;
}

[[noreturn]] void non_finite(int epoch, std::size_t batch, const std::vector<std::string>& ids) {
  std::string msg = "non-finite loss at epoch " + std::to_string(epoch + 1) + ", batch " + std::to_string(batch) +
                    " (samples:";
  for (const auto& id : ids) msg += " " + id;
  throw NumericError(msg + ")");
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return splitmix(splitmix(splitmix(seed) ^ a) ^ b);
}

double top1_accuracy(const Mat& logits, const std::vector<int>& labels) {
  if (labels.empty()) return 0.0;
  std::size_t hit = 0;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) hit += argmax(logits.row(r)) == labels[static_cast<std::size_t>(r)];
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

double binary_accuracy(const Mat& logits, const std::vector<int>& labels) {
  if (labels.empty()) return 0.0;
  std::size_t hit = 0;
  for (Eigen::Index r = 0; r < logits.rows(); ++r)
    hit += static_cast<int>(logits(r, 0) > 0.0) == labels[static_cast<std::size_t>(r)];
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

std::string EpochMetrics::to_json_line(Task task) const {
  json j;
  j["epoch"] = epoch;
  j["train_loss"] = train_loss;
  j["val_loss"] = val_loss;
  j["metric"] = metric;
  j["lr"] = lr;
  if (task == Task::gesture) {
    j["train_lc"] = train_lc;
    j["train_lp"] = train_lp;
    j["alpha"] = alpha;
    j["refine_active"] = refine_active;
  }
  if (std::isfinite(train_metric)) j["train_metric"] = train_metric;
  if (stopped_early) j["stopped_early"] = true;
  return j.dump();
}

TaskTrainer::Snapshot TaskTrainer::snapshot() {
  Snapshot s;
  for (auto* p : parameters()) s.values.push_back(p->value);
  return s;
}

void TaskTrainer::restore(const Snapshot& s) {
  const ParamList params = parameters();
  if (params.size() != s.values.size()) throw ShapeError("snapshot does not match the model");
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = s.values[i];
}

// ---------------------------------------------------------------- gesture

GestureTrainer::GestureTrainer(gesture::GestureModel& model, MemoryBank* memory, const ModelSpec& spec,
                               const TrainConfig& cfg)
    : model_(model),
      memory_(memory),
      spec_(spec),
      cfg_(cfg),
      opt_(model.parameters(), AdamWOptions{.weight_decay = cfg.weight_decay}) {
  schedule_.warmup_epochs = cfg.alpha_warmup_epochs;
  if (model.variant() == gesture::Variant::cmtf_memory && memory == nullptr)
    throw ConfigError("cmtf_memory variant needs a memory bank");
  if (memory != nullptr && memory->dim() != model.config().d_hidden)
    throw ConfigError("memory dim does not match d_hidden");
}

TrainStats GestureTrainer::train_epoch(const std::vector<SampleRecord>& data, int epoch, double lr) {
  if (data.empty()) throw ConfigError("empty training set");
  const int n_classes = model_.config().n_classes;
  const std::vector<int> labels = labels_of(data);
  if (cfg_.class_weights) class_weights_ = compute_class_weights(labels, n_classes);

  std::vector<std::size_t> order(data.size());
  if (cfg_.balanced_sampling) {
    order = balanced_sample_indices(labels, n_classes, data.size(), derive_seed(cfg_.seed, epoch, 1));
  } else {
    std::iota(order.begin(), order.end(), std::size_t{0});
  }
  std::vector<int> lengths;
  lengths.reserve(order.size());
  for (auto i : order) lengths.push_back(static_cast<int>(data[i].length()));
  const auto batches = bucket_batches(lengths, cfg_.batch_size, cfg_.n_buckets, derive_seed(cfg_.seed, epoch, 2));

  const bool use_memory = model_.variant() == gesture::Variant::cmtf_memory;
  refine_active_ = use_memory && epoch >= schedule_.warmup_epochs;
  const double alpha = schedule_.alpha(epoch);

  TrainStats stats;
  stats.alpha = alpha;
  stats.refine_active = refine_active_;
  double sum_total = 0.0, sum_lc = 0.0, sum_lp = 0.0;

  // Prototypes are a per-epoch snapshot of the bank.
  const PrototypeSet protos = use_memory ? memory_->prototypes() : PrototypeSet{};
  for (std::size_t b = 0; b < batches.size(); ++b) {
    opt_.zero_grad();
    ad::Tape tape(true);
    std::vector<ad::Var> fused, refined;
    std::vector<RowVec> pooled;
    std::vector<int> y;
    std::vector<std::string> ids;
    for (auto k : batches[b]) {
      const SampleRecord& s = data[order[k]];
      const auto& rgb = stream(s, Modality::rgb);
      const auto& pose = stream(s, Modality::pose);
      auto out = model_.forward_sample(tape, rgb.data, pose.data, rgb.mask, memory_, refine_active_);
      fused.push_back(out.fused);
      refined.push_back(out.refined);
      pooled.emplace_back(out.pooled.value().row(0));
      y.push_back(s.label);
      ids.push_back(s.id);
    }
    ad::Var lc = cross_entropy(ad::concat_rows(fused), y, class_weights_);
    ad::Var loss = lc;
    double lp_value = 0.0;
    if (use_memory && !protos.empty()) {
      ad::Var lp = refinement_loss(tape, refined, y, protos, cfg_.refinement_margin);
      lp_value = lp.scalar();
      if (alpha != 0.0) loss = ad::add(lc, ad::scale(lp, alpha));
    }
    const double total = total_loss(lc.scalar(), lp_value, epoch, schedule_);
    if (!std::isfinite(total) || !std::isfinite(loss.scalar())) non_finite(epoch, b, ids);
    tape.backward(loss);
    opt_.step(lr);

    sum_total += total;
    sum_lc += lc.scalar();
    sum_lp += lp_value;

    if (use_memory) {
      // Pre-refinement pooled features and the pre-step prediction.
      for (std::size_t i = 0; i < fused.size(); ++i) {
        const RowVec logits = fused[i].value().row(0);
        const int pred = argmax(logits);
        memory_->maybe_insert(pooled[i], pred, y[i], softmax_prob(logits, pred));
      }
    }
  }
  const double n = static_cast<double>(batches.size());
  stats.loss = sum_total / n;
  stats.lc = sum_lc / n;
  stats.lp = sum_lp / n;
  return stats;
}

EvalResult evaluate_gesture(gesture::GestureModel& model, const MemoryBank* memory, bool refine,
                            const std::vector<SampleRecord>& data, std::span<const double> class_weights) {
  EvalResult r;
  r.n = data.size();
  if (data.empty()) return r;
  Mat logits(static_cast<Eigen::Index>(data.size()), model.config().n_classes);
  for (std::size_t i = 0; i < data.size(); ++i) {
    ad::Tape tape(false);
    const auto& rgb = stream(data[i], Modality::rgb);
    const auto& pose = stream(data[i], Modality::pose);
    auto out = model.forward_sample(tape, rgb.data, pose.data, rgb.mask, memory, refine);
    logits.row(static_cast<Eigen::Index>(i)) = out.fused.value().row(0);
  }
  const std::vector<int> labels = labels_of(data);
  r.loss = cross_entropy(logits, labels, class_weights);
  r.metric = top1_accuracy(logits, labels);
  return r;
}

EvalResult GestureTrainer::evaluate(const std::vector<SampleRecord>& data) {
  return evaluate_gesture(model_, memory_, refine_active_, data, class_weights_);
}

TaskTrainer::Snapshot GestureTrainer::snapshot() {
  Snapshot s = TaskTrainer::snapshot();
  if (memory_ != nullptr) s.memory = *memory_;
  s.refine_active = refine_active_;
  return s;
}

void GestureTrainer::restore(const Snapshot& s) {
  TaskTrainer::restore(s);
  if (memory_ != nullptr && s.memory) *memory_ = *s.memory;
  refine_active_ = s.refine_active;
}

// ---------------------------------------------------------------- emotion

EmotionTrainer::EmotionTrainer(emotion::EmotionModel& model, const TrainConfig& cfg, std::vector<double> class_weights)
    : model_(model),
      cfg_(cfg),
      opt_(model.parameters(), AdamWOptions{.weight_decay = cfg.weight_decay}),
      class_weights_(std::move(class_weights)) {
  if (!class_weights_.empty() && class_weights_.size() != 2) throw ConfigError("emotion class weights need 2 entries");
}

TrainStats EmotionTrainer::train_epoch(const std::vector<SampleRecord>& data, int epoch, double lr) {
  if (data.empty()) throw ConfigError("empty training set");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 shuffle_rng(derive_seed(cfg_.seed, epoch, 3));
  std::shuffle(order.begin(), order.end(), shuffle_rng);
  nn::Rng dropout_rng(derive_seed(cfg_.seed, epoch, 4));

  const std::size_t bs = static_cast<std::size_t>(cfg_.batch_size);
  TrainStats stats;
  double sum = 0.0;
  std::size_t n_batches = 0;
  for (std::size_t start = 0; start < order.size(); start += bs, ++n_batches) {
    const std::size_t end = std::min(order.size(), start + bs);
    opt_.zero_grad();
    ad::Tape tape(true);
    std::vector<ad::Var> logits;
    std::vector<int> y;
    std::vector<std::string> ids;
    for (std::size_t k = start; k < end; ++k) {
      const SampleRecord& s = data[order[k]];
      const auto& ctx = stream(s, Modality::ctx);
      const auto& face = stream(s, Modality::face);
      logits.push_back(model_.forward_sample(tape, ctx.data, face.data, ctx.mask, true, dropout_rng));
      y.push_back(s.label);
      ids.push_back(s.id);
    }
    ad::Var loss = focal_loss(ad::concat_rows(logits), y, cfg_.focal_gamma, class_weights_);
    if (!std::isfinite(loss.scalar())) non_finite(epoch, n_batches, ids);
    tape.backward(loss);
    opt_.step(lr);
    sum += loss.scalar();
  }
  stats.loss = stats.lc = sum / static_cast<double>(n_batches);
  return stats;
}

EvalResult evaluate_emotion(emotion::EmotionModel& model, const std::vector<SampleRecord>& data, double gamma,
                            std::span<const double> class_weights) {
  EvalResult r;
  r.n = data.size();
  if (data.empty()) return r;
  Mat logits(static_cast<Eigen::Index>(data.size()), 1);
  nn::Rng unused(0);
  double sum = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    ad::Tape tape(false);
    const auto& ctx = stream(data[i], Modality::ctx);
    const auto& face = stream(data[i], Modality::face);
    const double z = model.forward_sample(tape, ctx.data, face.data, ctx.mask, false, unused).scalar();
    logits(static_cast<Eigen::Index>(i), 0) = z;
    const int t = data[i].label;
    const double w = class_weights.empty() ? 1.0 : class_weights[static_cast<std::size_t>(t)];
    sum += focal_loss(z, t, gamma, w);
  }
  r.loss = sum / static_cast<double>(data.size());
  r.metric = binary_accuracy(logits, labels_of(data));
  return r;
}

EvalResult EmotionTrainer::evaluate(const std::vector<SampleRecord>& data) {
  return evaluate_emotion(model_, data, cfg_.focal_gamma, class_weights_);
}

// ---------------------------------------------------------------- loop

FitResult fit(TaskTrainer& trainer, const std::vector<SampleRecord>& train, const std::vector<SampleRecord>& val,
              const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  const std::vector<SampleRecord>& monitor_set = val.empty() ? train : val;
  FitResult result;
  PlateauState plateau;
  plateau.lr = cfg.lr;
  const PlateauOptions popts{cfg.plateau_factor, cfg.plateau_patience, 1e-6};
  EarlyStopState es;
  TaskTrainer::Snapshot best;
  double lr = cfg.lr;

  for (int e = 0; e < cfg.max_epochs; ++e) {
    const TrainStats ts = trainer.train_epoch(train, e, lr);
    const EvalResult v = trainer.evaluate(monitor_set);
    if (!std::isfinite(v.loss)) throw NumericError("non-finite validation loss at epoch " + std::to_string(e + 1));

    EpochMetrics m;
    m.epoch = e + 1;
    m.train_loss = ts.loss;
    m.train_lc = ts.lc;
    m.train_lp = ts.lp;
    m.alpha = ts.alpha;
    m.refine_active = ts.refine_active;
    m.val_loss = v.loss;
    m.metric = v.metric;
    m.lr = lr;
    if (cfg.track_train_metric) m.train_metric = trainer.evaluate(train).metric;

    es = early_stop_update(es, trainer.monitored(v), cfg.early_stop_patience, trainer.monitor_mode());
    if (es.improved) {
      best = trainer.snapshot();
      result.best_epoch = m.epoch;
      result.best_monitored = es.best;
    }
    if (cfg.schedule == LrSchedule::reduce_on_plateau) lr = reduce_on_plateau_step(plateau, v.loss, popts);

    m.stopped_early = cfg.early_stopping && es.stopped;
    result.log.push_back(m);
    if (on_epoch) on_epoch(m);
    if (m.stopped_early) {
      result.stopped_early = true;
      break;
    }
  }
  result.final_state = trainer.snapshot();
  result.best_state = best;
  if (result.stopped_early) trainer.restore(best);
  return result;
}

}  // namespace mmfuse
