#include "mmfuse/memory.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mmfuse {

void MemoryConfig::validate() const {
  if (capacity < 1) throw ConfigError("memory capacity must be >= 1");
  if (top_k < 1) throw ConfigError("memory top_k must be >= 1");
  if (momentum < 0.0 || momentum > 1.0) throw ConfigError("memory momentum must be in [0, 1]");
  if (confidence_threshold < 0.0 || confidence_threshold > 1.0)
    throw ConfigError("memory confidence threshold must be in [0, 1]");
}

MemoryBank::MemoryBank(int n_classes, int dim, MemoryConfig cfg)
    : cfg_(cfg), dim_(dim), slots_(static_cast<std::size_t>(n_classes)), cursors_(static_cast<std::size_t>(n_classes), 0) {
  cfg_.validate();
  if (n_classes < 1 || dim < 1) throw ConfigError("memory bank needs n_classes >= 1 and dim >= 1");
}

std::size_t MemoryBank::checked(int cls) const {
  if (cls < 0 || cls >= n_classes())
    throw ConfigError("memory: class index " + std::to_string(cls) + " outside [0, " + std::to_string(n_classes()) + ")");
  return static_cast<std::size_t>(cls);
}

namespace {

RowVec normalized(const RowVec& v) {
  const double n = v.norm();
  if (!(n > 0.0) || !std::isfinite(n)) throw NumericError("memory: cannot normalise a zero or non-finite vector");
  return v / n;
}

}  // namespace

MemoryBank::InsertResult MemoryBank::maybe_insert(const RowVec& feature, int predicted_class, int true_class,
                                                  double confidence) {
  const std::size_t cls = checked(true_class);
  checked(predicted_class);
  if (feature.size() != dim_) throw ShapeError("memory: feature dimension mismatch");
  if (!feature.allFinite()) throw NumericError("memory: non-finite feature");
  if (predicted_class != true_class || confidence < cfg_.confidence_threshold) return InsertResult::rejected;

  const RowVec f = normalized(feature);
  auto& bank = slots_[cls];
  ++cursors_[cls];
  if (static_cast<int>(bank.size()) < cfg_.capacity) {
    bank.push_back(f);
    return InsertResult::appended;
  }
  std::size_t best = 0;
  double best_sim = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < bank.size(); ++i) {
    const double sim = bank[i].dot(f);
    if (sim > best_sim) {
      best_sim = sim;
      best = i;
    }
  }
  bank[best] = normalized(cfg_.momentum * bank[best] + (1.0 - cfg_.momentum) * f);
  return InsertResult::updated;
}

std::vector<std::size_t> MemoryBank::topk_indices(const RowVec& feature, int class_id, int k) const {
  const auto& bank = slots_.at(checked(class_id));
  if (feature.size() != dim_) throw ShapeError("memory: query dimension mismatch");
  if (!feature.allFinite()) throw NumericError("memory: non-finite query");
  if (bank.empty() || k <= 0) return {};
  const double qn = std::max(feature.norm(), 1e-12);
  std::vector<double> sims(bank.size());
  for (std::size_t i = 0; i < bank.size(); ++i) sims[i] = bank[i].dot(feature) / qn;
  std::vector<std::size_t> idx(bank.size());
  std::iota(idx.begin(), idx.end(), 0);
  const std::size_t take = std::min(bank.size(), static_cast<std::size_t>(k));
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(take), idx.end(),
                    [&](std::size_t a, std::size_t b) { return sims[a] > sims[b] || (sims[a] == sims[b] && a < b); });
  idx.resize(take);
  return idx;
}

std::vector<RowVec> MemoryBank::retrieve_topk(const RowVec& feature, int class_id, int k) const {
  std::vector<RowVec> out;
  const auto& bank = slots_.at(checked(class_id));
  for (auto i : topk_indices(feature, class_id, k)) out.push_back(bank[i]);
  return out;
}

PrototypeSet MemoryBank::prototypes() const {
  PrototypeSet p;
  for (std::size_t c = 0; c < slots_.size(); ++c) {
    if (slots_[c].empty()) continue;
    RowVec mean = RowVec::Zero(dim_);
    for (const auto& s : slots_[c]) mean += s;
    const double n = mean.norm();
    // Antipodal slots can cancel exactly; such a class gets no prototype.
    if (n > 1e-12) p.vectors.emplace(static_cast<int>(c), mean / n);
  }
  return p;
}

void MemoryBank::restore(int cls, std::vector<RowVec> slots, long long cursor) {
  const std::size_t c = checked(cls);
  if (static_cast<int>(slots.size()) > cfg_.capacity) throw ConfigError("memory restore: more slots than capacity");
  for (auto& s : slots) {
    if (s.size() != dim_) throw ShapeError("memory restore: slot dimension mismatch");
    s = normalized(s);
  }
  slots_[c] = std::move(slots);
  cursors_[c] = cursor;
}

RefinementBlock::RefinementBlock(int d_hidden, int n_heads, nn::Rng& rng)
    : attn("refine.attn", d_hidden, n_heads, rng) {
  // The residual branch starts closed so switching refinement on after
  // warm-up does not perturb features the heads were trained on.
  attn.out_proj.weight.value.setZero();
}

ad::Var RefinementBlock::forward(ad::Tape& tape, ad::Var feature, const std::vector<RowVec>& retrieved) {
  if (feature.rows() != 1 || feature.cols() != attn.model_dim())
    throw ShapeError("refine_features: feature must be 1 x " + std::to_string(attn.model_dim()));
  if (retrieved.empty()) return feature;
  Mat mem(static_cast<Eigen::Index>(retrieved.size()), feature.cols());
  for (std::size_t i = 0; i < retrieved.size(); ++i) {
    if (retrieved[i].size() != feature.cols()) throw ShapeError("refine_features: memory vector dimension mismatch");
    mem.row(static_cast<Eigen::Index>(i)) = retrieved[i];
  }
  std::vector<ad::Var> rows = {feature, tape.constant(std::move(mem))};
  ad::Var seq = ad::concat_rows(rows);
  // Only the feature position is read out, so it is the only query.
  ad::Var attended = attn.forward(tape, feature, seq, full_mask(static_cast<int>(seq.rows())));
  return ad::add(feature, attended);
}

RowVec RefinementBlock::refine(const RowVec& feature, const std::vector<RowVec>& retrieved) {
  ad::Tape tape(false);
  Mat f = feature;
  return forward(tape, tape.constant(std::move(f)), retrieved).value().row(0);
}

namespace {

struct PrototypeMatrix {
  Mat vectors;             // K x d
  std::vector<int> classes;
};

PrototypeMatrix stack(const PrototypeSet& p) {
  PrototypeMatrix m;
  if (p.empty()) return m;
  m.vectors.resize(static_cast<Eigen::Index>(p.vectors.size()), p.vectors.begin()->second.size());
  Eigen::Index r = 0;
  for (const auto& [c, v] : p.vectors) {
    m.vectors.row(r++) = v;
    m.classes.push_back(c);
  }
  return m;
}

}  // namespace

ad::Var refinement_loss(ad::Tape& tape, std::span<const ad::Var> features, const std::vector<int>& labels,
                        const PrototypeSet& prototypes, double margin) {
  if (features.size() != labels.size()) throw ShapeError("refinement_loss: features and labels differ in count");
  const PrototypeMatrix protos = stack(prototypes);
  std::vector<ad::Var> terms;
  ad::Var proto_var;
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (!prototypes.has(labels[i])) continue;
    if (features[i].rows() != 1 || features[i].cols() != protos.vectors.cols())
      throw ShapeError("refinement_loss: feature dimension mismatch");
    if (!proto_var.valid()) proto_var = tape.constant(protos.vectors);
    ad::Var cosines = ad::matmul_nt(ad::l2_normalize_rows(features[i]), proto_var);  // 1 x K
    Eigen::Index pos = 0, neg = -1;
    double neg_val = -std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < cosines.cols(); ++k) {
      if (protos.classes[static_cast<std::size_t>(k)] == labels[i]) {
        pos = k;
      } else if (cosines.value()(0, k) > neg_val) {
        neg_val = cosines.value()(0, k);
        neg = k;
      }
    }
    ad::Var pos_cos = ad::element(cosines, 0, pos);
    ad::Var term = ad::add_scalar(ad::scale(pos_cos, -1.0), 1.0);
    if (neg >= 0) {
      ad::Var gap = ad::add_scalar(ad::sub(ad::element(cosines, 0, neg), pos_cos), margin);
      term = ad::add(term, ad::relu(gap));
    }
    terms.push_back(term);
  }
  if (terms.empty()) return tape.constant(Mat::Zero(1, 1));
  ad::Var total = terms.size() == 1 ? terms.front() : ad::sum(ad::concat_cols(terms));
  return ad::scale(total, 1.0 / static_cast<double>(terms.size()));
}

double refinement_loss(const Mat& features, const std::vector<int>& labels, const PrototypeSet& prototypes,
                       double margin) {
  ad::Tape tape(false);
  std::vector<ad::Var> rows;
  for (Eigen::Index r = 0; r < features.rows(); ++r) rows.push_back(tape.constant(features.row(r)));
  return refinement_loss(tape, rows, labels, prototypes, margin).scalar();
}

double total_loss(double classification, double refinement, int epoch, const AlphaSchedule& schedule) {
  const double alpha = schedule.alpha(epoch);
  if (alpha == 0.0) return classification;
  return classification + alpha * refinement;
}

}  // namespace mmfuse
