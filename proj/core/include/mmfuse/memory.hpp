#pragma once

// Memory-powered refinement: a per-class bank of confident, unit-normalised
// feature snapshots, cosine top-k retrieval, attention-based refinement of
// the query feature, the prototype refinement loss and its warm-up schedule.

#include "mmfuse/layers.hpp"

#include <map>
#include <span>
#include <vector>

namespace mmfuse {

struct MemoryConfig {
  int capacity = 50;
  int top_k = 5;
  double momentum = 0.9;
  double confidence_threshold = 0.7;

  void validate() const;
};

// Parametric prototypes: unit-normalised mean of each non-empty class bank.
struct PrototypeSet {
  std::map<int, RowVec> vectors;

  bool has(int cls) const { return vectors.count(cls) != 0; }
  bool empty() const { return vectors.empty(); }
};

class MemoryBank {
 public:
  enum class InsertResult { rejected, appended, updated };

  MemoryBank(int n_classes, int dim, MemoryConfig cfg = {});

  // Stores the feature iff predicted == true_class and confidence >= tau.
  // A full class bank momentum-updates its most similar slot instead:
  //   slot <- normalize(mu * slot + (1 - mu) * normalize(feature)).
  InsertResult maybe_insert(const RowVec& feature, int predicted_class, int true_class, double confidence);

  // Slot indices of the k most cosine-similar entries, most similar first
  // (ties broken by lower index). Empty class -> empty result.
  std::vector<std::size_t> topk_indices(const RowVec& feature, int class_id, int k) const;
  std::vector<RowVec> retrieve_topk(const RowVec& feature, int class_id, int k) const;
  std::vector<RowVec> retrieve_topk(const RowVec& feature, int class_id) const {
    return retrieve_topk(feature, class_id, cfg_.top_k);
  }

  PrototypeSet prototypes() const;

  int n_classes() const { return static_cast<int>(slots_.size()); }
  int dim() const { return dim_; }
  std::size_t size(int cls) const { return slots_.at(checked(cls)).size(); }
  const std::vector<RowVec>& slots(int cls) const { return slots_.at(checked(cls)); }
  // Total accepted insertions (appends + updates) for the class.
  long long cursor(int cls) const { return cursors_.at(checked(cls)); }
  const MemoryConfig& config() const { return cfg_; }

  // Replaces a class bank wholesale (checkpoint restore). Vectors are
  // re-normalised; more than `capacity` entries is an error.
  void restore(int cls, std::vector<RowVec> slots, long long cursor);

 private:
  std::size_t checked(int cls) const;

  MemoryConfig cfg_;
  int dim_;
  std::vector<std::vector<RowVec>> slots_;
  std::vector<long long> cursors_;
};

// One multi-head attention layer with a residual connection, applied to the
// sequence [feature, retrieved...] and read out at the feature position.
class RefinementBlock {
 public:
  RefinementBlock(int d_hidden, int n_heads, nn::Rng& rng);

  // feature is 1 x d_hidden; retrieved vectors enter as constants. No
  // retrieved vectors -> the feature is returned unchanged.
  ad::Var forward(ad::Tape& tape, ad::Var feature, const std::vector<RowVec>& retrieved);
  RowVec refine(const RowVec& feature, const std::vector<RowVec>& retrieved);
  void collect(ParamList& out) { attn.collect(out); }

  nn::MultiHeadAttention attn;
};

// mean over samples whose label has a prototype of
//   (1 - cos(f, mu_y)) + max(0, margin + max_{c != y} cos(f, mu_c) - cos(f, mu_y))
// (the hinge term is dropped when no other prototype exists). 0 when no
// sample contributes.
double refinement_loss(const Mat& features, const std::vector<int>& labels, const PrototypeSet& prototypes,
                       double margin = 0.2);
ad::Var refinement_loss(ad::Tape& tape, std::span<const ad::Var> features, const std::vector<int>& labels,
                        const PrototypeSet& prototypes, double margin = 0.2);

struct AlphaSchedule {
  int warmup_epochs = 5;
  double alpha_before = 0.0;
  double alpha_after = 1.0;

  // epoch is zero-based.
  double alpha(int epoch) const { return epoch < warmup_epochs ? alpha_before : alpha_after; }
};

// L_c + alpha(epoch) * L_p. Returns L_c itself when alpha == 0.
double total_loss(double classification, double refinement, int epoch, const AlphaSchedule& schedule);

}  // namespace mmfuse
