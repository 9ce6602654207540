#pragma once

// Micro-gesture classifier: cross-modal token fusion over RGB and pose
// token streams, masked temporal pooling, per-modality heads and a learned
// convex late fusion of their logits.

#include "mmfuse/dataset.hpp"
#include "mmfuse/layers.hpp"

#include <memory>
#include <optional>
#include <string_view>
#include <utility>

namespace mmfuse {

class MemoryBank;
class RefinementBlock;

namespace gesture {

struct CmtfConfig {
  int d_rgb = 768;
  int d_pose = 256;
  int d_hidden = 512;
  int n_heads = 8;
  int n_classes = kGestureClasses;
  // When false, refined features only feed the refinement loss and the
  // heads classify the unrefined pooled feature.
  bool classify_refined = true;

  void validate() const;
};

// Which parts of the classifier are active. late_fusion skips the token
// fusion block and pools each projected stream separately.
enum class Variant { late_fusion, cmtf, cmtf_memory };

std::string_view to_string(Variant v);
Variant variant_from_string(std::string_view s);

struct FusedTokens {
  std::vector<Mat> tokens;  // B x (T x d_hidden)
  std::vector<Mask> mask;
};

// Tape-level outputs of the fusion block for one sample.
struct FusionOutput {
  ad::Var fused;          // T x d_hidden, invalid rows zero
  ad::Var rgb_attended;   // RGB queries over pose keys/values (no residual)
  ad::Var pose_attended;  // pose queries over RGB keys/values (no residual)
};

class CrossModalTokenFusion {
 public:
  CrossModalTokenFusion() = default;
  CrossModalTokenFusion(const CmtfConfig& cfg, nn::Rng& rng);

  // rgb: T x d_rgb, pose: T x d_pose sharing one mask.
  FusionOutput forward(ad::Tape& tape, ad::Var rgb, ad::Var pose, const Mask& mask);
  void collect(ParamList& out);

  nn::Linear rgb_proj;
  nn::Linear pose_proj;
  nn::MultiHeadAttention rgb_to_pose;
  nn::MultiHeadAttention pose_to_rgb;
  nn::Linear merge;
};

// Batch-level wrapper; inference only.
FusedTokens cross_modal_token_fusion(CrossModalTokenFusion& block, const std::vector<Mat>& rgb,
                                     const std::vector<Mat>& pose, const std::vector<Mask>& mask);

// Masked mean over valid time steps (B x d_hidden).
Mat temporal_pool(const FusedTokens& fused);
ad::Var temporal_pool(ad::Var tokens, const Mask& mask);

class ModalityClassifier {
 public:
  ModalityClassifier() = default;
  ModalityClassifier(const std::string& name, int d_hidden, int n_classes, nn::Rng& rng);

  ad::Var forward(ad::Tape& tape, ad::Var features) { return head.forward(tape, features); }
  Mat classify(const Mat& features);
  void collect(ParamList& out) { head.collect(out); }

  nn::Linear head;
};

// (w_pose, w_rgb) = softmax(theta); theta starts at (ln 0.6, ln 0.4).
class FusionWeights {
 public:
  FusionWeights();

  std::pair<double, double> weights() const;
  void set_theta(double pose, double rgb);
  void collect(ParamList& out) { out.push_back(&theta); }

  Parameter theta;  // 1 x 2, [pose, rgb]
};

Mat weighted_late_fusion(const Mat& y_pose, const Mat& y_rgb, const FusionWeights& weights);
ad::Var weighted_late_fusion(ad::Tape& tape, ad::Var y_pose, ad::Var y_rgb, FusionWeights& weights);

struct GestureLogits {
  Mat y_pose;  // B x C
  Mat y_rgb;
  Mat fused;
};

struct GestureOutput {
  GestureLogits logits;
  Mat features;          // pooled features before refinement, B x d_hidden
  Mat refined_features;  // equals features when no refinement happened
};

// Per-sample tape outputs used by the trainer.
struct SampleForward {
  ad::Var y_pose;
  ad::Var y_rgb;
  ad::Var fused;
  ad::Var pooled;
  ad::Var refined;
  int retrieval_class = -1;  // class used for memory retrieval, -1 if none
};

class GestureModel {
 public:
  GestureModel(const CmtfConfig& cfg, Variant variant, std::uint64_t seed);
  GestureModel(const GestureModel&) = delete;
  GestureModel& operator=(const GestureModel&) = delete;
  ~GestureModel();

  // memory == nullptr or refine == false disables refinement for this pass.
  SampleForward forward_sample(ad::Tape& tape, const Mat& rgb, const Mat& pose, const Mask& mask,
                               const MemoryBank* memory, bool refine);

  // Inference over a batch; batch must hold rgb and pose streams.
  GestureOutput forward(const PaddedBatch& batch, const MemoryBank* memory = nullptr, bool refine = false);

  ParamList parameters();
  const CmtfConfig& config() const { return cfg_; }
  Variant variant() const { return variant_; }

  CrossModalTokenFusion cmtf;  // unused by late_fusion except for projections
  ModalityClassifier pose_head;
  ModalityClassifier rgb_head;
  FusionWeights fusion_weights;
  std::unique_ptr<RefinementBlock> refinement;  // cmtf_memory only

 private:
  CmtfConfig cfg_;
  Variant variant_;
};

}  // namespace gesture
}  // namespace mmfuse
