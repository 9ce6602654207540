#pragma once

// Dual-stream emotion classifier: contextual and facial embedding streams,
// each projected and encoded separately, exchanged twice through gated
// InterFusion blocks, mask-pooled, concatenated and scored by a single logit.

#include "mmfuse/dataset.hpp"
#include "mmfuse/layers.hpp"

#include <string_view>

namespace mmfuse::emotion {

// complement: ctx' = ctx + g*face, face' = face + (1-g)*ctx.
// shared:     ctx' = ctx + g*face, face' = face + g*ctx.
enum class GateMode { complement, shared };

struct EmotionConfig {
  int d_ctx = 768;
  int d_face = 512;
  int d_hidden = 512;
  int encoder_depth = 8;
  int n_heads = 4;
  double dropout = 0.5;
  int ffn_multiplier = 4;
  GateMode gate_mode = GateMode::complement;
  // Adds an extra skip around each InterFusion block: x'' = x + fused(x).
  bool outer_residual = false;

  void validate() const;
  // {stage-1 depth, stage-2 depth}.
  std::pair<int, int> stage_depths() const;
};

std::string_view to_string(GateMode m);
GateMode gate_mode_from_string(std::string_view s);

struct StreamState {
  ad::Var ctx;
  ad::Var face;
  Mask mask;
};

class StreamProjection {
 public:
  StreamProjection() = default;
  StreamProjection(const EmotionConfig& cfg, nn::Rng& rng);

  StreamState forward(ad::Tape& tape, ad::Var x_ctx, ad::Var x_face, const Mask& mask, bool training, nn::Rng& rng);
  void collect(ParamList& out);

  nn::Linear ctx;
  nn::Linear face;
  double dropout = 0.5;
};

class StreamEncoder {
 public:
  StreamEncoder() = default;
  StreamEncoder(const std::string& name, int dim, int depth, int n_heads, int ffn_hidden, bool positional, nn::Rng& rng);

  ad::Var forward(ad::Tape& tape, ad::Var x, const Mask& mask);
  void collect(ParamList& out);
  int depth() const { return static_cast<int>(layers.size()); }

  std::vector<nn::EncoderLayer> layers;
  bool positional = true;
};

// g = sigmoid([a; b] W + bias), one affine map shared by both directions.
class AlphaGate {
 public:
  AlphaGate() = default;
  AlphaGate(const std::string& name, int dim, nn::Rng& rng);

  ad::Var forward(ad::Tape& tape, ad::Var a, ad::Var b);
  void collect(ParamList& out) { proj.collect(out); }

  nn::Linear proj;
};

class InterFusion {
 public:
  InterFusion() = default;
  InterFusion(const std::string& name, int dim, GateMode mode, bool outer_residual, nn::Rng& rng);

  StreamState forward(ad::Tape& tape, const StreamState& state);
  // Gate activations for the given state (for inspection/tests).
  ad::Var gate_values(ad::Tape& tape, const StreamState& state) { return gate.forward(tape, state.ctx, state.face); }
  void collect(ParamList& out) { gate.collect(out); }

  AlphaGate gate;
  GateMode mode = GateMode::complement;
  bool outer_residual = false;
};

ad::Var masked_mean_pool(ad::Var x, const Mask& mask);
// Batch form: B matrices of T x d -> B x d.
Mat masked_mean_pool(const std::vector<Mat>& x, const std::vector<Mask>& mask);

class EmotionModel {
 public:
  EmotionModel(const EmotionConfig& cfg, std::uint64_t seed);
  EmotionModel(const EmotionModel&) = delete;
  EmotionModel& operator=(const EmotionModel&) = delete;

  // One sample: returns a 1x1 logit; P(win) = sigmoid(logit).
  ad::Var forward_sample(ad::Tape& tape, const Mat& ctx, const Mat& face, const Mask& mask, bool training,
                         nn::Rng& rng);
  // Inference over a batch (eval mode): B x 1 logits.
  Mat forward(const PaddedBatch& batch);

  ParamList parameters();
  const EmotionConfig& config() const { return cfg_; }

  StreamProjection projection;
  StreamEncoder ctx_encoder;
  StreamEncoder face_encoder;
  InterFusion fusion1;
  StreamEncoder ctx_refine;
  StreamEncoder face_refine;
  InterFusion fusion2;
  nn::Linear head;

 private:
  EmotionConfig cfg_;
};

}  // namespace mmfuse::emotion
