#include "mmfuse/emotion.hpp"

namespace mmfuse::emotion {

void EmotionConfig::validate() const {
  if (d_ctx < 1 || d_face < 1 || d_hidden < 1 || n_heads < 1) throw ConfigError("emotion dimensions must be >= 1");
  if (d_hidden % n_heads != 0) throw ConfigError("d_hidden must be divisible by n_heads");
  if (encoder_depth < 0) throw ConfigError("encoder_depth must be >= 0");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must be in [0, 1)");
  if (ffn_multiplier < 1) throw ConfigError("ffn_multiplier must be >= 1");
}

std::pair<int, int> EmotionConfig::stage_depths() const {
  if (encoder_depth >= 2) return {encoder_depth - 1, 1};
  return {encoder_depth, 0};
}

std::string_view to_string(GateMode m) { return m == GateMode::complement ? "complement" : "shared"; }

GateMode gate_mode_from_string(std::string_view s) {
  if (s == "complement") return GateMode::complement;
  if (s == "shared") return GateMode::shared;
  throw ConfigError("unknown gate mode '" + std::string(s) + "'");
}

StreamProjection::StreamProjection(const EmotionConfig& cfg, nn::Rng& rng)
    : ctx("emotion.proj_ctx", cfg.d_ctx, cfg.d_hidden, rng),
      face("emotion.proj_face", cfg.d_face, cfg.d_hidden, rng),
      dropout(cfg.dropout) {}

StreamState StreamProjection::forward(ad::Tape& tape, ad::Var x_ctx, ad::Var x_face, const Mask& mask, bool training,
                                      nn::Rng& rng) {
  if (x_ctx.cols() != ctx.in_features() || x_face.cols() != face.in_features())
    throw ShapeError("project_streams: expected ctx/face dims " + std::to_string(ctx.in_features()) + "/" +
                     std::to_string(face.in_features()) + ", got " + std::to_string(x_ctx.cols()) + "/" +
                     std::to_string(x_face.cols()));
  if (x_ctx.rows() != x_face.rows()) throw ShapeError("project_streams: ctx and face are not temporally aligned");
  if (static_cast<Eigen::Index>(mask.size()) != x_ctx.rows()) throw ShapeError("project_streams: mask length");
  StreamState s;
  s.mask = mask;
  s.ctx = ad::mask_rows(nn::dropout(tape, ctx.forward(tape, ad::mask_rows(x_ctx, mask)), dropout, training, rng), mask);
  s.face = ad::mask_rows(nn::dropout(tape, face.forward(tape, ad::mask_rows(x_face, mask)), dropout, training, rng), mask);
  return s;
}

void StreamProjection::collect(ParamList& out) {
  ctx.collect(out);
  face.collect(out);
}

StreamEncoder::StreamEncoder(const std::string& name, int dim, int depth, int n_heads, int ffn_hidden, bool pos,
                             nn::Rng& rng)
    : positional(pos) {
  layers.reserve(static_cast<std::size_t>(depth));
  for (int l = 0; l < depth; ++l)
    layers.emplace_back(name + ".layer" + std::to_string(l), dim, n_heads, ffn_hidden, rng);
}

ad::Var StreamEncoder::forward(ad::Tape& tape, ad::Var x, const Mask& mask) {
  if (count_valid(mask) == 0) throw ShapeError("encode_stream: all-masked item");
  if (positional) x = ad::mask_rows(ad::add(x, tape.constant(nn::sinusoidal_positions(x.rows(), x.cols()))), mask);
  for (auto& layer : layers) x = layer.forward(tape, x, mask);
  return x;
}

void StreamEncoder::collect(ParamList& out) {
  for (auto& l : layers) l.collect(out);
}

AlphaGate::AlphaGate(const std::string& name, int dim, nn::Rng& rng) : proj(name, 2 * dim, dim, rng) {}

ad::Var AlphaGate::forward(ad::Tape& tape, ad::Var a, ad::Var b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("alpha_gate: stream shapes differ");
  std::vector<ad::Var> parts = {a, b};
  return ad::sigmoid(proj.forward(tape, ad::concat_cols(parts)));
}

InterFusion::InterFusion(const std::string& name, int dim, GateMode m, bool outer, nn::Rng& rng)
    : gate(name + ".gate", dim, rng), mode(m), outer_residual(outer) {}

StreamState InterFusion::forward(ad::Tape& tape, const StreamState& state) {
  ad::Var g = gate.forward(tape, state.ctx, state.face);
  ad::Var g_face = mode == GateMode::complement ? ad::add_scalar(ad::scale(g, -1.0), 1.0) : g;
  StreamState out;
  out.mask = state.mask;
  out.ctx = ad::add(state.ctx, ad::mul(g, state.face));
  out.face = ad::add(state.face, ad::mul(g_face, state.ctx));
  if (outer_residual) {
    out.ctx = ad::add(state.ctx, out.ctx);
    out.face = ad::add(state.face, out.face);
  }
  out.ctx = ad::mask_rows(out.ctx, state.mask);
  out.face = ad::mask_rows(out.face, state.mask);
  return out;
}

ad::Var masked_mean_pool(ad::Var x, const Mask& mask) { return ad::masked_mean_rows(x, mask); }

Mat masked_mean_pool(const std::vector<Mat>& x, const std::vector<Mask>& mask) {
  if (x.empty() || x.size() != mask.size()) throw ShapeError("masked_mean_pool: batch/mask size mismatch");
  Mat out(static_cast<Eigen::Index>(x.size()), x.front().cols());
  for (std::size_t b = 0; b < x.size(); ++b) {
    ad::Tape tape(false);
    out.row(static_cast<Eigen::Index>(b)) = masked_mean_pool(tape.constant(x[b]), mask[b]).value().row(0);
  }
  return out;
}

EmotionModel::EmotionModel(const EmotionConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg.validate();
  nn::Rng rng(seed);
  const auto [d1, d2] = cfg.stage_depths();
  const int ffn = cfg.d_hidden * cfg.ffn_multiplier;
  projection = StreamProjection(cfg, rng);
  ctx_encoder = StreamEncoder("emotion.enc_ctx", cfg.d_hidden, d1, cfg.n_heads, ffn, true, rng);
  face_encoder = StreamEncoder("emotion.enc_face", cfg.d_hidden, d1, cfg.n_heads, ffn, true, rng);
  fusion1 = InterFusion("emotion.fusion1", cfg.d_hidden, cfg.gate_mode, cfg.outer_residual, rng);
  ctx_refine = StreamEncoder("emotion.enc2_ctx", cfg.d_hidden, d2, cfg.n_heads, ffn, false, rng);
  face_refine = StreamEncoder("emotion.enc2_face", cfg.d_hidden, d2, cfg.n_heads, ffn, false, rng);
  fusion2 = InterFusion("emotion.fusion2", cfg.d_hidden, cfg.gate_mode, cfg.outer_residual, rng);
  head = nn::Linear("emotion.head", 2 * cfg.d_hidden, 1, rng);
}

ad::Var EmotionModel::forward_sample(ad::Tape& tape, const Mat& ctx, const Mat& face, const Mask& mask, bool training,
                                     nn::Rng& rng) {
  StreamState s = projection.forward(tape, tape.constant(ctx), tape.constant(face), mask, training, rng);
  s.ctx = ctx_encoder.forward(tape, s.ctx, mask);
  s.face = face_encoder.forward(tape, s.face, mask);
  s = fusion1.forward(tape, s);
  s.ctx = ctx_refine.forward(tape, s.ctx, mask);
  s.face = face_refine.forward(tape, s.face, mask);
  s = fusion2.forward(tape, s);
  std::vector<ad::Var> pooled = {masked_mean_pool(s.ctx, mask), masked_mean_pool(s.face, mask)};
  return head.forward(tape, ad::concat_cols(pooled));
}

Mat EmotionModel::forward(const PaddedBatch& batch) {
  const auto& ctx = batch.stream(Modality::ctx);
  const auto& face = batch.stream(Modality::face);
  Mat out(static_cast<Eigen::Index>(batch.size()), 1);
  nn::Rng unused(0);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    ad::Tape tape(false);
    out(static_cast<Eigen::Index>(b), 0) = forward_sample(tape, ctx[b], face[b], batch.mask[b], false, unused).scalar();
  }
  return out;
}

ParamList EmotionModel::parameters() {
  ParamList out;
  projection.collect(out);
  ctx_encoder.collect(out);
  face_encoder.collect(out);
  fusion1.collect(out);
  ctx_refine.collect(out);
  face_refine.collect(out);
  fusion2.collect(out);
  head.collect(out);
  return out;
}

}  // namespace mmfuse::emotion
