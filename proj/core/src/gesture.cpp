#include "mmfuse/gesture.hpp"

#include "mmfuse/memory.hpp"

#include <cmath>

namespace mmfuse::gesture {

void CmtfConfig::validate() const {
  if (d_rgb < 1 || d_pose < 1 || d_hidden < 1 || n_heads < 1 || n_classes < 1)
    throw ConfigError("CMTF dimensions must all be >= 1");
  if (d_hidden % n_heads != 0) throw ConfigError("d_hidden must be divisible by n_heads");
}

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::late_fusion: return "late_fusion";
    case Variant::cmtf: return "cmtf";
    case Variant::cmtf_memory: return "cmtf_memory";
  }
  return "?";
}

Variant variant_from_string(std::string_view s) {
  if (s == "late_fusion") return Variant::late_fusion;
  if (s == "cmtf") return Variant::cmtf;
  if (s == "cmtf_memory") return Variant::cmtf_memory;
  throw ConfigError("unknown gesture variant '" + std::string(s) + "'");
}

CrossModalTokenFusion::CrossModalTokenFusion(const CmtfConfig& cfg, nn::Rng& rng)
    : rgb_proj("cmtf.rgb_proj", cfg.d_rgb, cfg.d_hidden, rng),
      pose_proj("cmtf.pose_proj", cfg.d_pose, cfg.d_hidden, rng),
      rgb_to_pose("cmtf.rgb_to_pose", cfg.d_hidden, cfg.n_heads, rng),
      pose_to_rgb("cmtf.pose_to_rgb", cfg.d_hidden, cfg.n_heads, rng),
      merge("cmtf.merge", 2 * cfg.d_hidden, cfg.d_hidden, rng) {}

FusionOutput CrossModalTokenFusion::forward(ad::Tape& tape, ad::Var rgb, ad::Var pose, const Mask& mask) {
  if (rgb.rows() != pose.rows())
    throw ShapeError("cross_modal_token_fusion: RGB has T=" + std::to_string(rgb.rows()) + " but pose has T=" +
                     std::to_string(pose.rows()));
  if (static_cast<Eigen::Index>(mask.size()) != rgb.rows()) throw ShapeError("cross_modal_token_fusion: mask length");
  if (count_valid(mask) == 0) throw ShapeError("cross_modal_token_fusion: no valid key positions");

  ad::Var r = ad::mask_rows(rgb_proj.forward(tape, ad::mask_rows(rgb, mask)), mask);
  ad::Var p = ad::mask_rows(pose_proj.forward(tape, ad::mask_rows(pose, mask)), mask);

  FusionOutput out;
  out.rgb_attended = rgb_to_pose.forward(tape, r, p, mask);
  out.pose_attended = pose_to_rgb.forward(tape, p, r, mask);
  std::vector<ad::Var> streams = {ad::add(r, out.rgb_attended), ad::add(p, out.pose_attended)};
  out.fused = ad::mask_rows(merge.forward(tape, ad::concat_cols(streams)), mask);
  return out;
}

void CrossModalTokenFusion::collect(ParamList& out) {
  rgb_proj.collect(out);
  pose_proj.collect(out);
  rgb_to_pose.collect(out);
  pose_to_rgb.collect(out);
  merge.collect(out);
}

FusedTokens cross_modal_token_fusion(CrossModalTokenFusion& block, const std::vector<Mat>& rgb,
                                     const std::vector<Mat>& pose, const std::vector<Mask>& mask) {
  if (rgb.size() != pose.size() || rgb.size() != mask.size())
    throw ShapeError("cross_modal_token_fusion: batch sizes differ");
  FusedTokens out;
  for (std::size_t b = 0; b < rgb.size(); ++b) {
    ad::Tape tape(false);
    auto f = block.forward(tape, tape.constant(rgb[b]), tape.constant(pose[b]), mask[b]);
    out.tokens.push_back(f.fused.value());
    out.mask.push_back(mask[b]);
  }
  return out;
}

Mat temporal_pool(const FusedTokens& fused) {
  if (fused.tokens.empty()) throw ShapeError("temporal_pool: empty batch");
  Mat out(static_cast<Eigen::Index>(fused.tokens.size()), fused.tokens.front().cols());
  for (std::size_t b = 0; b < fused.tokens.size(); ++b) {
    ad::Tape tape(false);
    out.row(static_cast<Eigen::Index>(b)) =
        temporal_pool(tape.constant(fused.tokens[b]), fused.mask[b]).value().row(0);
  }
  return out;
}

ad::Var temporal_pool(ad::Var tokens, const Mask& mask) { return ad::masked_mean_rows(tokens, mask); }

ModalityClassifier::ModalityClassifier(const std::string& name, int d_hidden, int n_classes, nn::Rng& rng)
    : head(name, d_hidden, n_classes, rng) {}

Mat ModalityClassifier::classify(const Mat& features) {
  ad::Tape tape(false);
  return forward(tape, tape.constant(features)).value();
}

FusionWeights::FusionWeights() : theta("fusion.theta", Mat(1, 2), false) {
  set_theta(std::log(0.6), std::log(0.4));
}

void FusionWeights::set_theta(double pose, double rgb) {
  theta.value(0, 0) = pose;
  theta.value(0, 1) = rgb;
}

std::pair<double, double> FusionWeights::weights() const {
  const double a = theta.value(0, 0), b = theta.value(0, 1);
  const double m = std::max(a, b);
  const double ea = std::exp(a - m), eb = std::exp(b - m);
  return {ea / (ea + eb), eb / (ea + eb)};
}

Mat weighted_late_fusion(const Mat& y_pose, const Mat& y_rgb, const FusionWeights& weights) {
  if (y_pose.rows() != y_rgb.rows() || y_pose.cols() != y_rgb.cols())
    throw ShapeError("weighted_late_fusion: logit shapes differ");
  auto [wp, wr] = weights.weights();
  return wp * y_pose + wr * y_rgb;
}

ad::Var weighted_late_fusion(ad::Tape& tape, ad::Var y_pose, ad::Var y_rgb, FusionWeights& weights) {
  if (y_pose.rows() != y_rgb.rows() || y_pose.cols() != y_rgb.cols())
    throw ShapeError("weighted_late_fusion: logit shapes differ");
  ad::Var w = ad::softmax_rows(tape.param(weights.theta));
  return ad::add(ad::scale_by(y_pose, ad::element(w, 0, 0)), ad::scale_by(y_rgb, ad::element(w, 0, 1)));
}

GestureModel::GestureModel(const CmtfConfig& cfg, Variant variant, std::uint64_t seed)
    : cfg_(cfg), variant_(variant) {
  cfg.validate();
  nn::Rng rng(seed);
  cmtf = CrossModalTokenFusion(cfg, rng);
  pose_head = ModalityClassifier("head.pose", cfg.d_hidden, cfg.n_classes, rng);
  rgb_head = ModalityClassifier("head.rgb", cfg.d_hidden, cfg.n_classes, rng);
  if (variant == Variant::cmtf_memory) refinement = std::make_unique<RefinementBlock>(cfg.d_hidden, cfg.n_heads, rng);
}

GestureModel::~GestureModel() = default;

namespace {

int argmax_row(const Mat& m) {
  Eigen::Index idx = 0;
  m.row(0).maxCoeff(&idx);
  return static_cast<int>(idx);
}

}  // namespace

SampleForward GestureModel::forward_sample(ad::Tape& tape, const Mat& rgb, const Mat& pose, const Mask& mask,
                                           const MemoryBank* memory, bool refine) {
  if (rgb.cols() != cfg_.d_rgb || pose.cols() != cfg_.d_pose)
    throw ShapeError("gesture_forward: expected rgb/pose dims " + std::to_string(cfg_.d_rgb) + "/" +
                     std::to_string(cfg_.d_pose) + ", got " + std::to_string(rgb.cols()) + "/" +
                     std::to_string(pose.cols()));
  SampleForward out;
  ad::Var x_rgb = tape.constant(rgb);
  ad::Var x_pose = tape.constant(pose);

  if (variant_ == Variant::late_fusion) {
    if (count_valid(mask) == 0) throw ShapeError("gesture_forward: all-masked sample");
    ad::Var r = cmtf.rgb_proj.forward(tape, ad::mask_rows(x_rgb, mask));
    ad::Var p = cmtf.pose_proj.forward(tape, ad::mask_rows(x_pose, mask));
    ad::Var pooled_rgb = temporal_pool(r, mask);
    ad::Var pooled_pose = temporal_pool(p, mask);
    out.y_pose = pose_head.forward(tape, pooled_pose);
    out.y_rgb = rgb_head.forward(tape, pooled_rgb);
    out.fused = weighted_late_fusion(tape, out.y_pose, out.y_rgb, fusion_weights);
    out.pooled = ad::scale(ad::add(pooled_rgb, pooled_pose), 0.5);
    out.refined = out.pooled;
    return out;
  }

  FusionOutput fused = cmtf.forward(tape, x_rgb, x_pose, mask);
  out.pooled = temporal_pool(fused.fused, mask);
  out.refined = out.pooled;

  if (refine && memory != nullptr && refinement != nullptr) {
    // Retrieval is keyed by the class predicted from the unrefined feature.
    ad::Tape probe(false);
    ad::Var f = probe.constant(out.pooled.value());
    ad::Var yp = pose_head.forward(probe, f);
    ad::Var yr = rgb_head.forward(probe, f);
    const int predicted = argmax_row(weighted_late_fusion(probe, yp, yr, fusion_weights).value());
    out.retrieval_class = predicted;
    const RowVec query = out.pooled.value().row(0);
    auto retrieved = memory->retrieve_topk(query, predicted);
    out.refined = refinement->forward(tape, out.pooled, retrieved);
  }

  ad::Var head_input = cfg_.classify_refined ? out.refined : out.pooled;
  out.y_pose = pose_head.forward(tape, head_input);
  out.y_rgb = rgb_head.forward(tape, head_input);
  out.fused = weighted_late_fusion(tape, out.y_pose, out.y_rgb, fusion_weights);
  return out;
}

GestureOutput GestureModel::forward(const PaddedBatch& batch, const MemoryBank* memory, bool refine) {
  const auto& rgb = batch.stream(Modality::rgb);
  const auto& pose = batch.stream(Modality::pose);
  const auto B = static_cast<Eigen::Index>(batch.size());
  GestureOutput out;
  out.logits.y_pose.resize(B, cfg_.n_classes);
  out.logits.y_rgb.resize(B, cfg_.n_classes);
  out.logits.fused.resize(B, cfg_.n_classes);
  out.features.resize(B, cfg_.d_hidden);
  out.refined_features.resize(B, cfg_.d_hidden);
  for (Eigen::Index b = 0; b < B; ++b) {
    ad::Tape tape(false);
    const auto i = static_cast<std::size_t>(b);
    auto s = forward_sample(tape, rgb[i], pose[i], batch.mask[i], memory, refine);
    out.logits.y_pose.row(b) = s.y_pose.value().row(0);
    out.logits.y_rgb.row(b) = s.y_rgb.value().row(0);
    out.logits.fused.row(b) = s.fused.value().row(0);
    out.features.row(b) = s.pooled.value().row(0);
    out.refined_features.row(b) = s.refined.value().row(0);
  }
  return out;
}

ParamList GestureModel::parameters() {
  ParamList out;
  if (variant_ == Variant::late_fusion) {
    cmtf.rgb_proj.collect(out);
    cmtf.pose_proj.collect(out);
  } else {
    cmtf.collect(out);
  }
  pose_head.collect(out);
  rgb_head.collect(out);
  fusion_weights.collect(out);
  if (refinement) refinement->collect(out);
  return out;
}

}  // namespace mmfuse::gesture
