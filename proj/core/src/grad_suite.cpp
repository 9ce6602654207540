#include "mmfuse/grad_suite.hpp"

#include "mmfuse/emotion.hpp"
#include "mmfuse/gesture.hpp"
#include "mmfuse/losses.hpp"
#include "mmfuse/memory.hpp"

#include <random>

namespace mmfuse {

namespace {

constexpr int kT = 5;
constexpr std::uint64_t kSeed = 20240321;

Mat random_mat(Eigen::Index r, Eigen::Index c, nn::Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

RowVec random_row(Eigen::Index c, nn::Rng& rng) { return random_mat(1, c, rng).row(0); }

// Last step padded.
Mask tiny_mask() {
  Mask m = full_mask(kT);
  m.back() = 0;
  return m;
}

// Projects a block output onto a fixed random direction.
ad::Var probe_loss(ad::Tape& tape, ad::Var x, const Mat& weights) { return ad::sum(ad::mul(x, tape.constant(weights))); }

gesture::CmtfConfig tiny_cmtf() {
  gesture::CmtfConfig c;
  c.d_rgb = 6;
  c.d_pose = 5;
  c.d_hidden = 4;
  c.n_heads = 2;
  c.n_classes = 3;
  return c;
}

emotion::EmotionConfig tiny_emotion() {
  emotion::EmotionConfig c;
  c.d_ctx = 6;
  c.d_face = 5;
  c.d_hidden = 4;
  c.encoder_depth = 2;
  c.n_heads = 2;
  c.ffn_multiplier = 2;
  c.dropout = 0.5;
  return c;
}

GradCheckReport check_cmtf(const GradCheckOptions& opts) {
  nn::Rng rng(kSeed);
  const auto cfg = tiny_cmtf();
  gesture::CrossModalTokenFusion block(cfg, rng);
  const Mat rgb = random_mat(kT, cfg.d_rgb, rng), pose = random_mat(kT, cfg.d_pose, rng);
  const Mat w = random_mat(kT, cfg.d_hidden, rng);
  const Mask mask = tiny_mask();
  ParamList params;
  block.collect(params);
  return grad_check(
      [&](ad::Tape& t) {
        auto out = block.forward(t, t.constant(rgb), t.constant(pose), mask);
        return probe_loss(t, out.fused, w);
      },
      params, opts);
}

GradCheckReport check_late_fusion(const GradCheckOptions& opts) {
  nn::Rng rng(kSeed + 1);
  const auto cfg = tiny_cmtf();
  gesture::ModalityClassifier pose_head("pose_head", cfg.d_hidden, cfg.n_classes, rng);
  gesture::ModalityClassifier rgb_head("rgb_head", cfg.d_hidden, cfg.n_classes, rng);
  gesture::FusionWeights fw;
  fw.set_theta(0.3, -0.2);
  const Mat f_pose = random_mat(2, cfg.d_hidden, rng), f_rgb = random_mat(2, cfg.d_hidden, rng);
  const std::vector<int> labels{0, 2};
  ParamList params;
  pose_head.collect(params);
  rgb_head.collect(params);
  fw.collect(params);
  return grad_check(
      [&](ad::Tape& t) {
        auto yp = pose_head.forward(t, t.constant(f_pose));
        auto yr = rgb_head.forward(t, t.constant(f_rgb));
        return cross_entropy(gesture::weighted_late_fusion(t, yp, yr, fw), labels);
      },
      params, opts);
}

GradCheckReport check_refine(const GradCheckOptions& opts) {
  nn::Rng rng(kSeed + 2);
  const int d = 4;
  RefinementBlock block(d, 2, rng);
  // Open the zero-initialised residual branch so q/k/v gradients are non-trivial.
  block.attn.out_proj.weight.value = random_mat(d, d, rng, 0.5);
  Parameter feature("feature", random_mat(2, d, rng));
  std::vector<RowVec> retrieved{random_row(d, rng), random_row(d, rng), random_row(d, rng)};
  PrototypeSet protos;
  for (int c = 0; c < 3; ++c) protos.vectors[c] = random_row(d, rng).normalized();
  const std::vector<int> labels{0, 1};
  const Mat w = random_mat(1, d, rng);
  ParamList params;
  block.collect(params);
  params.push_back(&feature);
  return grad_check(
      [&](ad::Tape& t) {
        ad::Var f = t.param(feature);
        std::vector<ad::Var> refined{block.forward(t, ad::slice_rows(f, 0, 1), retrieved),
                                     block.forward(t, ad::slice_rows(f, 1, 1), retrieved)};
        ad::Var lp = refinement_loss(t, refined, labels, protos, 0.2);
        return ad::add(lp, probe_loss(t, refined[0], w));
      },
      params, opts);
}

GradCheckReport check_alpha_gate(const GradCheckOptions& opts) {
  nn::Rng rng(kSeed + 3);
  const int d = 4;
  emotion::AlphaGate gate("gate", d, rng);
  const Mat a = random_mat(kT, d, rng), b = random_mat(kT, d, rng), w = random_mat(kT, d, rng);
  ParamList params;
  gate.collect(params);
  return grad_check([&](ad::Tape& t) { return probe_loss(t, gate.forward(t, t.constant(a), t.constant(b)), w); },
                    params, opts);
}

GradCheckReport check_interfusion(const GradCheckOptions& opts) {
  nn::Rng rng(kSeed + 4);
  const int d = 4;
  emotion::InterFusion complement("if_complement", d, emotion::GateMode::complement, false, rng);
  emotion::InterFusion shared("if_shared", d, emotion::GateMode::shared, true, rng);
  Parameter ctx("ctx", random_mat(kT, d, rng)), face("face", random_mat(kT, d, rng));
  const Mat w1 = random_mat(kT, d, rng), w2 = random_mat(kT, d, rng);
  const Mask mask = tiny_mask();
  ParamList params;
  complement.collect(params);
  shared.collect(params);
  params.push_back(&ctx);
  params.push_back(&face);
  return grad_check(
      [&](ad::Tape& t) {
        emotion::StreamState s{t.param(ctx), t.param(face), mask};
        s = shared.forward(t, complement.forward(t, s));
        return ad::add(probe_loss(t, s.ctx, w1), probe_loss(t, s.face, w2));
      },
      params, opts);
}

GradCheckReport check_encoder(const GradCheckOptions& opts) {
  nn::Rng rng(kSeed + 5);
  const int d = 4;
  emotion::StreamEncoder enc("encoder", d, 2, 2, 8, true, rng);
  Parameter x("input", random_mat(kT, d, rng));
  const Mat w = random_mat(kT, d, rng);
  const Mask mask = tiny_mask();
  ParamList params;
  enc.collect(params);
  params.push_back(&x);
  return grad_check([&](ad::Tape& t) { return probe_loss(t, enc.forward(t, t.param(x), mask), w); }, params, opts);
}

GradCheckReport check_focal(const GradCheckOptions& opts) {
  nn::Rng rng(kSeed + 6);
  Parameter logits("logits", random_mat(6, 1, rng, 2.0));
  const std::vector<int> targets{1, 0, 1, 1, 0, 0};
  const std::vector<double> weights{0.7, 1.3};
  return grad_check([&](ad::Tape& t) { return focal_loss(t.param(logits), targets, 0.5, weights); }, {&logits},
                    opts);
}

GradCheckReport check_ce32(const GradCheckOptions& opts) {
  nn::Rng rng(kSeed + 7);
  Parameter logits("logits", random_mat(3, kGestureClasses, rng));
  const std::vector<int> labels{0, 31, 17};
  std::vector<double> weights(kGestureClasses, 1.0);
  weights[31] = 0.5;
  return grad_check([&](ad::Tape& t) { return cross_entropy(t.param(logits), labels, weights); }, {&logits}, opts);
}

GradCheckReport check_full_gesture(const GradCheckOptions& opts) {
  const auto cfg = tiny_cmtf();
  gesture::GestureModel model(cfg, gesture::Variant::cmtf_memory, kSeed);
  nn::Rng rng(kSeed + 8);
  model.refinement->attn.out_proj.weight.value = random_mat(cfg.d_hidden, cfg.d_hidden, rng, 0.5);
  MemoryBank bank(cfg.n_classes, cfg.d_hidden);
  for (int c = 0; c < cfg.n_classes; ++c)
    for (int k = 0; k < 3; ++k) bank.maybe_insert(random_row(cfg.d_hidden, rng), c, c, 1.0);
  const PrototypeSet protos = bank.prototypes();
  const Mat rgb0 = random_mat(kT, cfg.d_rgb, rng), pose0 = random_mat(kT, cfg.d_pose, rng);
  const Mat rgb1 = random_mat(kT, cfg.d_rgb, rng), pose1 = random_mat(kT, cfg.d_pose, rng);
  const Mask m0 = tiny_mask(), m1 = full_mask(kT);
  const std::vector<int> labels{1, 2};
  return grad_check(
      [&](ad::Tape& t) {
        auto a = model.forward_sample(t, rgb0, pose0, m0, &bank, true);
        auto b = model.forward_sample(t, rgb1, pose1, m1, &bank, true);
        std::vector<ad::Var> fused{a.fused, b.fused}, refined{a.refined, b.refined};
        ad::Var lc = cross_entropy(ad::concat_rows(fused), labels);
        return ad::add(lc, refinement_loss(t, refined, labels, protos, 0.2));
      },
      model.parameters(), opts);
}

GradCheckReport check_full_emotion(const GradCheckOptions& opts) {
  const auto cfg = tiny_emotion();
  emotion::EmotionModel model(cfg, kSeed);
  nn::Rng rng(kSeed + 9);
  const Mat ctx0 = random_mat(kT, cfg.d_ctx, rng), face0 = random_mat(kT, cfg.d_face, rng);
  const Mat ctx1 = random_mat(kT, cfg.d_ctx, rng), face1 = random_mat(kT, cfg.d_face, rng);
  const Mask m0 = tiny_mask(), m1 = full_mask(kT);
  const std::vector<int> targets{1, 0};
  return grad_check(
      [&](ad::Tape& t) {
        // Same dropout masks on every evaluation.
        nn::Rng drop(kSeed + 10);
        std::vector<ad::Var> z{model.forward_sample(t, ctx0, face0, m0, true, drop),
                               model.forward_sample(t, ctx1, face1, m1, true, drop)};
        return focal_loss(ad::concat_rows(z), targets, 0.5);
      },
      model.parameters(), opts);
}

}  // namespace

const std::vector<std::string>& grad_check_modules() {
  static const std::vector<std::string> names{"cmtf",  "late_fusion", "refine", "alpha_gate",   "interfusion",
                                              "encoder", "focal",      "ce32",   "full_gesture", "full_emotion"};
  return names;
}

GradCheckReport run_module_grad_check(const std::string& module, const GradCheckOptions& opts) {
  if (module == "cmtf") return check_cmtf(opts);
  if (module == "late_fusion") return check_late_fusion(opts);
  if (module == "refine") return check_refine(opts);
  if (module == "alpha_gate") return check_alpha_gate(opts);
  if (module == "interfusion") return check_interfusion(opts);
  if (module == "encoder") return check_encoder(opts);
  if (module == "focal") return check_focal(opts);
  if (module == "ce32") return check_ce32(opts);
  if (module == "full_gesture") return check_full_gesture(opts);
  if (module == "full_emotion") return check_full_emotion(opts);
  throw ConfigError("unknown grad-check module '" + module + "'");
}

}  // namespace mmfuse
