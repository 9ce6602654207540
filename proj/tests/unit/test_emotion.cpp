#include "mmfuse/emotion.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

namespace mmfuse::emotion {
namespace {

using testing::make_sample;
using testing::random_mat;

EmotionConfig tiny(int depth = 2) {
  EmotionConfig c;
  c.d_ctx = 6;
  c.d_face = 5;
  c.d_hidden = 8;
  c.encoder_depth = depth;
  c.n_heads = 2;
  c.ffn_multiplier = 2;
  return c;
}

Mask prefix_mask(int T, int valid) {
  Mask m(static_cast<std::size_t>(T), 0);
  for (int t = 0; t < valid; ++t) m[static_cast<std::size_t>(t)] = 1;
  return m;
}

const std::map<Modality, int> kDims{{Modality::ctx, 6}, {Modality::face, 5}};

TEST(EmotionConfig, StageDepthsAndValidation) {
  EXPECT_EQ(EmotionConfig{}.stage_depths(), (std::pair<int, int>{7, 1}));
  EXPECT_EQ(tiny(2).stage_depths(), (std::pair<int, int>{1, 1}));
  EXPECT_EQ(tiny(1).stage_depths(), (std::pair<int, int>{1, 0}));
  EXPECT_EQ(tiny(0).stage_depths(), (std::pair<int, int>{0, 0}));
  EmotionConfig bad = tiny();
  bad.d_hidden = 9;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = tiny();
  bad.dropout = 1.0;
  EXPECT_THROW(bad.validate(), ConfigError);
  EXPECT_EQ(gate_mode_from_string(to_string(GateMode::shared)), GateMode::shared);
  EXPECT_THROW(gate_mode_from_string("open"), ConfigError);
}

TEST(StreamProjection, DefaultShapes) {
  EmotionConfig cfg;
  nn::Rng rng(1);
  StreamProjection proj(cfg, rng);
  for (std::uint64_t b = 0; b < 2; ++b) {
    ad::Tape t(false);
    auto s = proj.forward(t, t.constant(random_mat(9, 768, b)), t.constant(random_mat(9, 512, b + 7)), prefix_mask(9, 6),
                          false, rng);
    EXPECT_EQ(s.ctx.rows(), 9);
    EXPECT_EQ(s.ctx.cols(), 512);
    EXPECT_EQ(s.face.cols(), 512);
    EXPECT_EQ(s.ctx.value().bottomRows(3), Mat::Zero(3, 512));
  }
}

TEST(StreamProjection, EvalModeIsDeterministic) {
  EmotionConfig cfg = tiny();
  nn::Rng rng(1);
  StreamProjection proj(cfg, rng);
  const Mat x_ctx = random_mat(3, 6, 2), x_face = random_mat(3, 5, 3);
  ad::Tape t1(false), t2(false);
  nn::Rng r1(5), r2(99);
  auto a = proj.forward(t1, t1.constant(x_ctx), t1.constant(x_face), full_mask(3), false, r1);
  auto b = proj.forward(t2, t2.constant(x_ctx), t2.constant(x_face), full_mask(3), false, r2);
  EXPECT_EQ(a.ctx.value(), b.ctx.value());
  EXPECT_EQ(a.face.value(), b.face.value());
}

TEST(StreamProjection, DropoutIsUnbiased) {
  EmotionConfig cfg = tiny();
  nn::Rng rng(1);
  StreamProjection proj(cfg, rng);
  const Mat x_ctx = random_mat(2, 6, 2), x_face = random_mat(2, 5, 3);
  ad::Tape te(false);
  const Mat eval = proj.forward(te, te.constant(x_ctx), te.constant(x_face), full_mask(2), false, rng).ctx.value();
  const int N = 10000;
  Mat sum = Mat::Zero(2, 8), sq = Mat::Zero(2, 8);
  nn::Rng drop(17);
  for (int i = 0; i < N; ++i) {
    ad::Tape t(false);
    const Mat v = proj.forward(t, t.constant(x_ctx), t.constant(x_face), full_mask(2), true, drop).ctx.value();
    sum += v;
    sq += v.cwiseProduct(v);
  }
  const Mat mean = sum / N;
  const Mat var = (sq / N - mean.cwiseProduct(mean)) * (static_cast<double>(N) / (N - 1));
  for (Eigen::Index i = 0; i < mean.size(); ++i) {
    const double se = std::sqrt(var.data()[i] / N);
    EXPECT_LE(std::abs(mean.data()[i] - eval.data()[i]), 3.0 * se) << "entry " << i;
  }
}

TEST(StreamEncoder, DepthZeroAddsPositionsOnly) {
  nn::Rng rng(1);
  StreamEncoder enc("e", 8, 0, 2, 16, true, rng);
  const Mat x = random_mat(4, 8, 3);
  ad::Tape t(false);
  const Mat got = enc.forward(t, t.constant(x), full_mask(4)).value();
  EXPECT_LT((got - (x + nn::sinusoidal_positions(4, 8))).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(StreamEncoder, PaddedContentDoesNotLeak) {
  nn::Rng rng(1);
  StreamEncoder enc("e", 8, 2, 2, 16, true, rng);
  std::mt19937_64 fuzz(2);
  for (int trial = 0; trial < 20; ++trial) {
    Mat x = random_mat(6, 8, fuzz());
    const Mask mask = prefix_mask(6, 3);
    ad::Tape t1(false), t2(false);
    const Mat a = enc.forward(t1, t1.constant(x), mask).value();
    x.bottomRows(3) = random_mat(3, 8, fuzz(), 100.0);
    const Mat b = enc.forward(t2, t2.constant(x), mask).value();
    EXPECT_LT((a - b).topRows(3).cwiseAbs().maxCoeff(), 1e-6);
  }
  ad::Tape t(false);
  EXPECT_THROW(enc.forward(t, t.constant(random_mat(2, 8, 1)), Mask{0, 0}), ShapeError);
}

TEST(AlphaGate, PinnedActivations) {
  nn::Rng rng(1);
  AlphaGate gate("g", 4, rng);
  const Mat a = random_mat(3, 4, 2), b = random_mat(3, 4, 3);
  gate.proj.weight.value.setZero();
  gate.proj.bias.value.setZero();
  ad::Tape t(false);
  EXPECT_EQ(gate.forward(t, t.constant(a), t.constant(b)).value(), Mat::Constant(3, 4, 0.5));
  gate.proj.bias.value.setConstant(-40.0);
  EXPECT_LT(gate.forward(t, t.constant(a), t.constant(b)).value().maxCoeff(), 1e-17);
  EXPECT_THROW(gate.forward(t, t.constant(a), t.constant(random_mat(2, 4, 1))), ShapeError);
}

TEST(AlphaGate, StrictlyInsideUnitInterval) {
  nn::Rng rng(4);
  AlphaGate gate("g", 6, rng);
  std::mt19937_64 fuzz(5);
  for (int trial = 0; trial < 100; ++trial) {
    ad::Tape t(false);
    const Mat g = gate.forward(t, t.constant(random_mat(5, 6, fuzz(), 3.0)), t.constant(random_mat(5, 6, fuzz(), 3.0)))
                      .value();
    EXPECT_GT(g.minCoeff(), 0.0);
    EXPECT_LT(g.maxCoeff(), 1.0);
  }
}

StreamState state_of(ad::Tape& t, const Mat& ctx, const Mat& face) {
  return StreamState{t.constant(ctx), t.constant(face), full_mask(static_cast<int>(ctx.rows()))};
}

double max_rel(const Mat& got, const Mat& want) { return testing::max_rel_diff(got, want, 1e-300); }

TEST(InterFusion, ClosedGate) {
  nn::Rng rng(1);
  InterFusion block("f", 4, GateMode::complement, false, rng);
  block.gate.proj.weight.value.setZero();
  block.gate.proj.bias.value.setConstant(-40.0);
  const Mat ctx = random_mat(3, 4, 2), face = random_mat(3, 4, 3);
  ad::Tape t(false);
  auto out = block.forward(t, state_of(t, ctx, face));
  EXPECT_LE(max_rel(out.ctx.value(), ctx), 1e-12);
  EXPECT_LE(max_rel(out.face.value(), face + ctx), 1e-12);
}

TEST(InterFusion, HalfGateAndModes) {
  nn::Rng rng(1);
  const Mat ctx = random_mat(3, 4, 2), face = random_mat(3, 4, 3);
  for (GateMode mode : {GateMode::complement, GateMode::shared}) {
    InterFusion block("f", 4, mode, false, rng);
    block.gate.proj.weight.value.setZero();
    block.gate.proj.bias.value.setZero();
    ad::Tape t(false);
    auto out = block.forward(t, state_of(t, ctx, face));
    EXPECT_LT((out.ctx.value() - (ctx + 0.5 * face)).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_LT((out.face.value() - (face + 0.5 * ctx)).cwiseAbs().maxCoeff(), 1e-15);
  }
  InterFusion outer("f", 4, GateMode::complement, true, rng);
  outer.gate.proj.weight.value.setZero();
  outer.gate.proj.bias.value.setZero();
  ad::Tape t(false);
  auto out = outer.forward(t, state_of(t, ctx, face));
  EXPECT_LT((out.ctx.value() - (2.0 * ctx + 0.5 * face)).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(InterFusion, ZeroOtherStreamKeepsCtxExactly) {
  nn::Rng rng(6);
  InterFusion block("f", 4, GateMode::complement, false, rng);
  const Mat ctx = random_mat(5, 4, 2);
  ad::Tape t(false);
  auto out = block.forward(t, state_of(t, ctx, Mat::Zero(5, 4)));
  EXPECT_EQ(out.ctx.value(), ctx);
}

TEST(InterFusion, SymmetrisedGateMirrorsStreams) {
  nn::Rng rng(7);
  InterFusion block("f", 4, GateMode::shared, false, rng);
  // W = [A; A] makes the gate symmetric in its two inputs.
  const Mat A = random_mat(4, 4, 8);
  block.gate.proj.weight.value.topRows(4) = A;
  block.gate.proj.weight.value.bottomRows(4) = A;
  const Mat ctx = random_mat(3, 4, 2), face = random_mat(3, 4, 3);
  ad::Tape t(false);
  auto fwd = block.forward(t, state_of(t, ctx, face));
  auto rev = block.forward(t, state_of(t, face, ctx));
  EXPECT_LT((fwd.ctx.value() - rev.face.value()).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_LT((fwd.face.value() - rev.ctx.value()).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(MaskedMeanPool, MatchesUnpaddedMean) {
  std::vector<Mat> x{random_mat(5, 3, 1), random_mat(5, 3, 2)};
  std::vector<Mask> mask{prefix_mask(5, 1), prefix_mask(5, 4)};
  const Mat pooled = masked_mean_pool(x, mask);
  EXPECT_EQ(pooled.row(0), x[0].row(0));
  EXPECT_LT((pooled.row(1) - x[1].topRows(4).colwise().mean()).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_THROW(masked_mean_pool({random_mat(2, 3, 1)}, {Mask{0, 0}}), ShapeError);
}

TEST(EmotionModel, ShapesAndDeterminism) {
  EmotionModel m(tiny(3), 1);
  std::vector<SampleRecord> s{make_sample("a", 0, 5, 5, kDims, 1), make_sample("b", 1, 5, 2, kDims, 2)};
  const PaddedBatch batch = pad_and_mask_batch(s);
  const Mat a = m.forward(batch);
  EXPECT_EQ(a.rows(), 2);
  EXPECT_EQ(a.cols(), 1);
  EXPECT_TRUE(a.allFinite());
  EXPECT_EQ(a, m.forward(batch));
  EmotionModel again(tiny(3), 1);
  EXPECT_EQ(a, again.forward(batch));
}

TEST(EmotionModel, PaddingContentDoesNotMatter) {
  EmotionModel m(tiny(2), 3);
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const int T = 3 + static_cast<int>(rng() % 5);
    const int valid = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(T));
    PaddedBatch batch = pad_and_mask_batch(std::vector<SampleRecord>{make_sample("x", 0, T, valid, kDims, rng())});
    const Mat clean = m.forward(batch);
    for (auto& [tag, seqs] : batch.data)
      if (valid < T) seqs[0].bottomRows(T - valid) = random_mat(T - valid, seqs[0].cols(), rng(), 100.0);
    EXPECT_LE(testing::max_rel_diff(clean, m.forward(batch)), 1e-5);
  }
}

TEST(EmotionModel, DimensionMismatchIsReported) {
  EmotionModel m(tiny(), 1);
  PaddedBatch batch = pad_and_mask_batch(std::vector<SampleRecord>{
      make_sample("x", 0, 3, 3, {{Modality::ctx, 7}, {Modality::face, 5}}, 1)});
  EXPECT_THROW(m.forward(batch), ShapeError);
}

}  // namespace
}  // namespace mmfuse::emotion
