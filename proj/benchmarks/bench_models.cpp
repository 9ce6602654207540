#include "mmfuse/emotion.hpp"
#include "mmfuse/gesture.hpp"
#include "mmfuse/losses.hpp"
#include "mmfuse/memory.hpp"

#include <benchmark/benchmark.h>

#include <random>

namespace {

using namespace mmfuse;

Mat random_mat(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n;
  Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

// Full-size gesture model, one sample of T steps.
void BM_GestureForward(benchmark::State& state) {
  const auto T = static_cast<int>(state.range(0));
  gesture::CmtfConfig cfg;
  gesture::GestureModel model(cfg, gesture::Variant::cmtf, 1);
  const Mat rgb = random_mat(T, cfg.d_rgb, 2), pose = random_mat(T, cfg.d_pose, 3);
  const Mask mask = full_mask(T);
  for (auto _ : state) {
    ad::Tape tape(false);
    auto out = model.forward_sample(tape, rgb, pose, mask, nullptr, false);
    benchmark::DoNotOptimize(out.fused.value().data());
  }
}
BENCHMARK(BM_GestureForward)->Arg(8)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_GestureTrainStep(benchmark::State& state) {
  gesture::CmtfConfig cfg;
  cfg.d_rgb = 64;
  cfg.d_pose = 32;
  cfg.d_hidden = 64;
  cfg.n_classes = 8;
  gesture::GestureModel model(cfg, gesture::Variant::cmtf, 1);
  const int T = 12;
  const Mat rgb = random_mat(T, cfg.d_rgb, 2), pose = random_mat(T, cfg.d_pose, 3);
  const Mask mask = full_mask(T);
  auto params = model.parameters();
  for (auto _ : state) {
    for (auto* p : params) p->zero_grad();
    ad::Tape tape;
    auto out = model.forward_sample(tape, rgb, pose, mask, nullptr, false);
    tape.backward(cross_entropy(out.fused, {3}));
  }
}
BENCHMARK(BM_GestureTrainStep)->Unit(benchmark::kMillisecond);

void BM_EmotionForward(benchmark::State& state) {
  emotion::EmotionConfig cfg;
  cfg.encoder_depth = static_cast<int>(state.range(0));
  emotion::EmotionModel model(cfg, 1);
  const int T = 16;
  const Mat ctx = random_mat(T, cfg.d_ctx, 2), face = random_mat(T, cfg.d_face, 3);
  const Mask mask = full_mask(T);
  nn::Rng rng(0);
  for (auto _ : state) {
    ad::Tape tape(false);
    benchmark::DoNotOptimize(model.forward_sample(tape, ctx, face, mask, false, rng).scalar());
  }
}
BENCHMARK(BM_EmotionForward)->Arg(2)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_MemoryTopK(benchmark::State& state) {
  MemoryBank bank(32, 512);
  std::mt19937_64 rng(7);
  for (int c = 0; c < 32; ++c)
    for (int i = 0; i < 50; ++i) bank.maybe_insert(random_mat(1, 512, rng()).row(0), c, c, 1.0);
  const RowVec q = random_mat(1, 512, 99).row(0);
  for (auto _ : state) benchmark::DoNotOptimize(bank.retrieve_topk(q, 5));
}
BENCHMARK(BM_MemoryTopK);

}  // namespace
BENCHMARK_MAIN();
