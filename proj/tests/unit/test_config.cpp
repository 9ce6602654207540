#include "mmfuse/checkpoint.hpp"
#include "mmfuse/config.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <json.hpp>

#include <fstream>

namespace mmfuse {
namespace {

namespace fs = std::filesystem;
using testing::TempDir;

TEST(Config, TaskDefaults) {
  const RunConfig g = parse_run_config(R"({"model":{"task":"gesture"}})");
  EXPECT_EQ(g.model.task, Task::gesture);
  EXPECT_EQ(g.train.lr, 1e-4);
  EXPECT_EQ(g.train.weight_decay, 1e-4);
  EXPECT_EQ(g.train.batch_size, 8);
  EXPECT_EQ(g.train.max_epochs, 20);
  EXPECT_EQ(g.train.early_stop_patience, 7);
  EXPECT_EQ(g.model.cmtf.d_hidden, 512);
  EXPECT_EQ(g.model.cmtf.n_heads, 8);
  EXPECT_EQ(g.model.memory.capacity, 50);
  EXPECT_EQ(g.model.memory.top_k, 5);
  EXPECT_EQ(g.model.memory.momentum, 0.9);
  EXPECT_TRUE(g.model.cmtf.classify_refined);
  EXPECT_EQ(g.model.variant, gesture::Variant::cmtf_memory);

  const RunConfig e = parse_run_config(R"({"model":{"task":"emotion"}})");
  EXPECT_EQ(e.model.task, Task::emotion);
  EXPECT_EQ(e.model.emotion.encoder_depth, 8);
  EXPECT_EQ(e.model.emotion.n_heads, 4);
  EXPECT_EQ(e.model.emotion.dropout, 0.5);
  EXPECT_EQ(e.train.focal_gamma, 0.5);
  EXPECT_TRUE(e.train.class_weights);
  EXPECT_EQ(e.train.lr, 1e-5);
}

TEST(Config, UnknownKeysAreRejected) {
  for (const char* doc : {R"({"model":{"task":"gesture","d_hiden":32}})", R"({"train":{"lrate":1}})",
                          R"({"data":{"synthetic":{"n_sample":3}}})", R"({"outputs":{}})",
                          R"({"model":{"memory":{"size":3}}})"}) {
    EXPECT_THROW(parse_run_config(doc), ConfigError) << doc;
  }
  try {
    parse_run_config(R"({"model":{"bogus":1}})");
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("model.bogus"), std::string::npos);
  }
}

TEST(Config, InvalidValuesAreRejected) {
  EXPECT_THROW(parse_run_config(R"({"train":{"lr":0}})"), ConfigError);
  EXPECT_THROW(parse_run_config(R"({"train":{"early_stop_patience":0}})"), ConfigError);
  EXPECT_THROW(parse_run_config(R"({"train":{"focal_gamma":-1}})"), ConfigError);
  EXPECT_THROW(parse_run_config(R"({"train":{"lr":"fast"}})"), ConfigError);
  EXPECT_THROW(parse_run_config(R"({"model":{"d_hidden":30,"n_heads":8}})"), ConfigError);
  EXPECT_THROW(parse_run_config(R"({"model":{"task":"gesture"},"train":{"task":"emotion"}})"), ConfigError);
  EXPECT_THROW(parse_run_config("{not json"), ConfigError);
  EXPECT_THROW(parse_run_config(R"({"data":{"manifest":"a","synthetic":{}}})"), ConfigError);
}

TEST(Config, PathsResolveAndAreValidated) {
  TempDir dir("config");
  std::ofstream(dir.path() / "run.json")
      << R"({"data":{"manifest":"m.jsonl"},"output":{"dir":"out"},"model":{"task":"gesture"}})";
  const RunConfig cfg = load_run_config(dir.path() / "run.json");
  EXPECT_EQ(*cfg.data.manifest, dir.path() / "m.jsonl");
  EXPECT_EQ(cfg.output_dir, dir.path() / "out");
  EXPECT_THROW(validate_paths(cfg), ConfigError);
  std::ofstream(dir.path() / "m.jsonl") << "";
  EXPECT_NO_THROW(validate_paths(cfg));
  EXPECT_THROW(load_run_config(dir.path() / "missing.json"), ConfigError);
}

TEST(Config, ModelSpecRoundTrip) {
  ModelSpec m;
  m.cmtf.d_rgb = 12;
  m.cmtf.classify_refined = false;
  m.variant = gesture::Variant::cmtf;
  m.memory.top_k = 3;
  m.seed = 42;
  const ModelSpec back = model_spec_from_json(model_spec_to_json(m));
  EXPECT_EQ(back.cmtf.d_rgb, 12);
  EXPECT_FALSE(back.cmtf.classify_refined);
  EXPECT_EQ(back.variant, gesture::Variant::cmtf);
  EXPECT_EQ(back.memory.top_k, 3);
  EXPECT_EQ(back.seed, 42u);

  ModelSpec e;
  e.task = Task::emotion;
  e.emotion.gate_mode = emotion::GateMode::shared;
  e.emotion.outer_residual = true;
  e.emotion.encoder_depth = 3;
  const ModelSpec eb = model_spec_from_json(model_spec_to_json(e));
  EXPECT_EQ(eb.task, Task::emotion);
  EXPECT_EQ(eb.emotion.gate_mode, emotion::GateMode::shared);
  EXPECT_TRUE(eb.emotion.outer_residual);
  EXPECT_EQ(eb.emotion.encoder_depth, 3);
  EXPECT_EQ(eb.emotion.n_heads, 4);
}

ModelSpec tiny_gesture() {
  ModelSpec m;
  m.cmtf.d_rgb = 6;
  m.cmtf.d_pose = 4;
  m.cmtf.d_hidden = 8;
  m.cmtf.n_heads = 2;
  m.cmtf.n_classes = 3;
  m.seed = 7;
  return m;
}

TEST(Checkpoint, GestureRoundTripWithMemory) {
  TempDir dir("ckpt");
  const ModelSpec spec = tiny_gesture();
  gesture::GestureModel model(spec.cmtf, spec.variant, spec.seed);
  for (auto* p : model.parameters()) p->value = p->value.cast<float>().cast<double>();
  MemoryBank bank(3, 8, spec.memory);
  std::mt19937_64 rng(1);
  for (int i = 0; i < 7; ++i)
    bank.maybe_insert(testing::random_mat(1, 8, rng()).row(0).cast<float>().cast<double>(), i % 2, i % 2, 1.0);
  save_checkpoint(dir.path(), spec, model.parameters(), &bank, {4, true});

  LoadedModel loaded = load_checkpoint(dir.path());
  ASSERT_TRUE(loaded.gesture);
  EXPECT_FALSE(loaded.emotion);
  EXPECT_EQ(loaded.meta.epoch, 4);
  EXPECT_TRUE(loaded.meta.refine_active);
  auto a = model.parameters(), b = loaded.parameters();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i]->value, b[i]->value) << a[i]->name;
  ASSERT_TRUE(loaded.memory);
  for (int c = 0; c < 3; ++c) {
    ASSERT_EQ(loaded.memory->size(c), bank.size(c));
    EXPECT_EQ(loaded.memory->cursor(c), bank.cursor(c));
    for (std::size_t k = 0; k < bank.size(c); ++k)
      EXPECT_LT((loaded.memory->slots(c)[k] - bank.slots(c)[k]).cwiseAbs().maxCoeff(), 1e-6);
  }
}

TEST(Checkpoint, EmotionRoundTrip) {
  TempDir dir("ckpt");
  ModelSpec spec;
  spec.task = Task::emotion;
  spec.emotion.d_ctx = 6;
  spec.emotion.d_face = 5;
  spec.emotion.d_hidden = 8;
  spec.emotion.encoder_depth = 2;
  spec.emotion.n_heads = 2;
  emotion::EmotionModel model(spec.emotion, 3);
  save_checkpoint(dir.path(), spec, model.parameters(), nullptr, {1, false});
  LoadedModel loaded = load_checkpoint(dir.path());
  ASSERT_TRUE(loaded.emotion);
  EXPECT_FALSE(loaded.memory);
  auto a = model.parameters(), b = loaded.parameters();
  for (std::size_t i = 0; i < a.size(); ++i)
    EXPECT_EQ(b[i]->value, a[i]->value.cast<float>().cast<double>()) << a[i]->name;
}

TEST(Checkpoint, MismatchedShapesAndMissingFiles) {
  TempDir dir("ckpt");
  ModelSpec spec = tiny_gesture();
  gesture::GestureModel model(spec.cmtf, spec.variant, spec.seed);
  MemoryBank bank(3, 8);
  save_checkpoint(dir.path(), spec, model.parameters(), &bank, {});
  // Re-describe the architecture with a different input dimension.
  nlohmann::json j;
  std::ifstream(dir.path() / "model.json") >> j;
  ASSERT_EQ(j["model"]["d_rgb"], 6);
  j["model"]["d_rgb"] = 7;
  std::ofstream(dir.path() / "model.json", std::ios::trunc) << j.dump();
  EXPECT_THROW(load_checkpoint(dir.path()), ConfigError);
  EXPECT_THROW(load_checkpoint(dir.path() / "nowhere"), LoadError);
}

}  // namespace
}  // namespace mmfuse
