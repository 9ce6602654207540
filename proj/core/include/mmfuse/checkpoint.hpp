#pragma once

// On-disk model state. A checkpoint directory holds model.json (spec,
// metadata and the parameter index), one f32 file per parameter under
// params/, and for memory models one block per non-empty class under
// memory/ with memory.json describing sizes and cursors.

#include "mmfuse/config.hpp"
#include "mmfuse/emotion.hpp"
#include "mmfuse/gesture.hpp"
#include "mmfuse/memory.hpp"

#include <filesystem>
#include <memory>
#include <optional>

namespace mmfuse {

struct CheckpointMeta {
  int epoch = 0;             // 1-based epoch the state was taken after
  bool refine_active = false;
};

void save_checkpoint(const std::filesystem::path& dir, const ModelSpec& spec, const ParamList& params,
                     const MemoryBank* memory, const CheckpointMeta& meta);

struct LoadedModel {
  ModelSpec spec;
  CheckpointMeta meta;
  std::unique_ptr<gesture::GestureModel> gesture;
  std::unique_ptr<emotion::EmotionModel> emotion;
  std::optional<MemoryBank> memory;

  ParamList parameters();
};

// Throws LoadError for unreadable files and ConfigError when a stored
// tensor does not fit the architecture described by model.json.
LoadedModel load_checkpoint(const std::filesystem::path& dir);

}  // namespace mmfuse
