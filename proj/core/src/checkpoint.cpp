#include "mmfuse/checkpoint.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace mmfuse {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw LoadError("cannot write " + path.string());
  out << text << '\n';
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string indexed_name(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%04zu.f32", prefix, i);
  return buf;
}

}  // namespace

ParamList LoadedModel::parameters() {
  if (gesture) return gesture->parameters();
  if (emotion) return emotion->parameters();
  return {};
}

void save_checkpoint(const fs::path& dir, const ModelSpec& spec, const ParamList& params, const MemoryBank* memory,
                     const CheckpointMeta& meta) {
  fs::create_directories(dir / "params");
  json index = json::array();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto file = indexed_name("p", i);
    write_matrix_f32(dir / "params" / file, params[i]->value);
    index.push_back({{"name", params[i]->name},
                     {"file", "params/" + file},
                     {"shape", {params[i]->value.rows(), params[i]->value.cols()}}});
  }
  json doc;
  doc["format"] = "mmfuse-checkpoint";
  doc["version"] = 1;
  doc["model"] = json::parse(model_spec_to_json(spec));
  doc["epoch"] = meta.epoch;
  doc["refine_active"] = meta.refine_active;
  doc["params"] = index;
  doc["has_memory"] = memory != nullptr;
  write_text(dir / "model.json", doc.dump(2));

  if (memory == nullptr) return;
  fs::create_directories(dir / "memory");
  json classes = json::array();
  for (int c = 0; c < memory->n_classes(); ++c) {
    const auto& slots = memory->slots(c);
    json entry = {{"class", c}, {"size", slots.size()}, {"cursor", memory->cursor(c)}};
    if (!slots.empty()) {
      Mat block(static_cast<Eigen::Index>(slots.size()), memory->dim());
      for (std::size_t s = 0; s < slots.size(); ++s) block.row(static_cast<Eigen::Index>(s)) = slots[s];
      const auto file = indexed_name("class_", static_cast<std::size_t>(c));
      write_matrix_f32(dir / "memory" / file, block);
      entry["file"] = "memory/" + file;
    }
    classes.push_back(entry);
  }
  const MemoryConfig& mc = memory->config();
  json mem = {{"n_classes", memory->n_classes()},
              {"dim", memory->dim()},
              {"capacity", mc.capacity},
              {"top_k", mc.top_k},
              {"momentum", mc.momentum},
              {"confidence_threshold", mc.confidence_threshold},
              {"classes", classes}};
  write_text(dir / "memory.json", mem.dump(2));
}

LoadedModel load_checkpoint(const fs::path& dir) {
  const fs::path model_path = dir / "model.json";
  if (!fs::exists(model_path)) throw LoadError("checkpoint " + dir.string() + " has no model.json");
  json doc;
  try {
    doc = json::parse(read_text(model_path));
  } catch (const json::exception& e) {
    throw LoadError(model_path.string() + ": " + e.what());
  }
  LoadedModel out;
  try {
    if (doc.value("format", "") != "mmfuse-checkpoint") throw ConfigError(model_path.string() + " is not a checkpoint");
    out.spec = model_spec_from_json(doc.at("model").dump());
    out.meta.epoch = doc.value("epoch", 0);
    out.meta.refine_active = doc.value("refine_active", false);
  } catch (const json::exception& e) {
    throw ConfigError(model_path.string() + ": " + e.what());
  }

  if (out.spec.task == Task::gesture)
    out.gesture = std::make_unique<gesture::GestureModel>(out.spec.cmtf, out.spec.variant, out.spec.seed);
  else
    out.emotion = std::make_unique<emotion::EmotionModel>(out.spec.emotion, out.spec.seed);

  std::map<std::string, fs::path> files;
  for (const auto& p : doc.at("params")) files[p.at("name").get<std::string>()] = dir / p.at("file").get<std::string>();
  const ParamList params = out.parameters();
  if (params.size() != files.size())
    throw ConfigError("checkpoint holds " + std::to_string(files.size()) + " tensors, architecture needs " +
                      std::to_string(params.size()));
  for (auto* p : params) {
    auto it = files.find(p->name);
    if (it == files.end()) throw ConfigError("checkpoint is missing parameter " + p->name);
    Mat value = read_matrix_f32(it->second);
    if (value.rows() != p->value.rows() || value.cols() != p->value.cols())
      throw ConfigError("parameter " + p->name + " has shape " + std::to_string(value.rows()) + "x" +
                        std::to_string(value.cols()) + " in the checkpoint but the model expects " +
                        std::to_string(p->value.rows()) + "x" + std::to_string(p->value.cols()));
    p->value = std::move(value);
  }

  if (doc.value("has_memory", false)) {
    json mem = json::parse(read_text(dir / "memory.json"));
    MemoryConfig mc;
    mc.capacity = mem.at("capacity").get<int>();
    mc.top_k = mem.at("top_k").get<int>();
    mc.momentum = mem.at("momentum").get<double>();
    mc.confidence_threshold = mem.at("confidence_threshold").get<double>();
    const int dim = mem.at("dim").get<int>();
    if (out.gesture && dim != out.spec.cmtf.d_hidden)
      throw ConfigError("memory dim " + std::to_string(dim) + " does not match d_hidden " +
                        std::to_string(out.spec.cmtf.d_hidden));
    out.memory.emplace(mem.at("n_classes").get<int>(), dim, mc);
    for (const auto& entry : mem.at("classes")) {
      const int c = entry.at("class").get<int>();
      std::vector<RowVec> slots;
      if (entry.contains("file")) {
        Mat block = read_matrix_f32(dir / entry.at("file").get<std::string>());
        if (block.cols() != dim) throw ConfigError("memory block for class " + std::to_string(c) + " has wrong dim");
        for (Eigen::Index r = 0; r < block.rows(); ++r) slots.emplace_back(block.row(r));
      }
      out.memory->restore(c, std::move(slots), entry.at("cursor").get<long long>());
    }
  }
  return out;
}

}  // namespace mmfuse
