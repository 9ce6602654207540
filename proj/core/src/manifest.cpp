#include "mmfuse/dataset.hpp"

#include <json.hpp>

#include <fstream>
#include <set>

namespace mmfuse {

namespace fs = std::filesystem;
using nlohmann::json;

int canonicalize_gesture_label(int raw) {
  if (raw == kRawNonGestureLabel) return kNonGestureIndex;
  if (raw >= 0 && raw < kGestureClasses) return raw;
  throw ConfigError("gesture label " + std::to_string(raw) + " outside {0..31, 99}");
}

Eigen::Index SampleRecord::length() const {
  if (streams.empty()) return 0;
  return streams.begin()->second.length();
}

void SampleRecord::validate() const {
  if (streams.empty()) throw ShapeError("sample " + id + " has no streams");
  const auto& first = streams.begin()->second;
  for (const auto& [tag, seq] : streams) {
    seq.validate();
    if (seq.length() != first.length())
      throw ShapeError("sample " + id + ": stream " + std::string(to_string(tag)) + " has T=" +
                       std::to_string(seq.length()) + ", expected " + std::to_string(first.length()));
    if (seq.mask != first.mask) throw ShapeError("sample " + id + ": stream masks differ");
  }
}

std::vector<int> Manifest::labels() const {
  std::vector<int> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(e.label);
  return out;
}

std::vector<int> Manifest::lengths() const {
  std::vector<int> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(e.length);
  return out;
}

Manifest Manifest::subset(const std::vector<std::size_t>& indices) const {
  Manifest m;
  m.entries.reserve(indices.size());
  for (auto i : indices) m.entries.push_back(entries.at(i));
  return m;
}

void save_manifest(const fs::path& path, const Manifest& manifest) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw LoadError("cannot write manifest " + path.string());
  const fs::path base = path.has_parent_path() ? path.parent_path() : fs::path(".");
  for (const auto& e : manifest.entries) {
    json streams = json::object();
    for (const auto& [tag, p] : e.streams) {
      const fs::path rel = p.is_absolute() ? p.lexically_relative(fs::absolute(base)) : p.lexically_relative(base);
      streams[std::string(to_string(tag))] = (rel.empty() ? p : rel).generic_string();
    }
    json j = {{"id", e.id}, {"label", e.label}, {"len", e.length}, {"streams", streams}};
    if (e.raw_label) j["raw_label"] = *e.raw_label;
    out << j.dump() << '\n';
  }
}

Manifest load_manifest(const fs::path& path, bool gesture_labels) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open manifest " + path.string());
  const fs::path base = path.has_parent_path() ? path.parent_path() : fs::path(".");
  Manifest m;
  std::set<std::string> seen;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw LoadError(where + ": " + e.what());
    }
    for (const char* key : {"id", "label", "len", "streams"})
      if (!j.contains(key)) throw LoadError(where + ": missing key '" + key + "'");
    ManifestEntry e;
    e.id = j["id"].get<std::string>();
    if (!seen.insert(e.id).second) throw LoadError(where + ": duplicate id '" + e.id + "'");
    int label = j["label"].get<int>();
    if (j.contains("raw_label")) e.raw_label = j["raw_label"].get<int>();
    if (gesture_labels) {
      int canon = canonicalize_gesture_label(label);
      if (canon != label) e.raw_label = label;
      if (e.raw_label && canonicalize_gesture_label(*e.raw_label) != canon)
        throw LoadError(where + ": raw_label does not map to label");
      label = canon;
    }
    e.label = label;
    e.length = j["len"].get<int>();
    if (e.length < 1) throw LoadError(where + ": len must be >= 1");
    for (const auto& [tag, p] : j["streams"].items()) {
      fs::path sp = p.get<std::string>();
      if (sp.is_relative()) sp = base / sp;
      if (!fs::exists(sp)) throw LoadError(where + ": stream file " + sp.string() + " does not exist");
      e.streams.emplace(modality_from_string(tag), sp);
    }
    if (e.streams.empty()) throw LoadError(where + ": no streams");
    m.entries.push_back(std::move(e));
  }
  return m;
}

SampleRecord load_sample(const ManifestEntry& entry) {
  SampleRecord s;
  s.id = entry.id;
  s.label = entry.label;
  for (const auto& [tag, p] : entry.streams) {
    EmbeddingSequence seq = load_embedding_file(p, tag);
    if (seq.length() != entry.length)
      throw LoadError(p.string() + ": stored length " + std::to_string(seq.length()) +
                      " does not match manifest len " + std::to_string(entry.length));
    s.streams.emplace(tag, std::move(seq));
  }
  s.validate();
  return s;
}

std::vector<SampleRecord> load_samples(const Manifest& manifest) {
  std::vector<SampleRecord> out;
  out.reserve(manifest.size());
  for (const auto& e : manifest.entries) out.push_back(load_sample(e));
  return out;
}

}  // namespace mmfuse
