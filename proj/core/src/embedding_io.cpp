#include "mmfuse/embedding_io.hpp"

#include <json.hpp>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace mmfuse {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(Modality m) {
  switch (m) {
    case Modality::rgb: return "rgb";
    case Modality::pose: return "pose";
    case Modality::ctx: return "ctx";
    case Modality::face: return "face";
  }
  return "?";
}

Modality modality_from_string(std::string_view s) {
  if (s == "rgb") return Modality::rgb;
  if (s == "pose") return Modality::pose;
  if (s == "ctx") return Modality::ctx;
  if (s == "face") return Modality::face;
  throw ConfigError("unknown modality tag '" + std::string(s) + "'");
}

std::string_view to_string(Task t) { return t == Task::gesture ? "gesture" : "emotion"; }

Task task_from_string(std::string_view s) {
  if (s == "gesture") return Task::gesture;
  if (s == "emotion") return Task::emotion;
  throw ConfigError("unknown task '" + std::string(s) + "'");
}

void EmbeddingSequence::validate() const {
  if (data.rows() < 1 || data.cols() < 1) throw ShapeError("embedding sequence must have T >= 1 and D >= 1");
  if (static_cast<Eigen::Index>(mask.size()) != data.rows()) throw ShapeError("mask length differs from T");
  if (count_valid(mask) == 0) throw ShapeError("embedding sequence has no valid step");
  if (!data.allFinite()) throw NumericError("embedding sequence contains non-finite values");
}

fs::path sidecar_path(const fs::path& data_path) {
  fs::path p = data_path;
  p += ".json";
  return p;
}

void write_matrix_f32(const fs::path& path, const Mat& m) {
  static_assert(std::endian::native == std::endian::little, "f32le writer assumes a little-endian host");
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::vector<float> buf(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.size(); ++i) buf[static_cast<std::size_t>(i)] = static_cast<float>(m.data()[i]);
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw LoadError("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  json side = {{"dtype", "f32le"}, {"shape", {m.rows(), m.cols()}}};
  std::ofstream sc(sidecar_path(path), std::ios::trunc);
  if (!sc) throw LoadError("cannot open sidecar for " + path.string());
  sc << side.dump() << '\n';
}

Mat read_matrix_f32(const fs::path& path) {
  const fs::path sc = sidecar_path(path);
  if (!fs::exists(sc)) throw LoadError(path.string() + ": missing sidecar " + sc.string());
  json side;
  try {
    std::ifstream in(sc);
    side = json::parse(in);
  } catch (const json::exception& e) {
    throw LoadError(path.string() + ": malformed sidecar: " + e.what());
  }
  if (!side.contains("dtype") || side["dtype"] != "f32le")
    throw LoadError(path.string() + ": sidecar dtype must be \"f32le\"");
  if (!side.contains("shape") || !side["shape"].is_array() || side["shape"].size() != 2)
    throw LoadError(path.string() + ": sidecar shape must be [rows, cols]");
  const auto rows = side["shape"][0].get<long long>();
  const auto cols = side["shape"][1].get<long long>();
  if (rows < 0 || cols < 0) throw LoadError(path.string() + ": negative shape");

  if (!fs::exists(path)) throw LoadError(path.string() + ": data file missing");
  const auto bytes = fs::file_size(path);
  const auto expected = static_cast<std::uintmax_t>(rows * cols) * sizeof(float);
  if (bytes != expected)
    throw LoadError(path.string() + ": size mismatch, header declares " + std::to_string(rows) + "x" +
                    std::to_string(cols) + " (" + std::to_string(expected) + " bytes) but file holds " +
                    std::to_string(bytes) + " bytes");

  std::vector<float> buf(static_cast<std::size_t>(rows * cols));
  std::ifstream in(path, std::ios::binary);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(expected));
  if (!in) throw LoadError(path.string() + ": short read");

  Mat m(rows, cols);
  for (std::size_t i = 0; i < buf.size(); ++i) {
    if (!std::isfinite(buf[i])) throw LoadError(path.string() + ": non-finite value at index " + std::to_string(i));
    m.data()[i] = static_cast<double>(buf[i]);
  }
  return m;
}

void write_embedding_file(const fs::path& path, const EmbeddingSequence& seq) {
  write_matrix_f32(path, seq.data);
}

EmbeddingSequence load_embedding_file(const fs::path& path, Modality modality) {
  EmbeddingSequence seq;
  seq.data = read_matrix_f32(path);
  if (seq.data.rows() < 1 || seq.data.cols() < 1) throw LoadError(path.string() + ": empty embedding");
  seq.mask = full_mask(static_cast<int>(seq.data.rows()));
  seq.modality = modality;
  return seq;
}

}  // namespace mmfuse
