#pragma once

#include "mmfuse/types.hpp"

#include <filesystem>

namespace mmfuse {

// One modality's time-indexed features with a validity mask.
struct EmbeddingSequence {
  Mat data;       // T x D
  Mask mask;      // length T
  Modality modality = Modality::rgb;

  Eigen::Index length() const { return data.rows(); }
  Eigen::Index dim() const { return data.cols(); }

  // Throws ShapeError/NumericError when the invariants do not hold.
  void validate() const;
};

// Path of the JSON sidecar that accompanies a raw f32le data file.
std::filesystem::path sidecar_path(const std::filesystem::path& data_path);

// Raw little-endian float32, row-major, plus {"dtype":"f32le","shape":[R,C]}.
// Values are narrowed to float on write.
void write_matrix_f32(const std::filesystem::path& path, const Mat& m);
Mat read_matrix_f32(const std::filesystem::path& path);

void write_embedding_file(const std::filesystem::path& path, const EmbeddingSequence& seq);
EmbeddingSequence load_embedding_file(const std::filesystem::path& path, Modality modality);

}  // namespace mmfuse
