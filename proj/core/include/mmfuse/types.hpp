#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mmfuse {

// All model arithmetic runs in double precision; files are stored as f32.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVec = Eigen::Matrix<double, 1, Eigen::Dynamic>;

// One entry per time step, nonzero = valid.
using Mask = std::vector<std::uint8_t>;

enum class Modality { rgb, pose, ctx, face };

std::string_view to_string(Modality m);
Modality modality_from_string(std::string_view s);

enum class Task { gesture, emotion };

std::string_view to_string(Task t);
Task task_from_string(std::string_view s);

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or missing data files.
class LoadError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration or arguments.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Tensor shape contract violated.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf encountered where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

inline int count_valid(const Mask& mask) {
  int n = 0;
  for (auto v : mask) n += v != 0;
  return n;
}

inline Mask full_mask(int length) { return Mask(static_cast<std::size_t>(length), 1); }

}  // namespace mmfuse
