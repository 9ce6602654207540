#pragma once

// Minimal reverse-mode automatic differentiation over dense row-major
// matrices. A Tape records every operation of one forward pass; calling
// backward() on a 1x1 result walks the tape in reverse and accumulates
// gradients into the participating Parameters.

#include "mmfuse/types.hpp"

#include <deque>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace mmfuse {

struct Parameter {
  std::string name;
  Mat value;
  Mat grad;
  // AdamW moment estimates.
  Mat m;
  Mat v;
  bool decay = true;

  Parameter() = default;
  Parameter(std::string n, Mat init, bool apply_decay = true);

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
  Eigen::Index size() const { return value.size(); }
};

using ParamList = std::vector<Parameter*>;

namespace ad {

class Tape;

// Lightweight handle to a node on a Tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  const Mat& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const;

  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  // With track_params=false parameters enter as constants and no backward
  // closures are recorded (inference mode).
  explicit Tape(bool track_params = true) : track_params_(track_params) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Mat value);
  Var param(Parameter& p);

  using Backward = std::function<void(Tape&, int self)>;
  Var push(Mat value, std::initializer_list<Var> inputs, Backward backward);
  Var push(Mat value, std::span<const Var> inputs, Backward backward);

  // Seed d(root)/d(root) = 1 and propagate; root must be 1x1.
  void backward(Var root);

  const Mat& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  bool needs_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].needs_grad; }
  // Gradient buffer of node `id`, zero-initialised on first access.
  Mat& grad(int id);
  const Mat& grad_of(int id) const { return nodes_[static_cast<std::size_t>(id)].grad; }
  std::size_t size() const { return nodes_.size(); }
  bool tracking() const { return track_params_; }

 private:
  struct Node {
    Mat value;
    Mat grad;
    Backward backward;
    Parameter* param = nullptr;
    bool needs_grad = false;
  };

  bool track_params_;
  std::deque<Node> nodes_;
  std::unordered_map<Parameter*, int> param_nodes_;
};

// Arithmetic
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);                 // elementwise
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var scale_by(Var a, Var s);            // s is 1x1
Var matmul(Var a, Var b);              // a * b
Var matmul_nt(Var a, Var b);           // a * b^T
Var add_rowvec(Var a, Var row);        // broadcast 1xC over rows
Var mul_rowvec(Var a, Var row);
Var sum(Var a);                        // -> 1x1
Var mean(Var a);                       // -> 1x1

// Pointwise nonlinearities
Var sigmoid(Var a);
Var gelu(Var a);                       // tanh approximation
Var relu(Var a);

// Structural
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_cols(Var a, Eigen::Index start, Eigen::Index count);
Var slice_rows(Var a, Eigen::Index start, Eigen::Index count);
Var element(Var a, Eigen::Index r, Eigen::Index c);  // -> 1x1

// Row-wise
Var softmax_rows(Var a);
// Softmax of each row restricted to columns with key_mask != 0; other
// columns receive exactly zero weight.
Var masked_softmax_rows(Var a, const Mask& key_mask);
Var layer_norm_rows(Var a, double eps = 1e-5);
Var l2_normalize_rows(Var a, double eps = 1e-12);

// Masking
Var mask_rows(Var a, const Mask& mask);           // zero invalid rows
Var masked_mean_rows(Var a, const Mask& mask);    // -> 1xC

}  // namespace ad
}  // namespace mmfuse
