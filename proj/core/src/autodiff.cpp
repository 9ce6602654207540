#include "mmfuse/autodiff.hpp"

#include <cmath>
#include <sstream>

namespace mmfuse {

Parameter::Parameter(std::string n, Mat init, bool apply_decay)
    : name(std::move(n)), value(std::move(init)), decay(apply_decay) {
  grad = Mat::Zero(value.rows(), value.cols());
  m = Mat::Zero(value.rows(), value.cols());
  v = Mat::Zero(value.rows(), value.cols());
}

namespace ad {

const Mat& Var::value() const { return tape_->value(id_); }

double Var::scalar() const {
  const Mat& v = value();
  if (v.size() != 1) throw ShapeError("scalar() called on non-1x1 value");
  return v(0, 0);
}

Var Tape::constant(Mat value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::param(Parameter& p) {
  if (!track_params_) return constant(p.value);
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var(this, it->second);
  Node n;
  n.value = p.value;
  n.param = &p;
  n.needs_grad = true;
  nodes_.push_back(std::move(n));
  int id = static_cast<int>(nodes_.size() - 1);
  param_nodes_.emplace(&p, id);
  return Var(this, id);
}

Var Tape::push(Mat value, std::initializer_list<Var> inputs, Backward backward) {
  return push(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(backward));
}

Var Tape::push(Mat value, std::span<const Var> inputs, Backward backward) {
  Node n;
  n.value = std::move(value);
  for (const Var& in : inputs) {
    if (in.tape() != this) throw ShapeError("Var from a different tape");
    n.needs_grad = n.needs_grad || needs_grad(in.id());
  }
  if (n.needs_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Mat& Tape::grad(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.size() == 0 && n.value.size() != 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::backward(Var root) {
  if (root.tape() != this) throw ShapeError("backward root from a different tape");
  if (root.value().size() != 1) throw ShapeError("backward root must be 1x1");
  grad(root.id())(0, 0) += 1.0;
  for (int id = root.id(); id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.needs_grad || n.grad.size() == 0) continue;
    if (n.backward) n.backward(*this, id);
    if (n.param != nullptr) n.param->grad += n.grad;
  }
}

namespace {

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    std::ostringstream os;
    os << op << ": shape mismatch " << a.rows() << "x" << a.cols() << " vs " << b.rows() << "x"
       << b.cols();
    throw ShapeError(os.str());
  }
}

void require_mask(const Var& a, const Mask& mask, Eigen::Index expected, const char* op) {
  if (static_cast<Eigen::Index>(mask.size()) != expected) {
    std::ostringstream os;
    os << op << ": mask length " << mask.size() << " does not match " << expected;
    throw ShapeError(os.str());
  }
  (void)a;
}

}  // namespace

Var add(Var a, Var b) {
  require_same_shape(a, b, "add");
  Tape& t = *a.tape();
  int ia = a.id(), ib = b.id();
  return t.push(a.value() + b.value(), {a, b}, [ia, ib](Tape& t, int self) {
    if (t.needs_grad(ia)) t.grad(ia) += t.grad_of(self);
    if (t.needs_grad(ib)) t.grad(ib) += t.grad_of(self);
  });
}

Var sub(Var a, Var b) {
  require_same_shape(a, b, "sub");
  Tape& t = *a.tape();
  int ia = a.id(), ib = b.id();
  return t.push(a.value() - b.value(), {a, b}, [ia, ib](Tape& t, int self) {
    if (t.needs_grad(ia)) t.grad(ia) += t.grad_of(self);
    if (t.needs_grad(ib)) t.grad(ib) -= t.grad_of(self);
  });
}

Var mul(Var a, Var b) {
  require_same_shape(a, b, "mul");
  Tape& t = *a.tape();
  int ia = a.id(), ib = b.id();
  return t.push(a.value().cwiseProduct(b.value()), {a, b}, [ia, ib](Tape& t, int self) {
    if (t.needs_grad(ia)) t.grad(ia) += t.grad_of(self).cwiseProduct(t.value(ib));
    if (t.needs_grad(ib)) t.grad(ib) += t.grad_of(self).cwiseProduct(t.value(ia));
  });
}

Var scale(Var a, double s) {
  Tape& t = *a.tape();
  int ia = a.id();
  return t.push(a.value() * s, {a}, [ia, s](Tape& t, int self) { t.grad(ia) += t.grad_of(self) * s; });
}

Var add_scalar(Var a, double s) {
  Tape& t = *a.tape();
  int ia = a.id();
  Mat out = a.value().array() + s;
  return t.push(std::move(out), {a}, [ia](Tape& t, int self) { t.grad(ia) += t.grad_of(self); });
}

Var scale_by(Var a, Var s) {
  if (s.value().size() != 1) throw ShapeError("scale_by: scale must be 1x1");
  Tape& t = *a.tape();
  int ia = a.id(), is = s.id();
  return t.push(a.value() * s.scalar(), {a, s}, [ia, is](Tape& t, int self) {
    const Mat& g = t.grad_of(self);
    if (t.needs_grad(ia)) t.grad(ia) += g * t.value(is)(0, 0);
    if (t.needs_grad(is)) t.grad(is)(0, 0) += g.cwiseProduct(t.value(ia)).sum();
  });
}

Var matmul(Var a, Var b) {
  if (a.cols() != b.rows()) {
    std::ostringstream os;
    os << "matmul: inner dimension mismatch " << a.rows() << "x" << a.cols() << " * " << b.rows()
       << "x" << b.cols();
    throw ShapeError(os.str());
  }
  Tape& t = *a.tape();
  int ia = a.id(), ib = b.id();
  return t.push(a.value() * b.value(), {a, b}, [ia, ib](Tape& t, int self) {
    const Mat& g = t.grad_of(self);
    if (t.needs_grad(ia)) t.grad(ia).noalias() += g * t.value(ib).transpose();
    if (t.needs_grad(ib)) t.grad(ib).noalias() += t.value(ia).transpose() * g;
  });
}

Var matmul_nt(Var a, Var b) {
  if (a.cols() != b.cols()) throw ShapeError("matmul_nt: column count mismatch");
  Tape& t = *a.tape();
  int ia = a.id(), ib = b.id();
  return t.push(a.value() * b.value().transpose(), {a, b}, [ia, ib](Tape& t, int self) {
    const Mat& g = t.grad_of(self);
    if (t.needs_grad(ia)) t.grad(ia).noalias() += g * t.value(ib);
    if (t.needs_grad(ib)) t.grad(ib).noalias() += g.transpose() * t.value(ia);
  });
}

Var add_rowvec(Var a, Var row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw ShapeError("add_rowvec: row shape mismatch");
  Tape& t = *a.tape();
  int ia = a.id(), ir = row.id();
  Mat out = a.value().rowwise() + row.value().row(0);
  return t.push(std::move(out), {a, row}, [ia, ir](Tape& t, int self) {
    const Mat& g = t.grad_of(self);
    if (t.needs_grad(ia)) t.grad(ia) += g;
    if (t.needs_grad(ir)) t.grad(ir) += g.colwise().sum();
  });
}

Var mul_rowvec(Var a, Var row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw ShapeError("mul_rowvec: row shape mismatch");
  Tape& t = *a.tape();
  int ia = a.id(), ir = row.id();
  Mat out = a.value().array().rowwise() * row.value().row(0).array();
  return t.push(std::move(out), {a, row}, [ia, ir](Tape& t, int self) {
    const Mat& g = t.grad_of(self);
    if (t.needs_grad(ia)) t.grad(ia).array() += g.array().rowwise() * t.value(ir).row(0).array();
    if (t.needs_grad(ir)) t.grad(ir) += g.cwiseProduct(t.value(ia)).colwise().sum();
  });
}

Var sum(Var a) {
  Tape& t = *a.tape();
  int ia = a.id();
  Mat out(1, 1);
  out(0, 0) = a.value().sum();
  return t.push(std::move(out), {a}, [ia](Tape& t, int self) {
    t.grad(ia).array() += t.grad_of(self)(0, 0);
  });
}

Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  return scale(sum(a), 1.0 / n);
}

Var sigmoid(Var a) {
  Tape& t = *a.tape();
  int ia = a.id();
  Mat out = a.value().unaryExpr([](double x) {
    // Branch on sign so exp never overflows.
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
  });
  return t.push(std::move(out), {a}, [ia](Tape& t, int self) {
    const Mat& s = t.value(self);
    t.grad(ia).array() += t.grad_of(self).array() * s.array() * (1.0 - s.array());
  });
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace

Var gelu(Var a) {
  Tape& t = *a.tape();
  int ia = a.id();
  Mat out = a.value().unaryExpr([](double x) {
    return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x)));
  });
  return t.push(std::move(out), {a}, [ia](Tape& t, int self) {
    Mat d = t.value(ia).unaryExpr([](double x) {
      double u = kGeluC * (x + kGeluA * x * x * x);
      double th = std::tanh(u);
      double du = kGeluC * (1.0 + 3.0 * kGeluA * x * x);
      return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du;
    });
    t.grad(ia) += t.grad_of(self).cwiseProduct(d);
  });
}

Var relu(Var a) {
  Tape& t = *a.tape();
  int ia = a.id();
  Mat out = a.value().cwiseMax(0.0);
  return t.push(std::move(out), {a}, [ia](Tape& t, int self) {
    Mat d = (t.value(ia).array() > 0.0).cast<double>().matrix();
    t.grad(ia) += t.grad_of(self).cwiseProduct(d);
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  Tape& t = *parts[0].tape();
  const Eigen::Index rows = parts[0].rows();
  Eigen::Index cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw ShapeError("concat_cols: row count mismatch");
    cols += p.cols();
  }
  Mat out(rows, cols);
  std::vector<std::pair<int, Eigen::Index>> layout;
  Eigen::Index off = 0;
  for (const Var& p : parts) {
    out.middleCols(off, p.cols()) = p.value();
    layout.emplace_back(p.id(), off);
    off += p.cols();
  }
  return t.push(std::move(out), parts, [layout](Tape& t, int self) {
    const Mat& g = t.grad_of(self);
    for (auto [id, o] : layout) {
      if (t.needs_grad(id)) t.grad(id) += g.middleCols(o, t.value(id).cols());
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  Tape& t = *parts[0].tape();
  const Eigen::Index cols = parts[0].cols();
  Eigen::Index rows = 0;
  for (const Var& p : parts) {
    if (p.cols() != cols) throw ShapeError("concat_rows: column count mismatch");
    rows += p.rows();
  }
  Mat out(rows, cols);
  std::vector<std::pair<int, Eigen::Index>> layout;
  Eigen::Index off = 0;
  for (const Var& p : parts) {
    out.middleRows(off, p.rows()) = p.value();
    layout.emplace_back(p.id(), off);
    off += p.rows();
  }
  return t.push(std::move(out), parts, [layout](Tape& t, int self) {
    const Mat& g = t.grad_of(self);
    for (auto [id, o] : layout) {
      if (t.needs_grad(id)) t.grad(id) += g.middleRows(o, t.value(id).rows());
    }
  });
}

Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) throw ShapeError("slice_cols: out of range");
  Tape& t = *a.tape();
  int ia = a.id();
  Mat out = a.value().middleCols(start, count);
  return t.push(std::move(out), {a}, [ia, start, count](Tape& t, int self) {
    t.grad(ia).middleCols(start, count) += t.grad_of(self);
  });
}

Var slice_rows(Var a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) throw ShapeError("slice_rows: out of range");
  Tape& t = *a.tape();
  int ia = a.id();
  Mat out = a.value().middleRows(start, count);
  return t.push(std::move(out), {a}, [ia, start, count](Tape& t, int self) {
    t.grad(ia).middleRows(start, count) += t.grad_of(self);
  });
}

Var element(Var a, Eigen::Index r, Eigen::Index c) {
  if (r < 0 || c < 0 || r >= a.rows() || c >= a.cols()) throw ShapeError("element: out of range");
  Tape& t = *a.tape();
  int ia = a.id();
  Mat out(1, 1);
  out(0, 0) = a.value()(r, c);
  return t.push(std::move(out), {a}, [ia, r, c](Tape& t, int self) {
    t.grad(ia)(r, c) += t.grad_of(self)(0, 0);
  });
}

namespace {

// Shared backward for both softmax variants: dx = s * (g - sum(g*s)).
void softmax_backward(Tape& t, int in, int self) {
  const Mat& s = t.value(self);
  const Mat& g = t.grad_of(self);
  Mat& gi = t.grad(in);
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    double dot = g.row(r).dot(s.row(r));
    gi.row(r).array() += s.row(r).array() * (g.row(r).array() - dot);
  }
}

}  // namespace

Var softmax_rows(Var a) {
  Tape& t = *a.tape();
  int ia = a.id();
  const Mat& x = a.value();
  Mat out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    double mx = x.row(r).maxCoeff();
    out.row(r) = (x.row(r).array() - mx).exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  return t.push(std::move(out), {a}, [ia](Tape& t, int self) { softmax_backward(t, ia, self); });
}

Var masked_softmax_rows(Var a, const Mask& key_mask) {
  require_mask(a, key_mask, a.cols(), "masked_softmax_rows");
  if (count_valid(key_mask) == 0) throw ShapeError("masked_softmax_rows: no valid keys");
  Tape& t = *a.tape();
  int ia = a.id();
  const Mat& x = a.value();
  Mat out = Mat::Zero(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < x.cols(); ++c)
      if (key_mask[static_cast<std::size_t>(c)]) mx = std::max(mx, x(r, c));
    double z = 0.0;
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      if (!key_mask[static_cast<std::size_t>(c)]) continue;
      out(r, c) = std::exp(x(r, c) - mx);
      z += out(r, c);
    }
    out.row(r) /= z;
  }
  return t.push(std::move(out), {a}, [ia](Tape& t, int self) { softmax_backward(t, ia, self); });
}

Var layer_norm_rows(Var a, double eps) {
  Tape& t = *a.tape();
  int ia = a.id();
  const Mat& x = a.value();
  const Eigen::Index n = x.cols();
  Mat out(x.rows(), n);
  RowVec inv_std(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    double mu = x.row(r).mean();
    double var = (x.row(r).array() - mu).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    out.row(r) = (x.row(r).array() - mu) * inv_std(r);
  }
  return t.push(std::move(out), {a}, [ia, inv_std](Tape& t, int self) {
    const Mat& y = t.value(self);
    const Mat& g = t.grad_of(self);
    Mat& gi = t.grad(ia);
    const double n = static_cast<double>(y.cols());
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      double gm = g.row(r).mean();
      double gy = g.row(r).dot(y.row(r)) / n;
      gi.row(r).array() += inv_std(r) * (g.row(r).array() - gm - y.row(r).array() * gy);
    }
  });
}

Var l2_normalize_rows(Var a, double eps) {
  Tape& t = *a.tape();
  int ia = a.id();
  const Mat& x = a.value();
  Mat out(x.rows(), x.cols());
  RowVec norms(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    norms(r) = std::max(x.row(r).norm(), eps);
    out.row(r) = x.row(r) / norms(r);
  }
  return t.push(std::move(out), {a}, [ia, norms](Tape& t, int self) {
    const Mat& y = t.value(self);
    const Mat& g = t.grad_of(self);
    Mat& gi = t.grad(ia);
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      double gy = g.row(r).dot(y.row(r));
      gi.row(r) += (g.row(r) - y.row(r) * gy) / norms(r);
    }
  });
}

Var mask_rows(Var a, const Mask& mask) {
  require_mask(a, mask, a.rows(), "mask_rows");
  Tape& t = *a.tape();
  int ia = a.id();
  Mat out = a.value();
  for (Eigen::Index r = 0; r < out.rows(); ++r)
    if (!mask[static_cast<std::size_t>(r)]) out.row(r).setZero();
  return t.push(std::move(out), {a}, [ia, mask](Tape& t, int self) {
    const Mat& g = t.grad_of(self);
    Mat& gi = t.grad(ia);
    for (Eigen::Index r = 0; r < g.rows(); ++r)
      if (mask[static_cast<std::size_t>(r)]) gi.row(r) += g.row(r);
  });
}

Var masked_mean_rows(Var a, const Mask& mask) {
  require_mask(a, mask, a.rows(), "masked_mean_rows");
  const int n = count_valid(mask);
  if (n == 0) throw ShapeError("masked_mean_rows: all positions masked");
  Tape& t = *a.tape();
  int ia = a.id();
  Mat out = Mat::Zero(1, a.cols());
  const Mat& x = a.value();
  for (Eigen::Index r = 0; r < x.rows(); ++r)
    if (mask[static_cast<std::size_t>(r)]) out.row(0) += x.row(r);
  out /= static_cast<double>(n);
  return t.push(std::move(out), {a}, [ia, mask, n](Tape& t, int self) {
    const Mat& g = t.grad_of(self);
    Mat& gi = t.grad(ia);
    for (Eigen::Index r = 0; r < gi.rows(); ++r)
      if (mask[static_cast<std::size_t>(r)]) gi.row(r) += g.row(0) / static_cast<double>(n);
  });
}

}  // namespace ad
}  // namespace mmfuse
