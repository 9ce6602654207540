#include "mmfuse/losses.hpp"

#include <cmath>

namespace mmfuse {

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

namespace {

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void check_target(int target) {
  if (target != 0 && target != 1) throw ConfigError("binary target must be 0 or 1, got " + std::to_string(target));
}

double weight_for(std::span<const double> w, int cls) {
  if (w.empty()) return 1.0;
  if (cls < 0 || static_cast<std::size_t>(cls) >= w.size()) throw ConfigError("class weight missing for class " + std::to_string(cls));
  return w[static_cast<std::size_t>(cls)];
}

}  // namespace

// With z = logit for target 1 and -logit for target 0:
//   ln p_t = -softplus(-z),  ln(1 - p_t) = -softplus(z).
double focal_loss(double logit, int target, double gamma, double class_weight) {
  check_target(target);
  const double z = target == 1 ? logit : -logit;
  const double modulator = gamma == 0.0 ? 1.0 : std::exp(-gamma * softplus(z));
  return class_weight * modulator * softplus(-z);
}

double focal_loss_grad(double logit, int target, double gamma, double class_weight) {
  check_target(target);
  const double sign = target == 1 ? 1.0 : -1.0;
  const double z = sign * logit;
  const double p = stable_sigmoid(z);   // p_t
  const double q = stable_sigmoid(-z);  // 1 - p_t
  const double modulator = gamma == 0.0 ? 1.0 : std::exp(-gamma * softplus(z));
  const double dz = -gamma * p * modulator * softplus(-z) - modulator * q;
  return class_weight * sign * dz;
}

double binary_cross_entropy(double logit, int target) {
  check_target(target);
  return target == 1 ? softplus(-logit) : softplus(logit);
}

ad::Var focal_loss(ad::Var logits, const std::vector<int>& targets, double gamma, std::span<const double> class_weights) {
  if (logits.cols() != 1 || logits.rows() != static_cast<Eigen::Index>(targets.size()))
    throw ShapeError("focal_loss: logits must be B x 1 with B targets");
  if (gamma < 0.0) throw ConfigError("focal gamma must be >= 0");
  const auto B = logits.rows();
  Mat out(1, 1);
  Mat grad(B, 1);
  double total = 0.0;
  for (Eigen::Index b = 0; b < B; ++b) {
    const int y = targets[static_cast<std::size_t>(b)];
    const double w = weight_for(class_weights, y);
    const double z = logits.value()(b, 0);
    total += focal_loss(z, y, gamma, w);
    grad(b, 0) = focal_loss_grad(z, y, gamma, w) / static_cast<double>(B);
  }
  out(0, 0) = total / static_cast<double>(B);
  ad::Tape& t = *logits.tape();
  const int in = logits.id();
  return t.push(std::move(out), {logits}, [in, grad](ad::Tape& t, int self) {
    t.grad(in) += grad * t.grad_of(self)(0, 0);
  });
}

namespace {

// Row-wise log-softmax and softmax.
void log_softmax(const Mat& x, Mat& logp, Mat& p) {
  logp.resize(x.rows(), x.cols());
  p.resize(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mx = x.row(r).maxCoeff();
    const double lse = mx + std::log((x.row(r).array() - mx).exp().sum());
    logp.row(r) = x.row(r).array() - lse;
    p.row(r) = logp.row(r).array().exp();
  }
}

void check_labels(const Mat& logits, const std::vector<int>& labels) {
  if (logits.rows() != static_cast<Eigen::Index>(labels.size())) throw ShapeError("cross_entropy: label count mismatch");
  for (int y : labels)
    if (y < 0 || y >= logits.cols())
      throw ConfigError("cross_entropy: label " + std::to_string(y) + " outside [0, " + std::to_string(logits.cols()) + ")");
}

}  // namespace

double cross_entropy(const Mat& logits, const std::vector<int>& labels, std::span<const double> class_weights) {
  check_labels(logits, labels);
  Mat logp, p;
  log_softmax(logits, logp, p);
  double total = 0.0;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const int y = labels[static_cast<std::size_t>(r)];
    total -= weight_for(class_weights, y) * logp(r, y);
  }
  return total / static_cast<double>(logits.rows());
}

ad::Var cross_entropy(ad::Var logits, const std::vector<int>& labels, std::span<const double> class_weights) {
  check_labels(logits.value(), labels);
  Mat logp, p;
  log_softmax(logits.value(), logp, p);
  const auto B = logits.rows();
  Mat grad = p;
  double total = 0.0;
  for (Eigen::Index r = 0; r < B; ++r) {
    const int y = labels[static_cast<std::size_t>(r)];
    const double w = weight_for(class_weights, y);
    total -= w * logp(r, y);
    grad(r, y) -= 1.0;
    grad.row(r) *= w / static_cast<double>(B);
  }
  Mat out(1, 1);
  out(0, 0) = total / static_cast<double>(B);
  ad::Tape& t = *logits.tape();
  const int in = logits.id();
  return t.push(std::move(out), {logits}, [in, grad](ad::Tape& t, int self) {
    t.grad(in) += grad * t.grad_of(self)(0, 0);
  });
}

}  // namespace mmfuse
