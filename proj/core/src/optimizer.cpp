#include "mmfuse/optimizer.hpp"

#include <cmath>

namespace mmfuse {

AdamW::AdamW(ParamList params, AdamWOptions opts) : params_(std::move(params)), opts_(opts) {
  for (auto* p : params_) {
    if (p->m.rows() != p->value.rows() || p->m.cols() != p->value.cols()) p->m = Mat::Zero(p->value.rows(), p->value.cols());
    if (p->v.rows() != p->value.rows() || p->v.cols() != p->value.cols()) p->v = Mat::Zero(p->value.rows(), p->value.cols());
    if (p->grad.rows() != p->value.rows() || p->grad.cols() != p->value.cols()) p->zero_grad();
  }
}

void AdamW::step(double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
  for (auto* p : params_) {
    p->m = opts_.beta1 * p->m + (1.0 - opts_.beta1) * p->grad;
    p->v = opts_.beta2 * p->v + (1.0 - opts_.beta2) * p->grad.cwiseProduct(p->grad);
    Mat update = (p->m / bc1).array() / ((p->v / bc2).array().sqrt() + opts_.eps);
    if (p->decay && opts_.weight_decay != 0.0) update += opts_.weight_decay * p->value;
    p->value -= lr * update;
  }
}

void AdamW::zero_grad() {
  for (auto* p : params_) p->zero_grad();
}

}  // namespace mmfuse
