#pragma once

#include "mmfuse/autodiff.hpp"

namespace mmfuse {

struct AdamWOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

// Adam with decoupled weight decay:
//   theta <- theta - lr * (m_hat / (sqrt(v_hat) + eps) + wd * theta)
// Decay applies only to parameters flagged `decay`.
class AdamW {
 public:
  explicit AdamW(ParamList params, AdamWOptions opts = {});

  void step(double lr);
  void zero_grad();
  long long steps() const { return t_; }
  const ParamList& parameters() const { return params_; }

 private:
  ParamList params_;
  AdamWOptions opts_;
  long long t_ = 0;
};

}  // namespace mmfuse
