#pragma once

// Central finite-difference verification of tape gradients.

#include "mmfuse/autodiff.hpp"

#include <functional>
#include <string>
#include <vector>

namespace mmfuse {

// |a - n| / max(|a|, |n|, 1e-8)
double relative_error(double analytic, double numeric);

struct GradCheckGroup {
  std::string name;
  std::size_t coordinates = 0;
  double max_rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckGroup> groups;
  double max_rel_error = 0.0;

  bool passed(double tolerance = 1e-4) const { return max_rel_error <= tolerance; }
};

// Builds a fresh forward pass on the given tape and returns a 1x1 loss.
using LossBuilder = std::function<ad::Var(ad::Tape&)>;

struct GradCheckOptions {
  double eps = 1e-5;
  // Multiplies the analytic gradient before comparison; 2.0 is the
  // negative control that must be detected.
  double analytic_scale = 1.0;
};

// Compares d loss / d p for every coordinate of every parameter against
// (f(p + eps) - f(p - eps)) / (2 eps). Parameter values are restored.
GradCheckReport grad_check(const LossBuilder& loss, const ParamList& params, const GradCheckOptions& opts = {});

}  // namespace mmfuse
