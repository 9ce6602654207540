#include "mmfuse/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace mmfuse {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

namespace {

double evaluate(const LossBuilder& loss) {
  ad::Tape tape(false);
  const double v = loss(tape).scalar();
  if (!std::isfinite(v)) throw NumericError("grad_check: loss is not finite");
  return v;
}

}  // namespace

GradCheckReport grad_check(const LossBuilder& loss, const ParamList& params, const GradCheckOptions& opts) {
  for (auto* p : params) p->zero_grad();
  {
    ad::Tape tape(true);
    ad::Var out = loss(tape);
    if (!std::isfinite(out.scalar())) throw NumericError("grad_check: loss is not finite");
    tape.backward(out);
  }

  GradCheckReport report;
  for (auto* p : params) {
    GradCheckGroup g;
    g.name = p->name;
    const Mat analytic = p->grad * opts.analytic_scale;
    if (!analytic.allFinite()) throw NumericError("grad_check: non-finite analytic gradient in " + p->name);
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      double& x = p->value.data()[i];
      const double orig = x;
      x = orig + opts.eps;
      const double plus = evaluate(loss);
      x = orig - opts.eps;
      const double minus = evaluate(loss);
      x = orig;
      const double numeric = (plus - minus) / (2.0 * opts.eps);
      g.max_rel_error = std::max(g.max_rel_error, relative_error(analytic.data()[i], numeric));
      ++g.coordinates;
    }
    report.max_rel_error = std::max(report.max_rel_error, g.max_rel_error);
    report.groups.push_back(std::move(g));
  }
  for (auto* p : params) p->zero_grad();
  return report;
}

}  // namespace mmfuse
