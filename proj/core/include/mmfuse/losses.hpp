#pragma once

#include "mmfuse/autodiff.hpp"

#include <span>
#include <vector>

namespace mmfuse {

// log(1 + e^x) without overflow.
double softplus(double x);

// Binary focal loss on a raw logit:
//   -w_t * (1 - p_t)^gamma * ln(p_t),  p = sigmoid(logit), p_t = p or 1 - p.
// Evaluated through softplus so saturated logits stay finite.
double focal_loss(double logit, int target, double gamma, double class_weight = 1.0);
// d focal_loss / d logit.
double focal_loss_grad(double logit, int target, double gamma, double class_weight = 1.0);

// Binary cross-entropy on a logit (reference for gamma = 0).
double binary_cross_entropy(double logit, int target);

// Mean focal loss over a B x 1 logit column. class_weights may be empty
// (all ones) or hold {w_0, w_1}.
ad::Var focal_loss(ad::Var logits, const std::vector<int>& targets, double gamma,
                   std::span<const double> class_weights = {});

// Mean of -w_y * log_softmax(logits)_y over rows. class_weights may be
// empty.
double cross_entropy(const Mat& logits, const std::vector<int>& labels, std::span<const double> class_weights = {});
ad::Var cross_entropy(ad::Var logits, const std::vector<int>& labels, std::span<const double> class_weights = {});

}  // namespace mmfuse
