// Copyright 2026  The tse authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#ifndef TSE_LOSSES_HPP_
#define TSE_LOSSES_HPP_

#include <cmath>
#include <utility>

#include "tse/ops.hpp"
#include "tse/tensor.hpp"

namespace tse {

// Differentiable negative SiSDR, unclamped. The 1e-8 guard keeps both the
// projection and the error term finite at the exact-match and
// exactly-orthogonal extremes.
inline Tensor sisdr_loss(const Tensor& estimate, const Tensor& reference) {
  if (estimate.shape() != reference.shape())
    throw std::invalid_argument("sisdr_loss: shape mismatch");
  const double inv_n = 1.0 / static_cast<double>(estimate.size());
  Tensor est_c = elementwise(estimate, scale(sum(estimate), inv_n), EwOp::sub);
  Tensor ref_c = elementwise(reference, scale(sum(reference), inv_n), EwOp::sub);
  Tensor ref_energy = sum(mul(ref_c, ref_c));
  if (!(ref_energy.at(0) > 0.0))
    throw std::invalid_argument("sisdr_loss: reference has zero energy");
  Tensor gain = div(sum(mul(est_c, ref_c)), ref_energy);
  Tensor target = elementwise(ref_c, gain, EwOp::mul);
  Tensor err = sub(est_c, target);
  Tensor num = add_const(sum(mul(target, target)), 1e-8);
  Tensor den = add_const(sum(mul(err, err)), 1e-8);
  return scale(sub(log_(num), log_(den)), -10.0 / std::log(10.0));
}

// One training objective evaluation; the scalar graph node plus the
// bookkeeping the logs and reports need.
struct LossReport {
  Tensor total;       // scalar, backward() entry point
  double total_value = 0.0;
  double sisdr_term = 0.0;  // negated SiSDR, dB
  double ce_term = 0.0;     // nats; stays 0 when the CE path is skipped
  double alpha = 0.0;
};

// Multi-task objective: -SiSDR plus alpha times speaker cross-entropy.
// alpha = 0 is SiSDR-only training and must not evaluate the CE path.
inline LossReport mtl_loss(const Tensor& estimate, const Tensor& reference,
                           const Tensor& logits, int label, double alpha) {
  if (alpha < 0.0) throw std::invalid_argument("mtl_loss: alpha must be >= 0");
  LossReport report;
  report.alpha = alpha;
  Tensor si = sisdr_loss(estimate, reference);
  report.sisdr_term = si.at(0);
  if (alpha == 0.0) {
    report.total = std::move(si);
    report.total_value = report.sisdr_term;
    return report;
  }
  if (!logits.defined())
    throw std::invalid_argument("mtl_loss: alpha > 0 requires logits");
  Tensor ce = cross_entropy_with_logits(logits, label);
  report.ce_term = ce.at(0);
  report.total = add(si, scale(ce, alpha));
  report.total_value = report.total.at(0);
  return report;
}

}  // namespace tse

#endif  // TSE_LOSSES_HPP_
