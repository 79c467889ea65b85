// Copyright 2026  The tse authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#ifndef TSE_TESTS_TEST_UTIL_HPP_
#define TSE_TESTS_TEST_UTIL_HPP_

#include <algorithm>
#include <cmath>
#include <vector>

#include "tse/ops.hpp"
#include "tse/random.hpp"
#include "tse/tensor.hpp"

namespace tse::testutil {

// Central finite differences against the analytic gradient of a scalar loss.
// make_loss must rebuild the graph from the live parameter tensors each call.
template <typename LossFn>
double max_rel_grad_error(std::vector<Tensor*> params, LossFn make_loss,
                          double h = 1e-5) {
  for (Tensor* p : params) p->zero_grad();
  Tensor loss = make_loss();
  loss.backward();
  std::vector<std::vector<double>> analytic;
  for (Tensor* p : params) {
    if (p->has_grad())
      analytic.emplace_back(p->grad().begin(), p->grad().end());
    else
      analytic.emplace_back(p->size(), 0.0);
  }
  double worst = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto vals = params[pi]->mutable_values();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double orig = vals[i];
      double lp, lm;
      {
        NoGradGuard ng;
        vals[i] = orig + h;
        lp = make_loss().at(0);
        vals[i] = orig - h;
        lm = make_loss().at(0);
      }
      vals[i] = orig;
      const double fd = (lp - lm) / (2.0 * h);
      const double an = analytic[pi][i];
      const double denom = std::max({std::abs(fd), std::abs(an), 1e-6});
      worst = std::max(worst, std::abs(fd - an) / denom);
    }
  }
  return worst;
}

inline double dot(const Tensor& a, const Tensor& b) {
  double acc = 0.0;
  for (std::int64_t i = 0; i < a.size(); ++i) acc += a.at(i) * b.at(i);
  return acc;
}

// Adjoint identity <L(dx), dy> == <dx, L^T(dy)> for an op that is linear in
// the probed argument. L^T(dy) is recovered by backpropagating dy.
template <typename OpFn>
double adjoint_gap(const Shape& in_shape, const Shape& out_shape, OpFn op,
                   Rng& rng) {
  Tensor dx = Tensor::randn(in_shape, rng, 1.0, /*requires_grad=*/true);
  Tensor dy = Tensor::randn(out_shape, rng);
  Tensor y = op(dx);
  const double lhs = dot(y, dy);
  Tensor loss = sum(mul(y, dy));
  loss.backward();
  double rhs = 0.0;
  for (std::int64_t i = 0; i < dx.size(); ++i) rhs += dx.at(i) * dx.grad_at(i);
  return std::abs(lhs - rhs);
}

}  // namespace tse::testutil

#endif  // TSE_TESTS_TEST_UTIL_HPP_
