// Copyright 2026  The tse authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#ifndef TSE_ADAPTATION_HPP_
#define TSE_ADAPTATION_HPP_

#include <cmath>
#include <string>
#include <utility>

#include "tse/ops.hpp"
#include "tse/tensor.hpp"

namespace tse {

// Attention-based scaling adaptation settings. With pooling disabled the
// attention runs over every frame of the mixture embedding.
struct AsaConfig {
  enum class Pooling { mean, none };

  int pool_size = 20;       // M, frames averaged per attention unit
  bool residual = true;     // add the repeated speaker vector to the bias
  bool sqrt_scale = false;  // scale the bias matrix by sqrt(N) (MTL runs)
  Pooling pooling = Pooling::mean;

  int effective_pool() const {
    return pooling == Pooling::none ? 1 : pool_size;
  }
};

namespace detail {
inline void check_adaptation_shapes(const Tensor& y, const Tensor& e,
                                    const char* who) {
  if (y.ndim() != 2)
    throw ShapeError(std::string(who) + ": mixture embedding must be [N x T], got " +
                     shape_str(y.shape()));
  if (e.ndim() != 2 || e.dim(1) != 1)
    throw ShapeError(std::string(who) + ": speaker embedding must be [N x 1], got " +
                     shape_str(e.shape()));
  if (e.dim(0) != y.dim(0))
    throw ShapeError(std::string(who) + ": embedding dimension mismatch, " +
                     shape_str(y.shape()) + " vs " + shape_str(e.shape()));
}
}  // namespace detail

// Baseline scaling adaptation: multiply every frame of the mixture embedding
// by the repeated speaker vector. Uses no learnable parameters.
inline Tensor scaling_adapt(const Tensor& y, const Tensor& e) {
  detail::check_adaptation_shapes(y, e, "scaling_adapt");
  return mul(y, e);
}

struct AsaAttention {
  Tensor weights;      // w, [1 x T_m]
  Tensor bias_matrix;  // B, [N x T_m], rank one
};

// Vector-matrix attention between the speaker vector and the (pooled)
// mixture embedding: d = e^T U, w = softmax(d), B = e w. The optional
// sqrt(N) factor is applied to B before any residual.
inline AsaAttention asa_attention(const Tensor& u, const Tensor& e,
                                  bool sqrt_scale = false) {
  detail::check_adaptation_shapes(u, e, "asa_attention");
  Tensor d = matmul(transpose(e), u);
  Tensor w = softmax(d);
  Tensor b = matmul(e, w);
  if (sqrt_scale) b = scale(b, std::sqrt(static_cast<double>(e.dim(0))));
  return {std::move(w), std::move(b)};
}

struct AsaResult {
  Tensor output;   // Y ⊙ E, [N x T]
  Tensor weights;  // attention weights, exposed for diagnostics
};

// Full ASA transform: pool, attend, add the residual speaker bias, nearest
// upsample back to the frame grid, then scale the mixture embedding.
// Differentiable end to end; introduces no learnable parameters.
inline AsaResult asa_forward(const Tensor& y, const Tensor& e,
                             const AsaConfig& cfg = {}) {
  detail::check_adaptation_shapes(y, e, "asa_forward");
  if (cfg.pool_size < 1)
    throw std::invalid_argument("asa_forward: pool size must be >= 1");
  const int t_frames = y.dim(1);
  const int m = cfg.effective_pool();
  Tensor u = m == 1 ? y : mean_pool1d(y, m);
  AsaAttention att = asa_attention(u, e, cfg.sqrt_scale);
  Tensor o = cfg.residual ? add(att.bias_matrix, e) : att.bias_matrix;
  Tensor ups = m == 1 ? o : nearest_upsample1d(o, m, t_frames);
  return {mul(y, ups), std::move(att.weights)};
}

// Shannon entropy of an attention weight vector, nats; diagnostic for how
// sparse the softmax distribution is.
inline double attention_entropy(const Tensor& w) {
  double total = 0.0;
  for (double v : w.values()) {
    if (v < -1e-12)
      throw std::invalid_argument("attention_entropy: negative weight");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-6)
    throw std::invalid_argument(
        "attention_entropy: weights sum to " + std::to_string(total) +
        ", not a probability vector");
  double h = 0.0;
  for (double v : w.values())
    if (v > 0.0) h -= v * std::log(v);
  return h;
}

}  // namespace tse

#endif  // TSE_ADAPTATION_HPP_
