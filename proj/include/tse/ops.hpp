// Copyright 2026  The tse authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#ifndef TSE_OPS_HPP_
#define TSE_OPS_HPP_

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <vector>

#include "tse/tensor.hpp"

namespace tse {

namespace detail {

// Reductions with a fixed 8-way-unrolled summation order; independent
// accumulators let the compiler pipeline the adds, and the order never
// depends on anything but n, so results stay bit-reproducible.
inline double dot_n(const double* __restrict a, const double* __restrict b,
                    int n) {
  double s0 = 0, s1 = 0, s2 = 0, s3 = 0, s4 = 0, s5 = 0, s6 = 0, s7 = 0;
  int i = 0;
  for (; i + 8 <= n; i += 8) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
    s4 += a[i + 4] * b[i + 4];
    s5 += a[i + 5] * b[i + 5];
    s6 += a[i + 6] * b[i + 6];
    s7 += a[i + 7] * b[i + 7];
  }
  double s = ((s0 + s1) + (s2 + s3)) + ((s4 + s5) + (s6 + s7));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

inline double sum_n(const double* __restrict a, int n) {
  double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
  int i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i];
    s1 += a[i + 1];
    s2 += a[i + 2];
    s3 += a[i + 3];
  }
  double s = (s0 + s1) + (s2 + s3);
  for (; i < n; ++i) s += a[i];
  return s;
}

inline double dot_centered(const double* __restrict a,
                           const double* __restrict b, double shift, int n) {
  double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
  int i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * (b[i] - shift);
    s1 += a[i + 1] * (b[i + 1] - shift);
    s2 += a[i + 2] * (b[i + 2] - shift);
    s3 += a[i + 3] * (b[i + 3] - shift);
  }
  double s = (s0 + s1) + (s2 + s3);
  for (; i < n; ++i) s += a[i] * (b[i] - shift);
  return s;
}

inline Tensor make_op_output(Shape shape,
                             std::initializer_list<Tensor> parents) {
  Tensor out = Tensor::zeros(shape);
  bool rg = false;
  for (const Tensor& p : parents) rg = rg || p.requires_grad();
  if (rg && grad_mode()) {
    out.node->requires_grad = true;
    for (const Tensor& p : parents) out.node->parents.push_back(p.node);
  }
  return out;
}

inline void accumulate(const std::shared_ptr<TensorNode>& target,
                       const double* src) {
  if (!target->requires_grad) return;
  target->ensure_grad();
  double* g = target->grad.data();
  const std::size_t n = target->value.size();
  for (std::size_t i = 0; i < n; ++i) g[i] += src[i];
}

}  // namespace detail

// Operation counters used by the cost benchmark and the loss-path tests.
struct OpCounters {
  static std::atomic<std::int64_t>& cross_entropy_evals() {
    static std::atomic<std::int64_t> n{0};
    return n;
  }
};

// ---------------------------------------------------------------------------
// Convolutions
// ---------------------------------------------------------------------------

// Cross-correlation without padding: input [C_in x L], kernel
// [C_out x C_in x K], output [C_out x T] with T = (L - d*(K-1) - 1)/stride + 1.
inline Tensor conv1d(const Tensor& input, const Tensor& kernel, int stride,
                     int dilation = 1) {
  if (input.ndim() != 2 || kernel.ndim() != 3)
    throw ShapeError("conv1d expects input [C_in x L], kernel "
                     "[C_out x C_in x K], got " +
                     shape_str(input.shape()) + " and " +
                     shape_str(kernel.shape()));
  if (stride < 1) throw std::invalid_argument("conv1d: stride must be >= 1");
  if (dilation < 1)
    throw std::invalid_argument("conv1d: dilation must be >= 1");
  const int c_in = input.dim(0), len = input.dim(1);
  const int c_out = kernel.dim(0), k_size = kernel.dim(2);
  if (kernel.dim(1) != c_in)
    throw ShapeError("conv1d: kernel expects " + std::to_string(kernel.dim(1)) +
                     " input channels, input has " + std::to_string(c_in));
  const int span = dilation * (k_size - 1) + 1;
  if (len < span)
    throw ShapeError("conv1d: input length " + std::to_string(len) +
                     " shorter than kernel span " + std::to_string(span));
  const int t_out = (len - span) / stride + 1;

  Tensor out = detail::make_op_output({c_out, t_out}, {input, kernel});
  const double* in = input.values().data();
  const double* kw = kernel.values().data();
  double* o = out.node->value.data();
  for (int co = 0; co < c_out; ++co) {
    double* __restrict orow = o + static_cast<std::size_t>(co) * t_out;
    for (int ci = 0; ci < c_in; ++ci) {
      const double* irow = in + static_cast<std::size_t>(ci) * len;
      const double* krow =
          kw + (static_cast<std::size_t>(co) * c_in + ci) * k_size;
      if (stride == 1) {
        for (int k = 0; k < k_size; ++k) {
          const double w = krow[k];
          const double* __restrict shifted =
              irow + static_cast<std::size_t>(k) * dilation;
          for (int t = 0; t < t_out; ++t) orow[t] += w * shifted[t];
        }
      } else {
        for (int t = 0; t < t_out; ++t) {
          const double* window = irow + static_cast<std::size_t>(t) * stride;
          double acc = 0.0;
          for (int k = 0; k < k_size; ++k)
            acc += krow[k] * window[static_cast<std::size_t>(k) * dilation];
          orow[t] += acc;
        }
      }
    }
  }
  if (out.requires_grad()) {
    auto in_node = input.node;
    auto ker_node = kernel.node;
    out.node->backward_fn = [in_node, ker_node, c_in, c_out, len, k_size,
                             stride, dilation, t_out](TensorNode& self) {
      const double* g = self.grad.data();
      const double* in = in_node->value.data();
      const double* kw = ker_node->value.data();
      if (in_node->requires_grad) {
        in_node->ensure_grad();
        double* gi = in_node->grad.data();
        for (int co = 0; co < c_out; ++co) {
          const double* grow = g + static_cast<std::size_t>(co) * t_out;
          for (int ci = 0; ci < c_in; ++ci) {
            double* girow = gi + static_cast<std::size_t>(ci) * len;
            const double* krow =
                kw + (static_cast<std::size_t>(co) * c_in + ci) * k_size;
            if (stride == 1) {
              for (int k = 0; k < k_size; ++k) {
                const double w = krow[k];
                double* __restrict shifted =
                    girow + static_cast<std::size_t>(k) * dilation;
                const double* __restrict gr = grow;
                for (int t = 0; t < t_out; ++t) shifted[t] += w * gr[t];
              }
            } else {
              for (int t = 0; t < t_out; ++t)
                for (int k = 0; k < k_size; ++k)
                  girow[t * stride + k * dilation] += krow[k] * grow[t];
            }
          }
        }
      }
      if (ker_node->requires_grad) {
        ker_node->ensure_grad();
        double* gk = ker_node->grad.data();
        for (int co = 0; co < c_out; ++co) {
          const double* grow = g + static_cast<std::size_t>(co) * t_out;
          for (int ci = 0; ci < c_in; ++ci) {
            const double* irow = in + static_cast<std::size_t>(ci) * len;
            double* gkrow =
                gk + (static_cast<std::size_t>(co) * c_in + ci) * k_size;
            if (stride == 1) {
              for (int k = 0; k < k_size; ++k)
                gkrow[k] += detail::dot_n(
                    grow, irow + static_cast<std::size_t>(k) * dilation,
                    t_out);
            } else {
              for (int k = 0; k < k_size; ++k) {
                double acc = 0.0;
                for (int t = 0; t < t_out; ++t)
                  acc += grow[t] * irow[t * stride + k * dilation];
                gkrow[k] += acc;
              }
            }
          }
        }
      }
    };
  }
  return out;
}

// Exact adjoint of conv1d with the same kernel layout read as
// [C_in x C_out x K]: input [C_in x T] -> output [C_out x L],
// L = (T-1)*stride + K.
inline Tensor conv_transpose1d(const Tensor& input, const Tensor& kernel,
                               int stride) {
  if (input.ndim() != 2 || kernel.ndim() != 3)
    throw ShapeError("conv_transpose1d expects input [C_in x T], kernel "
                     "[C_in x C_out x K], got " +
                     shape_str(input.shape()) + " and " +
                     shape_str(kernel.shape()));
  if (stride < 1)
    throw std::invalid_argument("conv_transpose1d: stride must be >= 1");
  const int c_in = input.dim(0), t_in = input.dim(1);
  const int c_out = kernel.dim(1), k_size = kernel.dim(2);
  if (kernel.dim(0) != c_in)
    throw ShapeError("conv_transpose1d: kernel expects " +
                     std::to_string(kernel.dim(0)) + " input channels, input has " +
                     std::to_string(c_in));
  const int len = (t_in - 1) * stride + k_size;

  Tensor out = detail::make_op_output({c_out, len}, {input, kernel});
  const double* in = input.values().data();
  const double* kw = kernel.values().data();
  double* o = out.node->value.data();
  for (int ci = 0; ci < c_in; ++ci) {
    const double* irow = in + static_cast<std::size_t>(ci) * t_in;
    for (int co = 0; co < c_out; ++co) {
      double* orow = o + static_cast<std::size_t>(co) * len;
      const double* krow =
          kw + (static_cast<std::size_t>(ci) * c_out + co) * k_size;
      for (int t = 0; t < t_in; ++t) {
        const double v = irow[t];
        double* dst = orow + static_cast<std::size_t>(t) * stride;
        for (int k = 0; k < k_size; ++k) dst[k] += v * krow[k];
      }
    }
  }
  if (out.requires_grad()) {
    auto in_node = input.node;
    auto ker_node = kernel.node;
    out.node->backward_fn = [in_node, ker_node, c_in, c_out, t_in, k_size,
                             stride, len](TensorNode& self) {
      const double* g = self.grad.data();
      const double* in = in_node->value.data();
      const double* kw = ker_node->value.data();
      if (in_node->requires_grad) {
        in_node->ensure_grad();
        double* gi = in_node->grad.data();
        for (int ci = 0; ci < c_in; ++ci) {
          double* girow = gi + static_cast<std::size_t>(ci) * t_in;
          for (int co = 0; co < c_out; ++co) {
            const double* grow = g + static_cast<std::size_t>(co) * len;
            const double* krow =
                kw + (static_cast<std::size_t>(ci) * c_out + co) * k_size;
            for (int t = 0; t < t_in; ++t) {
              const double* src = grow + static_cast<std::size_t>(t) * stride;
              double acc = 0.0;
              for (int k = 0; k < k_size; ++k) acc += src[k] * krow[k];
              girow[t] += acc;
            }
          }
        }
      }
      if (ker_node->requires_grad) {
        ker_node->ensure_grad();
        double* gk = ker_node->grad.data();
        for (int ci = 0; ci < c_in; ++ci) {
          const double* irow = in + static_cast<std::size_t>(ci) * t_in;
          for (int co = 0; co < c_out; ++co) {
            const double* grow = g + static_cast<std::size_t>(co) * len;
            double* gkrow =
                gk + (static_cast<std::size_t>(ci) * c_out + co) * k_size;
            for (int t = 0; t < t_in; ++t) {
              const double v = irow[t];
              const double* src = grow + static_cast<std::size_t>(t) * stride;
              for (int k = 0; k < k_size; ++k) gkrow[k] += v * src[k];
            }
          }
        }
      }
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2)
    throw ShapeError("matmul expects two matrices, got " +
                     shape_str(a.shape()) + " and " + shape_str(b.shape()));
  const int p = a.dim(0), q = a.dim(1), r = b.dim(1);
  if (b.dim(0) != q)
    throw ShapeError("matmul: inner dimensions disagree, " +
                     shape_str(a.shape()) + " * " + shape_str(b.shape()));
  Tensor out = detail::make_op_output({p, r}, {a, b});
  const double* av = a.values().data();
  const double* bv = b.values().data();
  double* cv = out.node->value.data();
  for (int i = 0; i < p; ++i)
    for (int k = 0; k < q; ++k) {
      const double w = av[static_cast<std::size_t>(i) * q + k];
      const double* brow = bv + static_cast<std::size_t>(k) * r;
      double* crow = cv + static_cast<std::size_t>(i) * r;
      for (int j = 0; j < r; ++j) crow[j] += w * brow[j];
    }
  if (out.requires_grad()) {
    auto an = a.node;
    auto bn = b.node;
    out.node->backward_fn = [an, bn, p, q, r](TensorNode& self) {
      const double* g = self.grad.data();
      if (an->requires_grad) {
        an->ensure_grad();
        double* ga = an->grad.data();
        const double* bv = bn->value.data();
        for (int i = 0; i < p; ++i)
          for (int k = 0; k < q; ++k)
            ga[static_cast<std::size_t>(i) * q + k] += detail::dot_n(
                g + static_cast<std::size_t>(i) * r,
                bv + static_cast<std::size_t>(k) * r, r);
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        double* gb = bn->grad.data();
        const double* av = an->value.data();
        for (int k = 0; k < q; ++k)
          for (int i = 0; i < p; ++i) {
            const double w = av[static_cast<std::size_t>(i) * q + k];
            const double* grow = g + static_cast<std::size_t>(i) * r;
            double* gbrow = gb + static_cast<std::size_t>(k) * r;
            for (int j = 0; j < r; ++j) gbrow[j] += w * grow[j];
          }
      }
    };
  }
  return out;
}

inline Tensor transpose(const Tensor& x) {
  if (x.ndim() != 2)
    throw ShapeError("transpose expects a matrix, got " +
                     shape_str(x.shape()));
  const int p = x.dim(0), q = x.dim(1);
  Tensor out = detail::make_op_output({q, p}, {x});
  const double* xv = x.values().data();
  double* ov = out.node->value.data();
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < q; ++j)
      ov[static_cast<std::size_t>(j) * p + i] =
          xv[static_cast<std::size_t>(i) * q + j];
  if (out.requires_grad()) {
    auto xn = x.node;
    out.node->backward_fn = [xn, p, q](TensorNode& self) {
      if (!xn->requires_grad) return;
      xn->ensure_grad();
      const double* g = self.grad.data();
      double* gx = xn->grad.data();
      for (int j = 0; j < q; ++j)
        for (int i = 0; i < p; ++i)
          gx[static_cast<std::size_t>(i) * q + j] +=
              g[static_cast<std::size_t>(j) * p + i];
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// Elementwise and broadcasting
// ---------------------------------------------------------------------------

enum class EwOp { add, sub, mul, div };

namespace detail {
enum class Broadcast { none, column, scalar };

inline Broadcast broadcast_mode(const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return Broadcast::none;
  if (b.size() == 1) return Broadcast::scalar;
  if (a.ndim() == 2 && b.rows() == a.dim(0) && b.cols() == 1)
    return Broadcast::column;
  throw ShapeError("elementwise: incompatible shapes " + shape_str(a.shape()) +
                   " and " + shape_str(b.shape()));
}
}  // namespace detail

// Pointwise op; b may be a column vector broadcast across the columns of a,
// or a scalar broadcast over all of a.
inline Tensor elementwise(const Tensor& a, const Tensor& b, EwOp op) {
  const detail::Broadcast mode = detail::broadcast_mode(a, b);
  const int t_cols = a.cols();
  Tensor out = detail::make_op_output(a.shape(), {a, b});
  const double* av = a.values().data();
  const double* bv = b.values().data();
  double* ov = out.node->value.data();
  const std::size_t n = out.node->value.size();
  auto bidx = [mode, t_cols](std::size_t i) -> std::size_t {
    switch (mode) {
      case detail::Broadcast::none: return i;
      case detail::Broadcast::scalar: return 0;
      default: return i / t_cols;
    }
  };
  switch (op) {
    case EwOp::add:
      for (std::size_t i = 0; i < n; ++i) ov[i] = av[i] + bv[bidx(i)];
      break;
    case EwOp::sub:
      for (std::size_t i = 0; i < n; ++i) ov[i] = av[i] - bv[bidx(i)];
      break;
    case EwOp::mul:
      for (std::size_t i = 0; i < n; ++i) ov[i] = av[i] * bv[bidx(i)];
      break;
    case EwOp::div:
      for (std::size_t i = 0; i < n; ++i) ov[i] = av[i] / bv[bidx(i)];
      break;
  }
  if (out.requires_grad()) {
    auto an = a.node;
    auto bn = b.node;
    out.node->backward_fn = [an, bn, op, mode, t_cols, n](TensorNode& self) {
      const double* g = self.grad.data();
      const double* av = an->value.data();
      const double* bv = bn->value.data();
      auto bidx = [mode, t_cols](std::size_t i) -> std::size_t {
        switch (mode) {
          case detail::Broadcast::none: return i;
          case detail::Broadcast::scalar: return 0;
          default: return i / t_cols;
        }
      };
      if (an->requires_grad) {
        an->ensure_grad();
        double* ga = an->grad.data();
        switch (op) {
          case EwOp::add:
          case EwOp::sub:
            for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
            break;
          case EwOp::mul:
            for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * bv[bidx(i)];
            break;
          case EwOp::div:
            for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] / bv[bidx(i)];
            break;
        }
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        double* gb = bn->grad.data();
        for (std::size_t i = 0; i < n; ++i) {
          const std::size_t j = bidx(i);
          switch (op) {
            case EwOp::add: gb[j] += g[i]; break;
            case EwOp::sub: gb[j] -= g[i]; break;
            case EwOp::mul: gb[j] += g[i] * av[i]; break;
            case EwOp::div:
              gb[j] -= g[i] * av[i] / (bv[j] * bv[j]);
              break;
          }
        }
      }
    };
  }
  return out;
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  return elementwise(a, b, EwOp::add);
}
inline Tensor sub(const Tensor& a, const Tensor& b) {
  return elementwise(a, b, EwOp::sub);
}
inline Tensor mul(const Tensor& a, const Tensor& b) {
  return elementwise(a, b, EwOp::mul);
}
inline Tensor div(const Tensor& a, const Tensor& b) {
  return elementwise(a, b, EwOp::div);
}

// Multiply by a compile-time constant (not a graph input).
inline Tensor scale(const Tensor& x, double c) {
  Tensor out = detail::make_op_output(x.shape(), {x});
  const double* xv = x.values().data();
  double* ov = out.node->value.data();
  const std::size_t n = out.node->value.size();
  for (std::size_t i = 0; i < n; ++i) ov[i] = c * xv[i];
  if (out.requires_grad()) {
    auto xn = x.node;
    out.node->backward_fn = [xn, c, n](TensorNode& self) {
      if (!xn->requires_grad) return;
      xn->ensure_grad();
      double* gx = xn->grad.data();
      const double* g = self.grad.data();
      for (std::size_t i = 0; i < n; ++i) gx[i] += c * g[i];
    };
  }
  return out;
}

inline Tensor add_const(const Tensor& x, double c) {
  Tensor out = detail::make_op_output(x.shape(), {x});
  const double* xv = x.values().data();
  double* ov = out.node->value.data();
  const std::size_t n = out.node->value.size();
  for (std::size_t i = 0; i < n; ++i) ov[i] = xv[i] + c;
  if (out.requires_grad()) {
    auto xn = x.node;
    out.node->backward_fn = [xn, n](TensorNode& self) {
      if (!xn->requires_grad) return;
      xn->ensure_grad();
      double* gx = xn->grad.data();
      const double* g = self.grad.data();
      for (std::size_t i = 0; i < n; ++i) gx[i] += g[i];
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// Softmax and entropy-adjacent ops
// ---------------------------------------------------------------------------

// Max-subtracted softmax over all entries; shape preserved.
inline Tensor softmax(const Tensor& v) {
  const std::size_t n = static_cast<std::size_t>(v.size());
  for (std::size_t i = 0; i < n; ++i)
    if (!std::isfinite(v.at(static_cast<std::int64_t>(i))))
      throw NumericError("softmax: non-finite input");
  Tensor out = detail::make_op_output(v.shape(), {v});
  const double* xv = v.values().data();
  double* ov = out.node->value.data();
  double m = xv[0];
  for (std::size_t i = 1; i < n; ++i) m = std::max(m, xv[i]);
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ov[i] = std::exp(xv[i] - m);
    z += ov[i];
  }
  for (std::size_t i = 0; i < n; ++i) ov[i] /= z;
  if (out.requires_grad()) {
    auto xn = v.node;
    out.node->backward_fn = [xn, n](TensorNode& self) {
      if (!xn->requires_grad) return;
      xn->ensure_grad();
      const double* w = self.value.data();
      const double* g = self.grad.data();
      double dot = 0.0;
      for (std::size_t i = 0; i < n; ++i) dot += w[i] * g[i];
      double* gx = xn->grad.data();
      for (std::size_t i = 0; i < n; ++i) gx[i] += w[i] * (g[i] - dot);
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// Pooling and upsampling over the time axis
// ---------------------------------------------------------------------------

// Averages each run of M columns; a ragged tail averages the remaining
// T mod M columns. Output width is ceil(T/M).
inline Tensor mean_pool1d(const Tensor& x, int m) {
  if (x.ndim() != 2)
    throw ShapeError("mean_pool1d expects a matrix, got " +
                     shape_str(x.shape()));
  if (m < 1) throw std::invalid_argument("mean_pool1d: M must be >= 1");
  const int rows = x.dim(0), t_in = x.dim(1);
  const int t_out = (t_in + m - 1) / m;
  Tensor out = detail::make_op_output({rows, t_out}, {x});
  const double* xv = x.values().data();
  double* ov = out.node->value.data();
  for (int g = 0; g < t_out; ++g) {
    const int lo = g * m;
    const int hi = std::min(lo + m, t_in);
    const double inv = 1.0 / (hi - lo);
    for (int r = 0; r < rows; ++r) {
      const double* row = xv + static_cast<std::size_t>(r) * t_in;
      double acc = 0.0;
      for (int c = lo; c < hi; ++c) acc += row[c];
      ov[static_cast<std::size_t>(r) * t_out + g] = acc * inv;
    }
  }
  if (out.requires_grad()) {
    auto xn = x.node;
    out.node->backward_fn = [xn, rows, t_in, t_out, m](TensorNode& self) {
      if (!xn->requires_grad) return;
      xn->ensure_grad();
      const double* g = self.grad.data();
      double* gx = xn->grad.data();
      for (int grp = 0; grp < t_out; ++grp) {
        const int lo = grp * m;
        const int hi = std::min(lo + m, t_in);
        const double inv = 1.0 / (hi - lo);
        for (int r = 0; r < rows; ++r) {
          const double gv =
              g[static_cast<std::size_t>(r) * t_out + grp] * inv;
          double* row = gx + static_cast<std::size_t>(r) * t_in;
          for (int c = lo; c < hi; ++c) row[c] += gv;
        }
      }
    };
  }
  return out;
}

// Inverse of mean_pool1d's shape contract: column j of the output copies
// pooled column floor(j/M), so every M-run is constant (ragged tail included).
inline Tensor nearest_upsample1d(const Tensor& x, int m, int t_out) {
  if (x.ndim() != 2)
    throw ShapeError("nearest_upsample1d expects a matrix, got " +
                     shape_str(x.shape()));
  if (m < 1 || t_out < 1)
    throw std::invalid_argument("nearest_upsample1d: M and T must be >= 1");
  const int rows = x.dim(0), t_in = x.dim(1);
  if (t_in != (t_out + m - 1) / m)
    throw std::invalid_argument(
        "nearest_upsample1d: inconsistent sizes, T_m=" + std::to_string(t_in) +
        " but ceil(T/M)=" + std::to_string((t_out + m - 1) / m));
  Tensor out = detail::make_op_output({rows, t_out}, {x});
  const double* xv = x.values().data();
  double* ov = out.node->value.data();
  for (int r = 0; r < rows; ++r) {
    const double* src = xv + static_cast<std::size_t>(r) * t_in;
    double* dst = ov + static_cast<std::size_t>(r) * t_out;
    for (int j = 0; j < t_out; ++j) dst[j] = src[j / m];
  }
  if (out.requires_grad()) {
    auto xn = x.node;
    out.node->backward_fn = [xn, rows, t_in, t_out, m](TensorNode& self) {
      if (!xn->requires_grad) return;
      xn->ensure_grad();
      const double* g = self.grad.data();
      double* gx = xn->grad.data();
      for (int r = 0; r < rows; ++r) {
        const double* grow = g + static_cast<std::size_t>(r) * t_out;
        double* dst = gx + static_cast<std::size_t>(r) * t_in;
        for (int j = 0; j < t_out; ++j) dst[j / m] += grow[j];
      }
    };
  }
  return out;
}

// General nearest-neighbour column resampling (used to align STFT-rate
// features with the encoder frame grid; no integer ratio assumed).
inline Tensor nearest_resample_cols(const Tensor& x, int t_out) {
  if (x.ndim() != 2)
    throw ShapeError("nearest_resample_cols expects a matrix, got " +
                     shape_str(x.shape()));
  if (t_out < 1)
    throw std::invalid_argument("nearest_resample_cols: T must be >= 1");
  const int rows = x.dim(0), t_in = x.dim(1);
  std::vector<int> src(t_out);
  for (int j = 0; j < t_out; ++j)
    src[j] = static_cast<int>((static_cast<std::int64_t>(j) * t_in) / t_out);
  Tensor out = detail::make_op_output({rows, t_out}, {x});
  const double* xv = x.values().data();
  double* ov = out.node->value.data();
  for (int r = 0; r < rows; ++r) {
    const double* s = xv + static_cast<std::size_t>(r) * t_in;
    double* d = ov + static_cast<std::size_t>(r) * t_out;
    for (int j = 0; j < t_out; ++j) d[j] = s[src[j]];
  }
  if (out.requires_grad()) {
    auto xn = x.node;
    out.node->backward_fn = [xn, rows, t_in, t_out,
                             src = std::move(src)](TensorNode& self) {
      if (!xn->requires_grad) return;
      xn->ensure_grad();
      const double* g = self.grad.data();
      double* gx = xn->grad.data();
      for (int r = 0; r < rows; ++r) {
        const double* grow = g + static_cast<std::size_t>(r) * t_out;
        double* dst = gx + static_cast<std::size_t>(r) * t_in;
        for (int j = 0; j < t_out; ++j) dst[src[j]] += grow[j];
      }
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// Shape plumbing
// ---------------------------------------------------------------------------

inline Tensor pad_cols(const Tensor& x, int left, int right) {
  if (x.ndim() != 2)
    throw ShapeError("pad_cols expects a matrix, got " + shape_str(x.shape()));
  if (left < 0 || right < 0)
    throw std::invalid_argument("pad_cols: negative padding");
  const int rows = x.dim(0), t_in = x.dim(1);
  const int t_out = left + t_in + right;
  Tensor out = detail::make_op_output({rows, t_out}, {x});
  const double* xv = x.values().data();
  double* ov = out.node->value.data();
  for (int r = 0; r < rows; ++r)
    std::copy_n(xv + static_cast<std::size_t>(r) * t_in, t_in,
                ov + static_cast<std::size_t>(r) * t_out + left);
  if (out.requires_grad()) {
    auto xn = x.node;
    out.node->backward_fn = [xn, rows, t_in, t_out, left](TensorNode& self) {
      if (!xn->requires_grad) return;
      xn->ensure_grad();
      const double* g = self.grad.data();
      double* gx = xn->grad.data();
      for (int r = 0; r < rows; ++r) {
        const double* grow = g + static_cast<std::size_t>(r) * t_out + left;
        double* dst = gx + static_cast<std::size_t>(r) * t_in;
        for (int c = 0; c < t_in; ++c) dst[c] += grow[c];
      }
    };
  }
  return out;
}

// Keeps the first t_out columns.
inline Tensor trim_cols(const Tensor& x, int t_out) {
  if (x.ndim() != 2)
    throw ShapeError("trim_cols expects a matrix, got " + shape_str(x.shape()));
  const int rows = x.dim(0), t_in = x.dim(1);
  if (t_out < 1 || t_out > t_in)
    throw std::invalid_argument("trim_cols: bad target width");
  Tensor out = detail::make_op_output({rows, t_out}, {x});
  const double* xv = x.values().data();
  double* ov = out.node->value.data();
  for (int r = 0; r < rows; ++r)
    std::copy_n(xv + static_cast<std::size_t>(r) * t_in, t_out,
                ov + static_cast<std::size_t>(r) * t_out);
  if (out.requires_grad()) {
    auto xn = x.node;
    out.node->backward_fn = [xn, rows, t_in, t_out](TensorNode& self) {
      if (!xn->requires_grad) return;
      xn->ensure_grad();
      const double* g = self.grad.data();
      double* gx = xn->grad.data();
      for (int r = 0; r < rows; ++r) {
        const double* grow = g + static_cast<std::size_t>(r) * t_out;
        double* dst = gx + static_cast<std::size_t>(r) * t_in;
        for (int c = 0; c < t_out; ++c) dst[c] += grow[c];
      }
    };
  }
  return out;
}

inline Tensor concat_rows(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(1))
    throw ShapeError("concat_rows: incompatible shapes " +
                     shape_str(a.shape()) + " and " + shape_str(b.shape()));
  const int ra = a.dim(0), rb = b.dim(0), t = a.dim(1);
  Tensor out = detail::make_op_output({ra + rb, t}, {a, b});
  double* ov = out.node->value.data();
  std::copy_n(a.values().data(), static_cast<std::size_t>(ra) * t, ov);
  std::copy_n(b.values().data(), static_cast<std::size_t>(rb) * t,
              ov + static_cast<std::size_t>(ra) * t);
  if (out.requires_grad()) {
    auto an = a.node;
    auto bn = b.node;
    out.node->backward_fn = [an, bn, ra, rb, t](TensorNode& self) {
      const double* g = self.grad.data();
      if (an->requires_grad) detail::accumulate(an, g);
      if (bn->requires_grad)
        detail::accumulate(bn, g + static_cast<std::size_t>(ra) * t);
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// Unary nonlinearities and scalar maps
// ---------------------------------------------------------------------------

namespace detail {
template <typename Fwd, typename Bwd>
Tensor unary_op(const Tensor& x, Fwd fwd, Bwd bwd_factor) {
  Tensor out = make_op_output(x.shape(), {x});
  const double* xv = x.values().data();
  double* ov = out.node->value.data();
  const std::size_t n = out.node->value.size();
  for (std::size_t i = 0; i < n; ++i) ov[i] = fwd(xv[i]);
  if (out.requires_grad()) {
    auto xn = x.node;
    out.node->backward_fn = [xn, n, bwd_factor](TensorNode& self) {
      if (!xn->requires_grad) return;
      xn->ensure_grad();
      const double* g = self.grad.data();
      const double* xv = xn->value.data();
      const double* yv = self.value.data();
      double* gx = xn->grad.data();
      for (std::size_t i = 0; i < n; ++i)
        gx[i] += g[i] * bwd_factor(xv[i], yv[i]);
    };
  }
  return out;
}
}  // namespace detail

inline Tensor relu(const Tensor& x) {
  return detail::unary_op(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

inline Tensor sigmoid(const Tensor& x) {
  return detail::unary_op(
      x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
      [](double, double y) { return y * (1.0 - y); });
}

inline Tensor exp_(const Tensor& x) {
  return detail::unary_op(x, [](double v) { return std::exp(v); },
                          [](double, double y) { return y; });
}

inline Tensor log_(const Tensor& x) {
  for (double v : x.values())
    if (!(v > 0.0)) throw NumericError("log of non-positive value");
  return detail::unary_op(x, [](double v) { return std::log(v); },
                          [](double v, double) { return 1.0 / v; });
}

inline Tensor sqrt_(const Tensor& x) {
  for (double v : x.values())
    if (v < 0.0) throw NumericError("sqrt of negative value");
  return detail::unary_op(x, [](double v) { return std::sqrt(v); },
                          [](double, double y) { return 0.5 / y; });
}

inline Tensor neg(const Tensor& x) { return scale(x, -1.0); }

// PReLU with a single learnable slope for the negative half.
inline Tensor prelu(const Tensor& x, const Tensor& slope) {
  if (slope.size() != 1)
    throw ShapeError("prelu: slope must be a scalar tensor");
  const double a = slope.at(0);
  Tensor out = detail::make_op_output(x.shape(), {x, slope});
  const double* xv = x.values().data();
  double* ov = out.node->value.data();
  const std::size_t n = out.node->value.size();
  for (std::size_t i = 0; i < n; ++i) ov[i] = xv[i] >= 0.0 ? xv[i] : a * xv[i];
  if (out.requires_grad()) {
    auto xn = x.node;
    auto sn = slope.node;
    out.node->backward_fn = [xn, sn, a, n](TensorNode& self) {
      const double* g = self.grad.data();
      const double* xv = xn->value.data();
      if (xn->requires_grad) {
        xn->ensure_grad();
        double* gx = xn->grad.data();
        for (std::size_t i = 0; i < n; ++i)
          gx[i] += g[i] * (xv[i] >= 0.0 ? 1.0 : a);
      }
      if (sn->requires_grad) {
        sn->ensure_grad();
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i)
          if (xv[i] < 0.0) acc += g[i] * xv[i];
        sn->grad[0] += acc;
      }
    };
  }
  return out;
}

// Full reduction to a scalar of shape {1}.
inline Tensor sum(const Tensor& x) {
  Tensor out = detail::make_op_output({1}, {x});
  out.node->value[0] =
      detail::sum_n(x.values().data(), static_cast<int>(x.size()));
  if (out.requires_grad()) {
    auto xn = x.node;
    out.node->backward_fn = [xn](TensorNode& self) {
      if (!xn->requires_grad) return;
      xn->ensure_grad();
      const double g = self.grad[0];
      for (double& v : xn->grad) v += g;
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// Classification loss primitive
// ---------------------------------------------------------------------------

// Cross-entropy of a one-hot target against raw logits, log-sum-exp
// stabilized. Returns a scalar; gradient is softmax(logits) - onehot.
inline Tensor cross_entropy_with_logits(const Tensor& logits, int label) {
  const std::size_t n = static_cast<std::size_t>(logits.size());
  if (label < 0 || static_cast<std::size_t>(label) >= n)
    throw std::invalid_argument("cross_entropy: label " +
                                std::to_string(label) + " out of range for " +
                                std::to_string(n) + " classes");
  ++OpCounters::cross_entropy_evals();
  Tensor out = detail::make_op_output({1}, {logits});
  const double* z = logits.values().data();
  double m = z[0];
  for (std::size_t i = 1; i < n; ++i) m = std::max(m, z[i]);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += std::exp(z[i] - m);
  const double lse = m + std::log(acc);
  out.node->value[0] = lse - z[static_cast<std::size_t>(label)];
  if (out.requires_grad()) {
    auto zn = logits.node;
    out.node->backward_fn = [zn, label, n, m, acc](TensorNode& self) {
      if (!zn->requires_grad) return;
      zn->ensure_grad();
      const double g = self.grad[0];
      const double* z = zn->value.data();
      double* gz = zn->grad.data();
      for (std::size_t i = 0; i < n; ++i) {
        const double p = std::exp(z[i] - m) / acc;
        gz[i] += g * (p - (static_cast<int>(i) == label ? 1.0 : 0.0));
      }
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// Composite layers
// ---------------------------------------------------------------------------

// Layer normalization over all N*T entries with per-channel affine. Fused
// single node; y = gain_r * (x - mean) / sqrt(var + eps) + bias_r.
inline Tensor global_layer_norm(const Tensor& x, const Tensor& gain,
                                const Tensor& bias, double eps = 1e-8) {
  if (x.ndim() != 2)
    throw ShapeError("global_layer_norm expects a matrix, got " +
                     shape_str(x.shape()));
  const int n_ch = x.dim(0), t_cols = x.dim(1);
  if (gain.size() != n_ch || bias.size() != n_ch)
    throw ShapeError("global_layer_norm: gain/bias must have one entry per "
                     "channel");
  const std::size_t n = static_cast<std::size_t>(x.size());
  const double inv_n = 1.0 / static_cast<double>(n);
  Tensor out = detail::make_op_output(x.shape(), {x, gain, bias});
  const double* xv = x.values().data();
  double mu = 0.0;
  for (std::size_t i = 0; i < n; ++i) mu += xv[i];
  mu *= inv_n;
  double var = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double c = xv[i] - mu;
    var += c * c;
  }
  var *= inv_n;
  const double sd = std::sqrt(var + eps);
  const double* gv = gain.values().data();
  const double* bv = bias.values().data();
  double* ov = out.node->value.data();
  for (int r = 0; r < n_ch; ++r) {
    const double* xr = xv + static_cast<std::size_t>(r) * t_cols;
    double* orow = ov + static_cast<std::size_t>(r) * t_cols;
    const double a = gv[r] / sd, b = bv[r] - gv[r] * mu / sd;
    for (int c = 0; c < t_cols; ++c) orow[c] = a * xr[c] + b;
  }
  if (out.requires_grad()) {
    auto xn = x.node;
    auto gn = gain.node;
    auto bn = bias.node;
    out.node->backward_fn = [xn, gn, bn, n_ch, t_cols, n, inv_n, mu,
                             sd](TensorNode& self) {
      const double* g = self.grad.data();
      const double* xv = xn->value.data();
      const double* gv = gn->value.data();
      if (gn->requires_grad) {
        gn->ensure_grad();
        double* gg = gn->grad.data();
        for (int r = 0; r < n_ch; ++r)
          gg[r] += detail::dot_centered(
                       g + static_cast<std::size_t>(r) * t_cols,
                       xv + static_cast<std::size_t>(r) * t_cols, mu,
                       t_cols) /
                   sd;
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        double* gb = bn->grad.data();
        for (int r = 0; r < n_ch; ++r)
          gb[r] += detail::sum_n(g + static_cast<std::size_t>(r) * t_cols,
                                 t_cols);
      }
      if (xn->requires_grad) {
        xn->ensure_grad();
        // dxhat = gain_r * dy; dx = (dxhat - mean(dxhat)
        //         - xhat * mean(dxhat .* xhat)) / sd
        double m1 = 0.0, m2 = 0.0;
        for (int r = 0; r < n_ch; ++r) {
          const double* grow = g + static_cast<std::size_t>(r) * t_cols;
          const double* xr = xv + static_cast<std::size_t>(r) * t_cols;
          const double w = gv[r];
          m1 += w * detail::sum_n(grow, t_cols);
          m2 += w * detail::dot_centered(grow, xr, mu, t_cols) / sd;
        }
        m1 *= inv_n;
        m2 *= inv_n;
        double* gx = xn->grad.data();
        for (int r = 0; r < n_ch; ++r) {
          const double* grow = g + static_cast<std::size_t>(r) * t_cols;
          const double* xr = xv + static_cast<std::size_t>(r) * t_cols;
          double* gxr = gx + static_cast<std::size_t>(r) * t_cols;
          const double w = gv[r];
          for (int c = 0; c < t_cols; ++c) {
            const double xh = (xr[c] - mu) / sd;
            gxr[c] += (w * grow[c] - m1 - xh * m2) / sd;
          }
        }
      }
    };
  }
  return out;
}

}  // namespace tse

#endif  // TSE_OPS_HPP_
