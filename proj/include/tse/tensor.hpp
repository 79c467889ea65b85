// Copyright 2026  The tse authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#ifndef TSE_TENSOR_HPP_
#define TSE_TENSOR_HPP_

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "tse/random.hpp"

namespace tse {

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Row-major dense shapes; 1-D for vectors/scalars, 2-D for matrices,
// 3-D for convolution kernels.
using Shape = std::vector<int>;

inline std::int64_t shape_numel(const Shape& shape) {
  if (shape.empty()) throw ShapeError("empty shape");
  std::int64_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw ShapeError("non-positive dimension in shape");
    n *= d;
  }
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i)
    os << shape[i] << (i + 1 < shape.size() ? "x" : "");
  os << "]";
  return os.str();
}

namespace detail {
inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}
}  // namespace detail

// Disables graph construction in a scope (evaluation, data generation).
struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(detail::grad_mode()) { detail::grad_mode() = false; }
  ~NoGradGuard() { detail::grad_mode() = prev; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

struct TensorNode {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backward_fn;

  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
  }
};

// Value-semantics handle onto a graph node. Values are immutable after
// construction except for gradient accumulation and explicit optimizer
// updates through mutable_values().
class Tensor {
 public:
  Tensor() = default;

  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false) {
    const std::int64_t n = shape_numel(shape);
    if (static_cast<std::int64_t>(values.size()) != n)
      throw ShapeError("value count " + std::to_string(values.size()) +
                       " does not match shape " + shape_str(shape));
    node = std::make_shared<TensorNode>();
    node->shape = std::move(shape);
    node->value = std::move(values);
    node->requires_grad = requires_grad;
  }

  static Tensor zeros(const Shape& shape, bool requires_grad = false) {
    return Tensor(shape, std::vector<double>(shape_numel(shape), 0.0),
                  requires_grad);
  }

  static Tensor full(const Shape& shape, double v) {
    return Tensor(shape, std::vector<double>(shape_numel(shape), v));
  }

  static Tensor ones(const Shape& shape) { return full(shape, 1.0); }

  static Tensor scalar(double v, bool requires_grad = false) {
    return Tensor({1}, {v}, requires_grad);
  }

  static Tensor randn(const Shape& shape, Rng& rng, double stddev = 1.0,
                      bool requires_grad = false) {
    std::vector<double> v(shape_numel(shape));
    for (double& x : v) x = rng.normal(0.0, stddev);
    return Tensor(shape, std::move(v), requires_grad);
  }

  bool defined() const { return node != nullptr; }
  const Shape& shape() const { return node->shape; }
  int ndim() const { return static_cast<int>(node->shape.size()); }
  int dim(int i) const { return node->shape[static_cast<std::size_t>(i)]; }
  std::int64_t size() const {
    return static_cast<std::int64_t>(node->value.size());
  }
  // Matrix view: 1-D tensors count as a single column.
  int rows() const { return node->shape[0]; }
  int cols() const { return ndim() >= 2 ? node->shape[1] : 1; }

  std::span<const double> values() const { return node->value; }
  std::span<double> mutable_values() { return node->value; }
  double at(std::int64_t i) const {
    return node->value[static_cast<std::size_t>(i)];
  }
  double operator()(int r, int c) const {
    return node->value[static_cast<std::size_t>(r) * cols() + c];
  }

  bool requires_grad() const { return node->requires_grad; }
  bool has_grad() const { return !node->grad.empty(); }
  std::span<const double> grad() const { return node->grad; }
  double grad_at(std::int64_t i) const {
    return node->grad[static_cast<std::size_t>(i)];
  }
  void zero_grad() {
    if (!node->grad.empty()) node->grad.assign(node->value.size(), 0.0);
  }

  // Reverse-mode sweep from a scalar loss. Leaf gradients accumulate across
  // calls; interior gradients are reset per sweep.
  void backward() const {
    if (!node) throw StateError("backward on undefined tensor");
    if (size() != 1)
      throw std::invalid_argument("backward requires a scalar, got shape " +
                                  shape_str(node->shape));
    std::vector<TensorNode*> order;
    std::unordered_set<TensorNode*> visited;
    std::vector<std::pair<TensorNode*, std::size_t>> stack;
    stack.emplace_back(node.get(), 0);
    visited.insert(node.get());
    while (!stack.empty()) {
      auto& [n, next] = stack.back();
      if (next < n->parents.size()) {
        TensorNode* p = n->parents[next++].get();
        if (p->requires_grad && visited.insert(p).second)
          stack.emplace_back(p, 0);
      } else {
        order.push_back(n);
        stack.pop_back();
      }
    }
    for (TensorNode* n : order)
      if (!n->parents.empty()) n->grad.assign(n->value.size(), 0.0);
    node->ensure_grad();
    node->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      TensorNode* n = *it;
      if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
    }
  }

  std::shared_ptr<TensorNode> node;
};

// Ordered, uniquely named collection of trainable tensors. The count is how
// the structural no-extra-parameter claim becomes assertable.
class ParamRegistry {
 public:
  Tensor& add(const std::string& name, Tensor t) {
    if (!t.defined() || !t.requires_grad())
      throw std::invalid_argument("parameter '" + name +
                                  "' must be a trainable tensor");
    for (const auto& [n, unused] : entries_)
      if (n == name)
        throw std::invalid_argument("duplicate parameter name '" + name + "'");
    entries_.emplace_back(name, std::move(t));
    return entries_.back().second;
  }

  const std::vector<std::pair<std::string, Tensor>>& entries() const {
    return entries_;
  }

  Tensor* find(const std::string& name) {
    for (auto& [n, t] : entries_)
      if (n == name) return &t;
    return nullptr;
  }

  std::int64_t parameter_count() const {
    std::int64_t n = 0;
    for (const auto& [name, t] : entries_) n += t.size();
    return n;
  }

  void zero_grad() {
    for (auto& [name, t] : entries_) t.zero_grad();
  }

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
};

}  // namespace tse

#endif  // TSE_TENSOR_HPP_
