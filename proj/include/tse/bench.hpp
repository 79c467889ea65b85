// Copyright 2026  The tse authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#ifndef TSE_BENCH_HPP_
#define TSE_BENCH_HPP_

#include <chrono>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "tse/random.hpp"

namespace tse {

// Cost comparison between the vector-matrix attention of the adaptation
// layer and a conventional matrix-matrix attention over the same frames.
// Multiply-adds are counted literally by an instrumented pass and match the
// closed forms 2*N*T_m and N*T_m^2.

namespace bench_detail {

// d = e^T U, w = softmax(d), B = e w. Returns a checksum so the optimizer
// cannot drop the computation.
template <bool kCount>
double asa_pass(const std::vector<double>& e, const std::vector<double>& u,
                int n, int t_m, std::vector<double>& scratch,
                std::int64_t* macs) {
  double* d = scratch.data();            // t_m
  double* w = scratch.data() + t_m;      // t_m
  double* b = scratch.data() + 2 * t_m;  // n * t_m
  for (int g = 0; g < t_m; ++g) d[g] = 0.0;
  for (int r = 0; r < n; ++r) {
    const double ev = e[r];
    const double* urow = u.data() + static_cast<std::size_t>(r) * t_m;
    for (int g = 0; g < t_m; ++g) {
      d[g] += ev * urow[g];
      if constexpr (kCount) ++*macs;
    }
  }
  double m = d[0];
  for (int g = 1; g < t_m; ++g) m = std::max(m, d[g]);
  double z = 0.0;
  for (int g = 0; g < t_m; ++g) {
    w[g] = std::exp(d[g] - m);
    z += w[g];
  }
  for (int g = 0; g < t_m; ++g) w[g] /= z;
  double checksum = 0.0;
  for (int r = 0; r < n; ++r) {
    const double ev = e[r];
    double* brow = b + static_cast<std::size_t>(r) * t_m;
    for (int g = 0; g < t_m; ++g) {
      brow[g] = ev * w[g];
      if constexpr (kCount) ++*macs;
    }
    checksum += brow[t_m - 1];
  }
  return checksum;
}

// S = U^T U ([t_m x t_m] scores), then a row softmax. The score matrix is
// the part the pooling-free attention would need; its N*T_m^2 multiply-adds
// dominate everything else.
template <bool kCount>
double matrix_pass(const std::vector<double>& u, int n, int t_m,
                   std::vector<double>& scratch, std::int64_t* macs) {
  double* s = scratch.data();  // t_m * t_m
  for (int i = 0; i < t_m; ++i)
    for (int j = 0; j < t_m; ++j) {
      double acc = 0.0;
      for (int r = 0; r < n; ++r) {
        acc += u[static_cast<std::size_t>(r) * t_m + i] *
               u[static_cast<std::size_t>(r) * t_m + j];
        if constexpr (kCount) ++*macs;
      }
      s[static_cast<std::size_t>(i) * t_m + j] = acc;
    }
  double checksum = 0.0;
  for (int i = 0; i < t_m; ++i) {
    double* row = s + static_cast<std::size_t>(i) * t_m;
    double m = row[0];
    for (int j = 1; j < t_m; ++j) m = std::max(m, row[j]);
    double z = 0.0;
    for (int j = 0; j < t_m; ++j) {
      row[j] = std::exp(row[j] - m);
      z += row[j];
    }
    for (int j = 0; j < t_m; ++j) row[j] /= z;
    checksum += row[t_m - 1];
  }
  return checksum;
}

}  // namespace bench_detail

struct AttentionBenchResult {
  int n = 0, t = 0, m = 0, t_m = 0, reps = 0;
  std::int64_t asa_macs = 0;
  std::int64_t matrix_macs = 0;
  double asa_ms = 0.0;
  double matrix_ms = 0.0;
  std::size_t asa_transient_bytes = 0;
  std::size_t matrix_transient_bytes = 0;

  double mac_ratio() const {
    return static_cast<double>(matrix_macs) / static_cast<double>(asa_macs);
  }
  double time_ratio() const { return matrix_ms / asa_ms; }

  std::string table() const {
    std::ostringstream os;
    os << "attention cost at N=" << n << " T=" << t << " M=" << m
       << " (T_m=" << t_m << ", " << reps << " reps)\n";
    os << "  method          mul-adds      wall-ms    transient-bytes\n";
    char line[128];
    std::snprintf(line, sizeof line, "  %-12s %12lld %12.3f %12zu\n",
                  "asa", static_cast<long long>(asa_macs), asa_ms,
                  asa_transient_bytes);
    os << line;
    std::snprintf(line, sizeof line, "  %-12s %12lld %12.3f %12zu\n",
                  "matrix", static_cast<long long>(matrix_macs), matrix_ms,
                  matrix_transient_bytes);
    os << line;
    std::snprintf(line, sizeof line,
                  "  ratio: %.1fx mul-adds, %.1fx wall time\n", mac_ratio(),
                  time_ratio());
    os << line;
    return os.str();
  }
};

inline AttentionBenchResult bench_attention(int n, int t, int m,
                                            int reps = 50) {
  if (n < 1 || t < 1 || m < 1 || reps < 1)
    throw std::invalid_argument("bench_attention: sizes must be positive");
  AttentionBenchResult res;
  res.n = n;
  res.t = t;
  res.m = m;
  res.t_m = (t + m - 1) / m;
  res.reps = reps;
  const int t_m = res.t_m;

  Rng rng(4242);
  std::vector<double> e(n), u(static_cast<std::size_t>(n) * t_m);
  for (double& v : e) v = rng.normal();
  for (double& v : u) v = rng.normal();

  std::vector<double> asa_scratch(static_cast<std::size_t>(n) * t_m + 2 * t_m);
  std::vector<double> mat_scratch(static_cast<std::size_t>(t_m) * t_m);
  res.asa_transient_bytes = asa_scratch.size() * sizeof(double);
  res.matrix_transient_bytes = mat_scratch.size() * sizeof(double);

  // Literal counts from one instrumented pass.
  bench_detail::asa_pass<true>(e, u, n, t_m, asa_scratch, &res.asa_macs);
  bench_detail::matrix_pass<true>(u, n, t_m, mat_scratch, &res.matrix_macs);

  double sink = 0.0;
  using clock = std::chrono::steady_clock;
  auto t0 = clock::now();
  for (int r = 0; r < reps; ++r)
    sink += bench_detail::asa_pass<false>(e, u, n, t_m, asa_scratch, nullptr);
  auto t1 = clock::now();
  for (int r = 0; r < reps; ++r)
    sink += bench_detail::matrix_pass<false>(u, n, t_m, mat_scratch, nullptr);
  auto t2 = clock::now();
  // Defeat dead-code elimination without volatile arithmetic.
  if (!std::isfinite(sink))
    throw std::runtime_error("bench_attention: overflow");

  res.asa_ms = std::chrono::duration<double, std::milli>(t1 - t0).count() /
               reps;
  res.matrix_ms = std::chrono::duration<double, std::milli>(t2 - t1).count() /
                  reps;
  return res;
}

}  // namespace tse

#endif  // TSE_BENCH_HPP_
