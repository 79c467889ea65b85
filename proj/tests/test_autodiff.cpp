// Copyright 2026  The tse authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "test_util.hpp"
#include "tse/ops.hpp"
#include "tse/random.hpp"
#include "tse/tensor.hpp"

using namespace tse;
using testutil::adjoint_gap;
using testutil::max_rel_grad_error;

TEST_CASE("tensor shape and grad invariants") {
  CHECK_THROWS_AS(Tensor({2, 3}, {1.0, 2.0}), ShapeError);
  CHECK_THROWS_AS(Tensor({0}, {}), ShapeError);
  Tensor t({2, 2}, {1, 2, 3, 4}, true);
  CHECK(t.size() == 4);
  CHECK(!t.has_grad());
  sum(t).backward();
  REQUIRE(t.has_grad());
  CHECK(t.grad().size() == t.values().size());
}

TEST_CASE("conv1d matches the hand-computed examples") {
  SUBCASE("identity kernel") {
    Tensor x({1, 3}, {1, 2, 3});
    Tensor k({1, 1, 1}, {1});
    Tensor y = conv1d(x, k, 1);
    CHECK(y.shape() == Shape{1, 3});
    CHECK(y.at(0) == 1.0);
    CHECK(y.at(1) == 2.0);
    CHECK(y.at(2) == 3.0);
  }
  SUBCASE("sliding window sums, stride 2") {
    Tensor x({1, 4}, {1, 2, 3, 4});
    Tensor k({1, 1, 2}, {1, 1});
    Tensor y = conv1d(x, k, 2);
    REQUIRE(y.shape() == Shape{1, 2});
    CHECK(y.at(0) == doctest::Approx(3.0));
    CHECK(y.at(1) == doctest::Approx(7.0));
  }
  SUBCASE("frame arithmetic for 4 s at 8 kHz") {
    Tensor x = Tensor::zeros({1, 32000});
    Tensor k = Tensor::zeros({4, 1, 20});
    Tensor y = conv1d(x, k, 10);
    CHECK(y.dim(1) == 3199);
  }
  SUBCASE("channel mismatch raises") {
    Tensor x = Tensor::zeros({2, 8});
    Tensor k = Tensor::zeros({1, 3, 2});
    CHECK_THROWS_AS(conv1d(x, k, 1), ShapeError);
  }
  SUBCASE("input shorter than kernel raises") {
    Tensor x = Tensor::zeros({1, 3});
    Tensor k = Tensor::zeros({1, 1, 5});
    CHECK_THROWS_AS(conv1d(x, k, 1), ShapeError);
  }
}

TEST_CASE("conv_transpose1d is the exact adjoint of conv1d") {
  SUBCASE("single-frame scatter") {
    Tensor x({1, 1}, {5});
    Tensor k({1, 1, 2}, {1, 0});
    Tensor y = conv_transpose1d(x, k, 1);
    REQUIRE(y.shape() == Shape{1, 2});
    CHECK(y.at(0) == 5.0);
    CHECK(y.at(1) == 0.0);
  }
  SUBCASE("inverse frame arithmetic") {
    Tensor x = Tensor::zeros({4, 3199});
    Tensor k = Tensor::zeros({4, 1, 20});
    Tensor y = conv_transpose1d(x, k, 10);
    CHECK(y.dim(1) == 32000);
  }
  SUBCASE("inner-product adjoint identity") {
    Rng rng(17);
    for (int trial = 0; trial < 5; ++trial) {
      Tensor x = Tensor::randn({3, 14}, rng);
      Tensor k = Tensor::randn({2, 3, 4}, rng);
      Tensor y = Tensor::randn({2, 6}, rng);  // T = (14-4)/2+1 = 6
      Tensor cx = conv1d(x, k, 2);
      Tensor ay = conv_transpose1d(y, k, 2);
      double lhs = testutil::dot(cx, y);
      double rhs = testutil::dot(x, ay);
      CHECK(std::abs(lhs - rhs) < 1e-10);
    }
  }
}

TEST_CASE("matmul agrees with a naive triple-loop oracle") {
  SUBCASE("identity") {
    Tensor eye({2, 2}, {1, 0, 0, 1});
    Tensor b({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor y = matmul(eye, b);
    for (int i = 0; i < 6; ++i) CHECK(y.at(i) == b.at(i));
  }
  SUBCASE("row selection") {
    Tensor a({1, 2}, {1, 0});
    Tensor b({2, 2}, {1, 0, 0, 1});
    Tensor y = matmul(a, b);
    CHECK(y.at(0) == 1.0);
    CHECK(y.at(1) == 0.0);
  }
  SUBCASE("random against triple loop") {
    Rng rng(3);
    Tensor a = Tensor::randn({3, 4}, rng);
    Tensor b = Tensor::randn({4, 2}, rng);
    Tensor y = matmul(a, b);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 2; ++j) {
        double acc = 0.0;
        for (int k = 0; k < 4; ++k) acc += a(i, k) * b(k, j);
        CHECK(std::abs(y(i, j) - acc) < 1e-12);
      }
  }
  SUBCASE("dimension mismatch raises") {
    CHECK_THROWS_AS(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})),
                    ShapeError);
  }
}

TEST_CASE("softmax is a stable probability vector") {
  SUBCASE("uniform") {
    Tensor v({1, 3}, {0, 0, 0});
    Tensor w = softmax(v);
    for (int i = 0; i < 3; ++i)
      CHECK(w.at(i) == doctest::Approx(1.0 / 3).epsilon(1e-12));
  }
  SUBCASE("two entries, closed form") {
    Tensor v({1, 2}, {1, 0});
    Tensor w = softmax(v);
    CHECK(w.at(0) == doctest::Approx(0.7310585786300049).epsilon(1e-12));
    CHECK(w.at(1) == doctest::Approx(0.2689414213699951).epsilon(1e-12));
  }
  SUBCASE("max-subtraction prevents overflow") {
    Tensor v({1, 2}, {1000, 0});
    Tensor w = softmax(v);
    CHECK(std::isfinite(w.at(0)));
    CHECK(w.at(0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(w.at(1) == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("NaN input raises") {
    Tensor v({1, 2}, {std::nan(""), 0.0});
    CHECK_THROWS_AS(softmax(v), NumericError);
  }
  SUBCASE("sums to one for magnitudes up to 1e3") {
    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
      Tensor v = Tensor::randn({1, 17}, rng, 300.0);
      Tensor w = softmax(v);
      double s = 0.0;
      for (int i = 0; i < 17; ++i) {
        CHECK(w.at(i) >= 0.0);
        s += w.at(i);
      }
      CHECK(std::abs(s - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("elementwise identities and broadcasting") {
  Rng rng(5);
  Tensor a = Tensor::randn({4, 6}, rng);
  SUBCASE("multiplicative and additive identities") {
    Tensor y = mul(a, Tensor::ones({4, 6}));
    Tensor z = add(a, Tensor::zeros({4, 6}));
    for (int i = 0; i < a.size(); ++i) {
      CHECK(y.at(i) == a.at(i));
      CHECK(z.at(i) == a.at(i));
    }
  }
  SUBCASE("column broadcast equals explicit repetition") {
    Tensor col = Tensor::randn({4, 1}, rng);
    Tensor y = mul(a, col);
    std::vector<double> repeated(4 * 6);
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 6; ++c) repeated[r * 6 + c] = col.at(r);
    Tensor rep({4, 6}, repeated);
    Tensor oracle = mul(a, rep);
    for (int i = 0; i < a.size(); ++i) CHECK(y.at(i) == oracle.at(i));
  }
  SUBCASE("incompatible shapes raise") {
    CHECK_THROWS_AS(add(a, Tensor::zeros({3, 6})), ShapeError);
    CHECK_THROWS_AS(add(a, Tensor::zeros({1, 6})), ShapeError);
  }
}

TEST_CASE("mean_pool1d averages M-column groups with a ragged tail") {
  SUBCASE("two-column mean") {
    Tensor x({2, 2}, {1, 3, 2, 4});
    Tensor y = mean_pool1d(x, 2);
    REQUIRE(y.shape() == Shape{2, 1});
    CHECK(y.at(0) == doctest::Approx(2.0));
    CHECK(y.at(1) == doctest::Approx(3.0));
  }
  SUBCASE("M=1 is the identity") {
    Rng rng(7);
    Tensor x = Tensor::randn({3, 5}, rng);
    Tensor y = mean_pool1d(x, 1);
    for (int i = 0; i < x.size(); ++i) CHECK(y.at(i) == x.at(i));
  }
  SUBCASE("3199 frames at M=20 pool to 160 with a 19-column tail") {
    Rng rng(9);
    Tensor x = Tensor::randn({2, 3199}, rng);
    Tensor y = mean_pool1d(x, 20);
    REQUIRE(y.shape() == Shape{2, 160});
    // Loop oracle for every group, including the ragged final one.
    for (int g = 0; g < 160; ++g) {
      const int lo = g * 20, hi = std::min(lo + 20, 3199);
      for (int r = 0; r < 2; ++r) {
        double acc = 0.0;
        for (int c = lo; c < hi; ++c) acc += x(r, c);
        CHECK(y(r, g) == doctest::Approx(acc / (hi - lo)).epsilon(1e-12));
      }
    }
    CHECK(3199 - 159 * 20 == 19);
  }
  SUBCASE("non-positive M raises") {
    CHECK_THROWS_AS(mean_pool1d(Tensor::zeros({1, 4}), 0),
                    std::invalid_argument);
  }
}

TEST_CASE("nearest_upsample1d repeats pooled columns over frame blocks") {
  SUBCASE("factor-2 repeat") {
    Tensor x({1, 2}, {3.5, -1.0});
    Tensor y = nearest_upsample1d(x, 2, 4);
    REQUIRE(y.shape() == Shape{1, 4});
    CHECK(y.at(0) == 3.5);
    CHECK(y.at(1) == 3.5);
    CHECK(y.at(2) == -1.0);
    CHECK(y.at(3) == -1.0);
  }
  SUBCASE("M=1 is the identity") {
    Rng rng(13);
    Tensor x = Tensor::randn({2, 6}, rng);
    Tensor y = nearest_upsample1d(x, 1, 6);
    for (int i = 0; i < x.size(); ++i) CHECK(y.at(i) == x.at(i));
  }
  SUBCASE("pool then upsample fixes block-constant matrices") {
    Rng rng(15);
    for (int t : {12, 13, 17}) {
      const int m = 4;
      const int tm = (t + m - 1) / m;
      Tensor pooled = Tensor::randn({3, tm}, rng);
      Tensor blocky = nearest_upsample1d(pooled, m, t);
      Tensor rt = nearest_upsample1d(mean_pool1d(blocky, m), m, t);
      for (int i = 0; i < blocky.size(); ++i)
        CHECK(rt.at(i) == doctest::Approx(blocky.at(i)).epsilon(1e-12));
    }
  }
  SUBCASE("inconsistent T_m/M/T triple raises") {
    CHECK_THROWS_AS(nearest_upsample1d(Tensor::zeros({1, 3}), 2, 4),
                    std::invalid_argument);
  }
}

TEST_CASE("prelu and global_layer_norm behave per definition") {
  Rng rng(19);
  SUBCASE("prelu is identity on the nonnegative half") {
    Tensor x({1, 4}, {0.0, 0.5, 2.0, 7.0});
    Tensor slope = Tensor::scalar(0.3);
    Tensor y = prelu(x, slope);
    for (int i = 0; i < 4; ++i) CHECK(y.at(i) == x.at(i));
    Tensor xn({1, 2}, {-1.0, -4.0});
    Tensor yn = prelu(xn, slope);
    CHECK(yn.at(0) == doctest::Approx(-0.3));
    CHECK(yn.at(1) == doctest::Approx(-1.2));
  }
  SUBCASE("gLN of a standardized matrix is near-identity") {
    // Build an exactly zero-mean, unit-variance matrix.
    std::vector<double> v = {1, -1, 1, -1, 1, -1};
    Tensor x({2, 3}, v);
    Tensor y = global_layer_norm(x, Tensor::ones({2, 1}),
                                 Tensor::zeros({2, 1}));
    for (int i = 0; i < x.size(); ++i)
      CHECK(y.at(i) == doctest::Approx(x.at(i)).epsilon(1e-6));
  }
  SUBCASE("zero-variance input stays finite") {
    Tensor x = Tensor::full({2, 3}, 4.0);
    Tensor y = global_layer_norm(x, Tensor::ones({2, 1}),
                                 Tensor::zeros({2, 1}));
    for (int i = 0; i < x.size(); ++i) CHECK(y.at(i) == 0.0);
  }
  SUBCASE("finite-difference gradients on random 4x6 input") {
    Tensor x = Tensor::randn({4, 6}, rng, 1.0, true);
    Tensor slope = Tensor::scalar(0.25, true);
    double err = max_rel_grad_error({&x, &slope},
                                    [&] { return sum(prelu(x, slope)); });
    CHECK(err < 1e-6);
    Tensor g = Tensor::randn({4, 1}, rng, 1.0, true);
    Tensor b = Tensor::randn({4, 1}, rng, 1.0, true);
    Tensor x2 = Tensor::randn({4, 6}, rng, 1.0, true);
    Tensor probe = Tensor::randn({4, 6}, rng);
    double err2 = max_rel_grad_error({&x2, &g, &b}, [&] {
      return sum(mul(global_layer_norm(x2, g, b), probe));
    });
    CHECK(err2 < 1e-6);
  }
}

TEST_CASE("backward populates gradients of everything reachable") {
  Rng rng(23);
  SUBCASE("bilinear form: grad of sum(a*b) is b") {
    Tensor a = Tensor::randn({3, 4}, rng, 1.0, true);
    Tensor b = Tensor::randn({3, 4}, rng);
    sum(mul(a, b)).backward();
    for (int i = 0; i < a.size(); ++i)
      CHECK(a.grad_at(i) == doctest::Approx(b.at(i)).epsilon(1e-12));
  }
  SUBCASE("softmax sums to one, so its sum has zero gradient") {
    Tensor v = Tensor::randn({1, 9}, rng, 2.0, true);
    sum(softmax(v)).backward();
    for (int i = 0; i < v.size(); ++i) CHECK(std::abs(v.grad_at(i)) < 1e-9);
  }
  SUBCASE("non-scalar loss raises") {
    Tensor a = Tensor::randn({2, 2}, rng, 1.0, true);
    CHECK_THROWS_AS(mul(a, a).backward(), std::invalid_argument);
  }
  SUBCASE("repeated backward accumulates until zeroed") {
    Tensor a = Tensor::randn({2, 2}, rng, 1.0, true);
    Tensor b = Tensor::ones({2, 2});
    sum(mul(a, b)).backward();
    sum(mul(a, b)).backward();
    for (int i = 0; i < a.size(); ++i)
      CHECK(a.grad_at(i) == doctest::Approx(2.0));
    a.zero_grad();
    sum(mul(a, b)).backward();
    for (int i = 0; i < a.size(); ++i)
      CHECK(a.grad_at(i) == doctest::Approx(1.0));
  }
}

TEST_CASE("adjoint identity holds for every linear op at 1e-10") {
  Rng rng(29);
  Tensor k = Tensor::randn({2, 3, 4}, rng);
  CHECK(adjoint_gap({3, 14}, {2, 6},
                    [&](const Tensor& x) { return conv1d(x, k, 2); },
                    rng) < 1e-10);
  Tensor x0 = Tensor::randn({3, 14}, rng);
  CHECK(adjoint_gap({2, 3, 4}, {2, 6},
                    [&](const Tensor& kk) { return conv1d(x0, kk, 2); },
                    rng) < 1e-10);
  Tensor kt = Tensor::randn({2, 3, 5}, rng);
  CHECK(adjoint_gap({2, 7}, {3, 23},
                    [&](const Tensor& x) { return conv_transpose1d(x, kt, 3); },
                    rng) < 1e-10);
  Tensor b = Tensor::randn({5, 4}, rng);
  CHECK(adjoint_gap({3, 5}, {3, 4},
                    [&](const Tensor& a) { return matmul(a, b); }, rng) <
        1e-10);
  CHECK(adjoint_gap({4, 11}, {4, 3},
                    [&](const Tensor& x) { return mean_pool1d(x, 4); },
                    rng) < 1e-10);
  CHECK(adjoint_gap({4, 3}, {4, 11},
                    [&](const Tensor& x) {
                      return nearest_upsample1d(x, 4, 11);
                    },
                    rng) < 1e-10);
  CHECK(adjoint_gap({2, 9}, {2, 5},
                    [&](const Tensor& x) {
                      return nearest_resample_cols(x, 5);
                    },
                    rng) < 1e-10);
  CHECK(adjoint_gap({3, 4}, {4, 3},
                    [&](const Tensor& x) { return transpose(x); }, rng) <
        1e-10);
  CHECK(adjoint_gap({2, 5}, {2, 9},
                    [&](const Tensor& x) { return pad_cols(x, 1, 3); },
                    rng) < 1e-10);
  CHECK(adjoint_gap({2, 9}, {2, 4},
                    [&](const Tensor& x) { return trim_cols(x, 4); }, rng) <
        1e-10);
}

TEST_CASE("finite differences validate every op's backward pass") {
  Rng rng(31);
  Tensor probe6 = Tensor::randn({2, 6}, rng);

  SUBCASE("conv1d w.r.t. input and kernel, with dilation") {
    Tensor x = Tensor::randn({2, 12}, rng, 1.0, true);
    Tensor k = Tensor::randn({3, 2, 3}, rng, 1.0, true);
    Tensor probe = Tensor::randn({3, 4}, rng);  // (12-2*2-1)/2+1 = 4
    double err = max_rel_grad_error({&x, &k}, [&] {
      return sum(mul(conv1d(x, k, 2, 2), probe));
    });
    CHECK(err < 1e-6);
  }
  SUBCASE("conv_transpose1d") {
    Tensor x = Tensor::randn({3, 5}, rng, 1.0, true);
    Tensor k = Tensor::randn({3, 2, 4}, rng, 1.0, true);
    Tensor probe = Tensor::randn({2, 12}, rng);
    double err = max_rel_grad_error({&x, &k}, [&] {
      return sum(mul(conv_transpose1d(x, k, 2), probe));
    });
    CHECK(err < 1e-6);
  }
  SUBCASE("matmul") {
    Tensor a = Tensor::randn({3, 4}, rng, 1.0, true);
    Tensor b = Tensor::randn({4, 2}, rng, 1.0, true);
    Tensor probe = Tensor::randn({3, 2}, rng);
    double err = max_rel_grad_error(
        {&a, &b}, [&] { return sum(mul(matmul(a, b), probe)); });
    CHECK(err < 1e-6);
  }
  SUBCASE("softmax") {
    Tensor v = Tensor::randn({1, 7}, rng, 2.0, true);
    Tensor probe = Tensor::randn({1, 7}, rng);
    double err = max_rel_grad_error(
        {&v}, [&] { return sum(mul(softmax(v), probe)); });
    CHECK(err < 1e-6);
  }
  SUBCASE("elementwise all four ops, all broadcast modes") {
    for (EwOp op : {EwOp::add, EwOp::sub, EwOp::mul, EwOp::div}) {
      Tensor a = Tensor::randn({2, 6}, rng, 1.0, true);
      Tensor same = Tensor::randn({2, 6}, rng, 1.0, true);
      Tensor col = Tensor::randn({2, 1}, rng, 1.0, true);
      Tensor sc = Tensor::scalar(1.7, true);
      // Keep divisors away from zero.
      for (Tensor* t : {&same, &col})
        for (double& v : t->mutable_values()) v += (v >= 0 ? 2.0 : -2.0);
      CHECK(max_rel_grad_error({&a, &same}, [&] {
              return sum(mul(elementwise(a, same, op), probe6));
            }) < 1e-6);
      CHECK(max_rel_grad_error({&a, &col}, [&] {
              return sum(mul(elementwise(a, col, op), probe6));
            }) < 1e-6);
      CHECK(max_rel_grad_error({&a, &sc}, [&] {
              return sum(mul(elementwise(a, sc, op), probe6));
            }) < 1e-6);
    }
  }
  SUBCASE("pooling, upsampling, resampling") {
    Tensor x = Tensor::randn({2, 11}, rng, 1.0, true);
    Tensor probe3 = Tensor::randn({2, 3}, rng);
    CHECK(max_rel_grad_error({&x}, [&] {
            return sum(mul(mean_pool1d(x, 4), probe3));
          }) < 1e-6);
    Tensor p = Tensor::randn({2, 3}, rng, 1.0, true);
    Tensor probe11 = Tensor::randn({2, 11}, rng);
    CHECK(max_rel_grad_error({&p}, [&] {
            return sum(mul(nearest_upsample1d(p, 4, 11), probe11));
          }) < 1e-6);
    Tensor q = Tensor::randn({2, 7}, rng, 1.0, true);
    CHECK(max_rel_grad_error({&q}, [&] {
            return sum(mul(nearest_resample_cols(q, 11), probe11));
          }) < 1e-6);
  }
  SUBCASE("unary maps") {
    Tensor x = Tensor::randn({2, 6}, rng, 1.0, true);
    CHECK(max_rel_grad_error(
              {&x}, [&] { return sum(mul(sigmoid(x), probe6)); }) < 1e-6);
    CHECK(max_rel_grad_error(
              {&x}, [&] { return sum(mul(exp_(x), probe6)); }) < 1e-6);
    Tensor pos({2, 6}, {0.5, 1.2, 3.0, 0.9, 2.2, 4.1, 1.1, 0.4, 2.8, 1.9, 0.7,
                        3.3});
    pos.node->requires_grad = true;
    CHECK(max_rel_grad_error(
              {&pos}, [&] { return sum(mul(log_(pos), probe6)); }) < 1e-6);
    CHECK(max_rel_grad_error(
              {&pos}, [&] { return sum(mul(sqrt_(pos), probe6)); }) < 1e-6);
    // relu probed away from the kink.
    Tensor far({2, 6}, {1.5, -1.2, 3.0, -0.9, 2.2, -4.1, 1.1, -0.4, 2.8, -1.9,
                        0.7, -3.3});
    far.node->requires_grad = true;
    CHECK(max_rel_grad_error(
              {&far}, [&] { return sum(mul(relu(far), probe6)); }) < 1e-6);
  }
  SUBCASE("concat, pad, trim, transpose, scale, add_const") {
    Tensor a = Tensor::randn({2, 5}, rng, 1.0, true);
    Tensor b = Tensor::randn({3, 5}, rng, 1.0, true);
    Tensor probe = Tensor::randn({5, 5}, rng);
    CHECK(max_rel_grad_error({&a, &b}, [&] {
            return sum(mul(concat_rows(a, b), probe));
          }) < 1e-6);
    Tensor probe9 = Tensor::randn({2, 9}, rng);
    CHECK(max_rel_grad_error({&a}, [&] {
            return sum(mul(pad_cols(a, 1, 3), probe9));
          }) < 1e-6);
    Tensor probe2 = Tensor::randn({2, 2}, rng);
    CHECK(max_rel_grad_error({&a}, [&] {
            return sum(mul(trim_cols(a, 2), probe2));
          }) < 1e-6);
    Tensor probe52 = Tensor::randn({5, 2}, rng);
    CHECK(max_rel_grad_error({&a}, [&] {
            return sum(mul(transpose(a), probe52));
          }) < 1e-6);
    Tensor probe5 = Tensor::randn({2, 5}, rng);
    CHECK(max_rel_grad_error({&a}, [&] {
            return sum(mul(add_const(scale(a, -2.5), 0.3), probe5));
          }) < 1e-6);
  }
  SUBCASE("cross entropy with logits") {
    Tensor z({5}, {0.3, -1.2, 2.0, 0.1, -0.6}, true);
    CHECK(max_rel_grad_error(
              {&z}, [&] { return cross_entropy_with_logits(z, 2); }) < 1e-6);
  }
}

TEST_CASE("ParamRegistry names are unique and counts are stable") {
  Rng rng(37);
  ParamRegistry reg;
  reg.add("enc.weight", Tensor::randn({4, 1, 3}, rng, 1.0, true));
  reg.add("dec.weight", Tensor::randn({4, 1, 3}, rng, 1.0, true));
  CHECK(reg.parameter_count() == 24);
  CHECK_THROWS_AS(reg.add("enc.weight", Tensor::randn({1}, rng, 1.0, true)),
                  std::invalid_argument);
  CHECK_THROWS_AS(reg.add("plain", Tensor::zeros({2})),
                  std::invalid_argument);

  // Count is invariant across forward/backward sweeps.
  const auto before = reg.parameter_count();
  Tensor x = Tensor::randn({1, 9}, rng);
  Tensor y = conv1d(x, *reg.find("enc.weight"), 1);
  sum(y).backward();
  CHECK(reg.parameter_count() == before);
  reg.zero_grad();
  CHECK(reg.parameter_count() == before);
}

TEST_CASE("NoGradGuard suppresses graph construction") {
  Rng rng(41);
  Tensor a = Tensor::randn({2, 2}, rng, 1.0, true);
  NoGradGuard ng;
  Tensor y = mul(a, a);
  CHECK(!y.requires_grad());
  CHECK(y.node->parents.empty());
}
