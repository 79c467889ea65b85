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
#include "tse/losses.hpp"
#include "tse/signal.hpp"

using namespace tse;
using testutil::max_rel_grad_error;

namespace {

Tensor random_wave(int n, Rng& rng, double amp = 1.0, bool rg = false) {
  return Tensor::randn({1, n}, rng, amp, rg);
}

Waveform to_waveform(const Tensor& t) {
  return Waveform{{t.values().begin(), t.values().end()}, 8000};
}

}  // namespace

TEST_CASE("sisdr_loss extremes") {
  Rng rng(3);
  Tensor x = random_wave(256, rng);
  SUBCASE("exact reconstruction is deeply negative") {
    CHECK(sisdr_loss(x, x).at(0) <= -60.0);
  }
  SUBCASE("orthogonal estimate is deeply positive") {
    std::vector<double> s(320), c(320);
    for (int i = 0; i < 320; ++i) {
      s[i] = std::sin(2.0 * kPi * 25.0 * i / 320.0);
      c[i] = std::cos(2.0 * kPi * 25.0 * i / 320.0);
    }
    Tensor target({1, 320}, s), est({1, 320}, c);
    CHECK(sisdr_loss(est, target).at(0) >= 60.0);
  }
  SUBCASE("zero reference raises") {
    CHECK_THROWS_AS(sisdr_loss(x, Tensor::zeros({1, 256})),
                    std::invalid_argument);
  }
  SUBCASE("shape mismatch raises") {
    CHECK_THROWS_AS(sisdr_loss(x, Tensor::zeros({1, 128})),
                    std::invalid_argument);
  }
}

TEST_CASE("sisdr_loss agrees with the metric away from the clamp") {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor ref = random_wave(2000, rng, 0.1);
    Tensor est = ref;
    Tensor noise = random_wave(2000, rng, 0.05);
    est = add(est, noise);
    const double loss = sisdr_loss(est, ref).at(0);
    const double metric = sisdr(to_waveform(est), to_waveform(ref));
    REQUIRE(metric > -60.0);
    REQUIRE(metric < 60.0);
    CHECK(std::abs(loss + metric) < 1e-6);
  }
}

TEST_CASE("sisdr_loss is scale invariant in the estimate") {
  Rng rng(7);
  Tensor ref = random_wave(4000, rng, 1.0);
  Tensor est = add(ref, random_wave(4000, rng, 0.5));
  const double base = sisdr_loss(est, ref).at(0);
  for (double c : {0.5, 3.0, 41.0}) {
    Tensor scaled = scale(est, c);
    CHECK(std::abs(sisdr_loss(scaled, ref).at(0) - base) < 1e-9);
  }
}

TEST_CASE("sisdr_loss gradient matches finite differences") {
  Rng rng(9);
  for (int trial = 0; trial < 3; ++trial) {
    Tensor ref = random_wave(64, rng, 1.0);
    Tensor est = Tensor::randn({1, 64}, rng, 1.0, true);
    const double err =
        max_rel_grad_error({&est}, [&] { return sisdr_loss(est, ref); });
    CHECK(err < 1e-4);
  }
}

TEST_CASE("cross entropy closed forms") {
  SUBCASE("uniform logits over 8 classes give ln 8") {
    Tensor z = Tensor::zeros({8});
    Tensor ce = cross_entropy_with_logits(z, 3);
    CHECK(ce.at(0) == doctest::Approx(std::log(8.0)).epsilon(1e-12));
  }
  SUBCASE("confident correct logits drive CE to zero") {
    std::vector<double> v(8, 0.0);
    v[2] = 50.0;
    Tensor z({8}, v);
    CHECK(cross_entropy_with_logits(z, 2).at(0) ==
          doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("CE is nonnegative on random logits") {
    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
      Tensor z = Tensor::randn({6}, rng, 3.0);
      const int label = static_cast<int>(rng.uniform_int(6));
      CHECK(cross_entropy_with_logits(z, label).at(0) >= 0.0);
    }
  }
  SUBCASE("out-of-range label raises") {
    CHECK_THROWS_AS(cross_entropy_with_logits(Tensor::zeros({4}), 4),
                    std::invalid_argument);
    CHECK_THROWS_AS(cross_entropy_with_logits(Tensor::zeros({4}), -1),
                    std::invalid_argument);
  }
}

TEST_CASE("mtl_loss combination and the alpha=0 bypass") {
  Rng rng(13);
  Tensor ref = random_wave(500, rng, 0.3);
  Tensor est = add(ref, random_wave(500, rng, 0.1));
  SUBCASE("alpha=0 equals the SiSDR term exactly and skips CE") {
    const std::int64_t before = OpCounters::cross_entropy_evals();
    LossReport rep = mtl_loss(est, ref, Tensor(), 0, 0.0);
    CHECK(OpCounters::cross_entropy_evals() == before);
    CHECK(rep.total_value == rep.sisdr_term);
    CHECK(rep.ce_term == 0.0);
    CHECK(rep.total.at(0) == rep.sisdr_term);
  }
  SUBCASE("alpha=0.5 with uniform logits over 8 speakers") {
    const std::int64_t before = OpCounters::cross_entropy_evals();
    LossReport rep = mtl_loss(est, ref, Tensor::zeros({8}), 5, 0.5);
    CHECK(OpCounters::cross_entropy_evals() == before + 1);
    CHECK(rep.ce_term == doctest::Approx(std::log(8.0)).epsilon(1e-12));
    CHECK(std::abs(rep.total_value - (rep.sisdr_term + 0.5 * rep.ce_term)) <
          1e-12);
  }
  SUBCASE("negative alpha raises") {
    CHECK_THROWS_AS(mtl_loss(est, ref, Tensor::zeros({8}), 0, -0.1),
                    std::invalid_argument);
  }
  SUBCASE("report identity holds across random alphas") {
    Rng rng2(15);
    for (int trial = 0; trial < 20; ++trial) {
      Tensor z = Tensor::randn({8}, rng2, 2.0);
      const double alpha = rng2.uniform(0.0, 2.0);
      LossReport rep =
          mtl_loss(est, ref, z, static_cast<int>(rng2.uniform_int(8)), alpha);
      CHECK(std::abs(rep.total_value -
                     (rep.sisdr_term + rep.alpha * rep.ce_term)) < 1e-12);
    }
  }
}

TEST_CASE("mtl gradient flows through both terms") {
  Rng rng(17);
  Tensor ref = random_wave(64, rng, 1.0);
  Tensor est = Tensor::randn({1, 64}, rng, 1.0, true);
  Tensor logits = Tensor::randn({5}, rng, 1.0, true);
  const double err = max_rel_grad_error({&est, &logits}, [&] {
    return mtl_loss(est, ref, logits, 2, 0.5).total;
  });
  CHECK(err < 1e-4);
}
