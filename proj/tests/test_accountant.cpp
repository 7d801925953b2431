// Copyright 2026 The ferret-lab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <limits>
#include <numbers>

#include <mpfr.h>

#include "ferret/accountant.hpp"

using ferret::AmplifiedEpsilon;
using ferret::BudgetInfeasibleError;
using ferret::DitherRdpQuery;
using ferret::EpsilonMax;
using ferret::EpsilonTotal;
using ferret::LogRdpDitherBound;
using ferret::MakePlan;
using ferret::NatsToBits;
using ferret::OptimalP;
using ferret::RdpDitherBound;
using ferret::RdpOrderSweep;

namespace {

// 256-bit evaluation of p^a/(a-1) * exp(2a(a-1)C^2/s^2) + p^a/(a-1),
// independent of the double-precision implementation path.
double RdpBoundOracle(double alpha, double p, double magnitude, double sigma) {
  constexpr mpfr_prec_t kPrec = 256;  // ~77 decimal digits
  mpfr_t a, pw, lead, expo, term1, result, tmp;
  mpfr_inits2(kPrec, a, pw, lead, expo, term1, result, tmp, (mpfr_ptr)nullptr);
  mpfr_set_d(a, alpha, MPFR_RNDN);
  mpfr_set_d(pw, p, MPFR_RNDN);
  mpfr_set_d(tmp, alpha, MPFR_RNDN);
  mpfr_pow(pw, pw, tmp, MPFR_RNDN);                     // p^alpha
  mpfr_sub_d(tmp, a, 1.0, MPFR_RNDN);                   // alpha - 1
  mpfr_div(lead, pw, tmp, MPFR_RNDN);                   // p^alpha/(alpha-1)
  mpfr_mul(expo, a, tmp, MPFR_RNDN);                    // alpha*(alpha-1)
  mpfr_mul_d(expo, expo, 2.0 * magnitude * magnitude, MPFR_RNDN);
  mpfr_div_d(expo, expo, sigma * sigma, MPFR_RNDN);     // 2a(a-1)C^2/s^2
  mpfr_exp(expo, expo, MPFR_RNDN);
  mpfr_mul(term1, lead, expo, MPFR_RNDN);
  mpfr_add(result, term1, lead, MPFR_RNDN);
  const double out = mpfr_get_d(result, MPFR_RNDN);
  mpfr_clears(a, pw, lead, expo, term1, result, tmp, (mpfr_ptr)nullptr);
  return out;
}

}  // namespace

TEST_CASE("total leakage formula") {
  CHECK(EpsilonTotal(2, 1000, 0.005, 0.0) == 0.0);
  CHECK(EpsilonTotal(2, 1000, 0.005, 0.072) ==
        doctest::Approx(0.4990).epsilon(1e-3));
  CHECK(EpsilonTotal(200, 1000, 0.005, 1.0) ==
        doctest::Approx(693.1).epsilon(1e-3));
  CHECK_THROWS_AS(EpsilonTotal(0, 1, 1.0, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(EpsilonTotal(1, 0, 1.0, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(EpsilonTotal(1, 1, 0.0, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(EpsilonTotal(1, 1, 1.0, 1.5), std::invalid_argument);
}

TEST_CASE("head-room ceiling") {
  CHECK(EpsilonMax(2, 1000, 0.005) == doctest::Approx(6.93).epsilon(0.0015));
  CHECK(EpsilonMax(1, 1, 1.0) == std::numbers::ln2);
  CHECK(EpsilonMax(50, 1000, 0.005) == doctest::Approx(173.0).epsilon(0.005));
}

TEST_CASE("single release with no amplification leaks exactly ln 2") {
  CHECK(EpsilonTotal(1, 1, 1.0, 1.0) == std::numbers::ln2);
}

TEST_CASE("optimal firing probability") {
  CHECK(OptimalP(0.5, 2, 1000, 0.005) == doctest::Approx(0.0722).epsilon(5e-3));
  CHECK(OptimalP(0.5, 200, 1000, 0.005) ==
        doctest::Approx(7.2e-4).epsilon(0.05));
  const double half = EpsilonMax(7, 321, 0.125) / 2.0;
  CHECK(OptimalP(half, 7, 321, 0.125) == doctest::Approx(0.5).epsilon(1e-12));

  CHECK_THROWS_AS(OptimalP(EpsilonMax(2, 1000, 0.005), 2, 1000, 0.005),
                  BudgetInfeasibleError);
  CHECK_THROWS_AS(OptimalP(100.0, 2, 1000, 0.005), BudgetInfeasibleError);
  CHECK_THROWS_AS(OptimalP(0.0, 2, 1000, 0.005), std::invalid_argument);
  CHECK_THROWS_AS(OptimalP(-1.0, 2, 1000, 0.005), std::invalid_argument);
  try {
    OptimalP(10.0, 2, 1000, 0.005);
    FAIL("expected BudgetInfeasibleError");
  } catch (const BudgetInfeasibleError& e) {
    CHECK(e.epsilon() == 10.0);
    CHECK(e.epsilon_max() == doctest::Approx(6.93).epsilon(0.0015));
  }
}

TEST_CASE("round trip: optimal_p of epsilon_total is the identity") {
  const double ps[] = {1e-6, 1e-3, 0.072, 0.25, 0.5, 0.999};
  for (double p : ps) {
    const double eps = EpsilonTotal(8, 500, 0.01, p);
    CHECK(OptimalP(eps, 8, 500, 0.01) == doctest::Approx(p).epsilon(1e-12));
  }
}

TEST_CASE("linearity in p") {
  const double base = EpsilonTotal(3, 700, 0.02, 0.1);
  for (double lambda : {0.0, 0.25, 1.0, 3.0, 9.9}) {
    CHECK(EpsilonTotal(3, 700, 0.02, lambda * 0.1) ==
          doctest::Approx(lambda * base).epsilon(1e-12));
  }
}

TEST_CASE("subsampling amplification") {
  CHECK(AmplifiedEpsilon(0.37, 1.0) == 0.37);
  CHECK(AmplifiedEpsilon(0.0, 0.25) == 0.0);
  CHECK(AmplifiedEpsilon(std::numbers::ln2, 0.005) ==
        doctest::Approx(0.003466).epsilon(1e-3));
  // High-precision cross-check of the plain product.
  mpfr_t x;
  mpfr_init2(x, 256);
  mpfr_set_d(x, std::numbers::ln2, MPFR_RNDN);
  mpfr_mul_d(x, x, 0.005, MPFR_RNDN);
  CHECK(AmplifiedEpsilon(std::numbers::ln2, 0.005) ==
        doctest::Approx(mpfr_get_d(x, MPFR_RNDN)).epsilon(1e-14));
  mpfr_clear(x);
  CHECK_THROWS_AS(AmplifiedEpsilon(-0.1, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(AmplifiedEpsilon(0.1, 0.0), std::invalid_argument);
}

TEST_CASE("fused formula equals G*T times the amplified per-step leak") {
  const std::int64_t G = 13, T = 977;
  const double s = 0.0375, p = 0.21;
  CHECK(EpsilonTotal(G, T, s, p) ==
        double(G) * double(T) * AmplifiedEpsilon(p * std::numbers::ln2, s));
}

TEST_CASE("dither RDP bound value against the high-precision oracle") {
  const double bound = RdpDitherBound({2.0, 0.1, 1.0, 2.0});
  CHECK(bound == doctest::Approx(0.037183).epsilon(1e-4));
  const double oracle = RdpBoundOracle(2.0, 0.1, 1.0, 2.0);
  CHECK(std::abs(bound - oracle) / oracle < 1e-12);

  // A few more points across the parameter space.
  const double alphas[] = {1.5, 2.0, 8.0};
  const double ps[] = {0.01, 0.3, 1.0};
  const double sigmas[] = {0.5, 1.0, 4.0};
  for (double a : alphas) {
    for (double p : ps) {
      for (double s : sigmas) {
        const double got = RdpDitherBound({a, p, 0.7, s});
        const double want = RdpBoundOracle(a, p, 0.7, s);
        CHECK(std::abs(got - want) / want < 1e-12);
      }
    }
  }
}

TEST_CASE("dither RDP bound edge behavior") {
  CHECK(RdpDitherBound({2.0, 0.0, 1.0, 1.0}) == 0.0);
  CHECK_THROWS_AS(RdpDitherBound({1.0, 0.1, 1.0, 1.0}), std::invalid_argument);
  CHECK_THROWS_AS(RdpDitherBound({0.5, 0.1, 1.0, 1.0}), std::invalid_argument);
  CHECK_THROWS_AS(RdpDitherBound({2.0, 0.1, 1.0, 0.0}), std::invalid_argument);
  CHECK_THROWS_AS(RdpDitherBound({2.0, 0.1, 1.0, -1.0}),
                  std::invalid_argument);

  // Doubling sigma never increases the bound.
  double sigma = 1e-3;
  double prev = LogRdpDitherBound({2.0, 0.2, 1.0, sigma});
  for (int i = 0; i < 20; ++i) {
    sigma *= 2.0;
    const double next = LogRdpDitherBound({2.0, 0.2, 1.0, sigma});
    CHECK(next <= prev);
    prev = next;
  }
}

TEST_CASE("undithered limit blows up: bound exceeds any threshold") {
  // sigma -> 0+ at fixed p: the divergence of the noiseless mechanism.
  for (double threshold : {1e6, 1e12, 1e100}) {
    const double log_bound = LogRdpDitherBound({2.0, 0.5, 1.0, 1e-4});
    CHECK(log_bound > std::log(threshold));
  }
  CHECK(RdpDitherBound({2.0, 0.5, 1.0, 1e-3}) > 1e6);
}

TEST_CASE("order sweep minimizes over the list") {
  const auto [alpha_single, bound_single] =
      RdpOrderSweep(0.1, 1.0, 2.0, {3.0});
  CHECK(alpha_single == 3.0);
  CHECK(bound_single == RdpDitherBound({3.0, 0.1, 1.0, 2.0}));

  // Brute force over the list via the oracle.
  const std::vector<double> orders = {1.5, 2.0, 4.0, 8.0};
  const auto [best_alpha, best_bound] = RdpOrderSweep(0.01, 1.0, 1.0, orders);
  double want_alpha = orders[0];
  double want = RdpBoundOracle(orders[0], 0.01, 1.0, 1.0);
  for (double a : orders) {
    const double b = RdpBoundOracle(a, 0.01, 1.0, 1.0);
    if (b < want) {
      want = b;
      want_alpha = a;
    }
  }
  CHECK(best_alpha == want_alpha);
  CHECK(best_bound == doctest::Approx(want).epsilon(1e-12));

  for (double a : orders) {
    CHECK(std::isfinite(LogRdpDitherBound({a, 0.01, 1.0, 1.0})));
  }
  CHECK_THROWS_AS(RdpOrderSweep(0.1, 1.0, 1.0, {}), std::invalid_argument);
}

TEST_CASE("plan assembly and unit conversion") {
  const auto plan = MakePlan({2, 1000, 0.005, 0.5});
  CHECK(plan.p_star == doctest::Approx(0.0722).epsilon(5e-3));
  CHECK(plan.epsilon_max == doctest::Approx(6.93).epsilon(0.0015));
  CHECK(plan.epsilon_achieved == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(NatsToBits(std::numbers::ln2) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(ferret::BitsToNats(NatsToBits(0.37)) ==
        doctest::Approx(0.37).epsilon(1e-15));
}
