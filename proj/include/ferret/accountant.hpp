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

#ifndef FERRET_ACCOUNTANT_HPP_
#define FERRET_ACCOUNTANT_HPP_

#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

namespace ferret {

// Requested budget exceeds the head-room ceiling: no firing probability in
// (0, 1) can realize it. Deliberately not a clamp; clamping to p = 1 would
// overstate privacy.
class BudgetInfeasibleError : public std::runtime_error {
 public:
  BudgetInfeasibleError(double epsilon, double epsilon_max);
  double epsilon() const { return epsilon_; }
  double epsilon_max() const { return epsilon_max_; }

 private:
  double epsilon_;
  double epsilon_max_;
};

// Budget inputs: G parameter groups trained for T steps with Poisson
// subsampling rate s = B/N, targeting a leakage of epsilon_target nats.
struct AccountantConfig {
  std::int64_t groups = 1;          // G >= 1
  std::int64_t steps = 1;           // T >= 1
  double subsample_rate = 1.0;      // s in (0, 1]
  double epsilon_target = 0.0;      // nats, > 0
};

// Resolved plan for a feasible budget.
struct PrivacyPlan {
  double p_star = 0.0;           // largest firing probability meeting the budget
  double epsilon_max = 0.0;      // head-room ceiling G*T*s*ln2, attained at p=1
  double epsilon_achieved = 0.0; // total leakage at p_star; equals the target
};

// Bound parameters for the dithered release: Renyi order alpha > 1, firing
// probability p, release magnitude C > 0, dither std-dev sigma_d > 0. The
// undithered mechanism (sigma_d = 0) has infinite Renyi divergence, so
// sigma_d = 0 is rejected.
struct DitherRdpQuery {
  double alpha = 2.0;
  double p = 0.0;
  double magnitude = 1.0;  // C
  double dither_sigma = 1.0;
};

// Total leakage epsilon(p) = G * T * s * p * ln 2, in nats.
double EpsilonTotal(std::int64_t groups, std::int64_t steps,
                    double subsample_rate, double p);

// Head-room ceiling: EpsilonTotal at p = 1.
double EpsilonMax(std::int64_t groups, std::int64_t steps,
                  double subsample_rate);

// Largest p in (0, 1) with EpsilonTotal(G, T, s, p) == epsilon, i.e.
// epsilon / (G * T * s * ln 2). Throws BudgetInfeasibleError when
// epsilon >= EpsilonMax.
double OptimalP(double epsilon, std::int64_t groups, std::int64_t steps,
                double subsample_rate);

// Subsampling amplification: a mechanism leaking epsilon_0 nats on the
// subsample leaks s * epsilon_0 after Poisson sampling at rate s.
double AmplifiedEpsilon(double epsilon_0, double subsample_rate);

// Renyi divergence upper bound for the dithered release:
//   p^alpha/(alpha-1) * exp(2*alpha*(alpha-1)*C^2/sigma_d^2)
//     + p^alpha/(alpha-1).
// Mathematically finite for every sigma_d > 0, but the value overflows
// double range once the exponent passes ~710; this form then returns +inf.
// LogRdpDitherBound carries the extreme regimes.
double RdpDitherBound(const DitherRdpQuery& query);

// Natural log of RdpDitherBound, finite for every valid query with p > 0
// (p == 0 gives -inf, the log of a zero bound). Computed directly in log
// space, no intermediate overflow.
double LogRdpDitherBound(const DitherRdpQuery& query);

// Evaluates the bound at every order and returns (best order, best bound),
// minimizing in log space.
std::pair<double, double> RdpOrderSweep(double p, double magnitude,
                                        double dither_sigma,
                                        const std::vector<double>& orders);

// Resolves a full plan: p_star, head-room, achieved leakage.
PrivacyPlan MakePlan(const AccountantConfig& config);

// Display helpers; epsilon is kept in nats everywhere else.
double NatsToBits(double nats);
double BitsToNats(double bits);

}  // namespace ferret

#endif  // FERRET_ACCOUNTANT_HPP_
