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

#include "ferret/accountant.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace ferret {
namespace {

constexpr double kLn2 = std::numbers::ln2;

void CheckGts(std::int64_t groups, std::int64_t steps, double subsample_rate) {
  if (groups < 1) throw std::invalid_argument("accountant: G must be >= 1");
  if (steps < 1) throw std::invalid_argument("accountant: T must be >= 1");
  if (!(subsample_rate > 0.0 && subsample_rate <= 1.0)) {
    throw std::invalid_argument("accountant: s must be in (0, 1]");
  }
}

void CheckQuery(const DitherRdpQuery& q) {
  if (!(q.alpha > 1.0)) {
    throw std::invalid_argument("accountant: Renyi order alpha must be > 1");
  }
  if (!(q.p >= 0.0 && q.p <= 1.0)) {
    throw std::invalid_argument("accountant: p must be in [0, 1]");
  }
  if (!(q.magnitude > 0.0)) {
    throw std::invalid_argument("accountant: magnitude C must be > 0");
  }
  if (!(q.dither_sigma > 0.0)) {
    throw std::invalid_argument(
        "accountant: dither sigma must be > 0 (the undithered bound is "
        "infinite)");
  }
}

std::string InfeasibleMessage(double epsilon, double epsilon_max) {
  std::ostringstream os;
  os << "budget infeasible: epsilon " << epsilon
     << " is not below epsilon_max " << epsilon_max
     << "; no p in (0, 1) can realize it";
  return os.str();
}

}  // namespace

BudgetInfeasibleError::BudgetInfeasibleError(double epsilon, double epsilon_max)
    : std::runtime_error(InfeasibleMessage(epsilon, epsilon_max)),
      epsilon_(epsilon),
      epsilon_max_(epsilon_max) {}

double EpsilonTotal(std::int64_t groups, std::int64_t steps,
                    double subsample_rate, double p) {
  CheckGts(groups, steps, subsample_rate);
  if (!(p >= 0.0 && p <= 1.0)) {
    throw std::invalid_argument("accountant: p must be in [0, 1]");
  }
  // Composed from the amplification op so the fused and the standalone
  // routes agree bit for bit: G * T * (s * (p * ln 2)).
  return static_cast<double>(groups) * static_cast<double>(steps) *
         AmplifiedEpsilon(p * kLn2, subsample_rate);
}

double EpsilonMax(std::int64_t groups, std::int64_t steps,
                  double subsample_rate) {
  return EpsilonTotal(groups, steps, subsample_rate, 1.0);
}

double OptimalP(double epsilon, std::int64_t groups, std::int64_t steps,
                double subsample_rate) {
  CheckGts(groups, steps, subsample_rate);
  if (!(epsilon > 0.0)) {
    throw std::invalid_argument("accountant: epsilon must be > 0");
  }
  const double ceiling = EpsilonMax(groups, steps, subsample_rate);
  if (epsilon >= ceiling) throw BudgetInfeasibleError(epsilon, ceiling);
  return epsilon / (static_cast<double>(groups) * static_cast<double>(steps) *
                    subsample_rate * kLn2);
}

double AmplifiedEpsilon(double epsilon_0, double subsample_rate) {
  if (epsilon_0 < 0.0) {
    throw std::invalid_argument("accountant: epsilon_0 must be >= 0");
  }
  if (!(subsample_rate > 0.0 && subsample_rate <= 1.0)) {
    throw std::invalid_argument("accountant: s must be in (0, 1]");
  }
  return subsample_rate * epsilon_0;
}

double LogRdpDitherBound(const DitherRdpQuery& q) {
  CheckQuery(q);
  if (q.p == 0.0) return -std::numeric_limits<double>::infinity();
  // bound = p^a/(a-1) * (exp(E) + 1) with E = 2a(a-1)C^2/sigma^2, so
  // log bound = a*log(p) - log(a-1) + E + log1p(exp(-E)).
  const double exponent = 2.0 * q.alpha * (q.alpha - 1.0) * q.magnitude *
                          q.magnitude / (q.dither_sigma * q.dither_sigma);
  return q.alpha * std::log(q.p) - std::log(q.alpha - 1.0) + exponent +
         std::log1p(std::exp(-exponent));
}

double RdpDitherBound(const DitherRdpQuery& q) {
  CheckQuery(q);
  if (q.p == 0.0) return 0.0;
  return std::exp(LogRdpDitherBound(q));
}

std::pair<double, double> RdpOrderSweep(double p, double magnitude,
                                        double dither_sigma,
                                        const std::vector<double>& orders) {
  if (orders.empty()) {
    throw std::invalid_argument("accountant: order list must be non-empty");
  }
  double best_alpha = orders.front();
  double best_log = std::numeric_limits<double>::infinity();
  bool first = true;
  for (double alpha : orders) {
    const double log_bound =
        LogRdpDitherBound({alpha, p, magnitude, dither_sigma});
    if (first || log_bound < best_log) {
      best_alpha = alpha;
      best_log = log_bound;
      first = false;
    }
  }
  return {best_alpha, std::exp(best_log)};
}

PrivacyPlan MakePlan(const AccountantConfig& config) {
  PrivacyPlan plan;
  plan.epsilon_max =
      EpsilonMax(config.groups, config.steps, config.subsample_rate);
  plan.p_star = OptimalP(config.epsilon_target, config.groups, config.steps,
                         config.subsample_rate);
  plan.epsilon_achieved = EpsilonTotal(config.groups, config.steps,
                                       config.subsample_rate, plan.p_star);
  return plan;
}

double NatsToBits(double nats) { return nats / kLn2; }

double BitsToNats(double bits) { return bits * kLn2; }

}  // namespace ferret
