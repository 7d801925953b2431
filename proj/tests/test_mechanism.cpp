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
#include <sstream>

#include "ferret/mechanism.hpp"
#include "ferret/rng.hpp"

using namespace ferret;

namespace {

Eigen::VectorXd Vec(std::initializer_list<double> values) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(values.size()));
  Eigen::Index i = 0;
  for (double x : values) v[i++] = x;
  return v;
}

// Set of (tensor, offset) pairs covered by a partition, for the disjoint
// cover invariant.
std::vector<std::vector<bool>> CoverageMap(
    const GroupPartition& partition,
    const std::vector<Eigen::Index>& lengths) {
  std::vector<std::vector<bool>> covered;
  for (Eigen::Index len : lengths) covered.emplace_back(len, false);
  for (const auto& group : partition.groups) {
    for (const Span& span : group) {
      for (Eigen::Index i = 0; i < span.length; ++i) {
        REQUIRE_FALSE(covered[span.tensor][span.offset + i]);
        covered[span.tensor][span.offset + i] = true;
      }
    }
  }
  return covered;
}

}  // namespace

TEST_CASE("partition schemes") {
  const std::vector<Eigen::Index> five = {3, 1, 4, 1, 5};

  const auto max = PartitionGroups(five, PartitionScheme::Max());
  CHECK(max.num_groups() == 5);
  for (int g = 0; g < 5; ++g) {
    CHECK(max.groups[g].size() == 1);
    CHECK(max.group_dims[g] == five[g]);
  }

  const auto two = PartitionGroups(five, PartitionScheme::Two());
  CHECK(two.num_groups() == 2);
  CHECK(two.groups[0].size() == 3);  // first group takes the extra tensor
  CHECK(two.groups[1].size() == 2);
  CHECK(two.group_dims[0] == 3 + 1 + 4);
  CHECK(two.group_dims[1] == 1 + 5);

  std::vector<Eigen::Index> seventeen(17, 2);
  const auto buckets =
      PartitionGroups(seventeen, PartitionScheme::BucketOfK(8));
  CHECK(buckets.num_groups() == 3);
  CHECK(buckets.groups[0].size() == 8);
  CHECK(buckets.groups[1].size() == 8);
  CHECK(buckets.groups[2].size() == 1);

  // Every scalar covered exactly once, order preserved.
  for (const auto& partition : {max, two, buckets}) {
    const auto& lengths = partition.num_tensors == 5 ? five : seventeen;
    const auto covered = CoverageMap(partition, lengths);
    for (const auto& tensor : covered) {
      for (bool c : tensor) CHECK(c);
    }
    int last_tensor = -1;
    for (const auto& group : partition.groups) {
      for (const Span& span : group) {
        CHECK(span.tensor > last_tensor);
        last_tensor = span.tensor;
      }
    }
  }

  CHECK_THROWS_AS(PartitionGroups({}, PartitionScheme::Max()),
                  std::invalid_argument);
  CHECK_THROWS_AS(PartitionGroups({3, 0}, PartitionScheme::Max()),
                  std::invalid_argument);
  CHECK_THROWS_AS(PartitionGroups(five, PartitionScheme::BucketOfK(0)),
                  std::invalid_argument);
}

TEST_CASE("sign projection") {
  CHECK(SignProjection(Vec({3, 0}), Vec({1, 0})) == +1);
  CHECK(SignProjection(Vec({3, 0}), Vec({0, 1})) == +1);  // zero dot tie-break
  CHECK(SignProjection(Vec({-3, 0}), Vec({1, 0})) == -1);
  CHECK(SignProjection(Vec({0, 0}), Vec({0, 1})) == +1);  // zero gradient
  CHECK_THROWS_AS(SignProjection(Vec({1, 2, 3}), Vec({1, 0})),
                  std::invalid_argument);
  CHECK_THROWS_AS(SignProjection(Vec({1, 2}), Vec({1, 1})),
                  std::invalid_argument);

  // Sign uniformity over fresh directions for a fixed gradient.
  const Eigen::VectorXd g = Vec({1, 2, -1});
  const int n = 100000;
  int plus = 0;
  for (int i = 0; i < n; ++i) {
    const auto u = SampleUnitVector(3, {101, StreamDomain::kDirection,
                                        static_cast<std::uint64_t>(i), 0});
    if (SignProjection(g, u) == +1) ++plus;
  }
  CHECK(std::abs(double(plus) / n - 0.5) < 4.0 * std::sqrt(0.25 / n));
}

TEST_CASE("ferret step: silent and deterministic paths") {
  const auto partition = PartitionGroups({2}, PartitionScheme::Max());
  const std::vector<Eigen::VectorXd> grads = {Vec({2, 0})};

  const auto silent = FerretStep(grads, partition, {0.0, 1.0, 0.0}, 0, 7);
  REQUIRE(silent.size() == 1);
  CHECK_FALSE(silent[0].fired);
  CHECK(silent[0].sign == 0);
  CHECK(silent[0].delta[0] == 0.0);
  CHECK(silent[0].delta[1] == 0.0);

  // p = 1: the whole path is determined by the seed. The direction the
  // mechanism must use is the Direction stream draw, so the update is
  // sign(<g,u>) * C * u for that exact u.
  const auto fired = FerretStep(grads, partition, {1.0, 1.0, 0.0}, 3, 7);
  REQUIRE(fired.size() == 1);
  CHECK(fired[0].fired);
  const auto u = SampleUnitVector(2, {7, StreamDomain::kDirection, 3, 0});
  const int sign = SignProjection(grads[0], u);
  CHECK(fired[0].sign == sign);
  for (int i = 0; i < 2; ++i) {
    CHECK(fired[0].delta[i] == sign * u[i]);
    CHECK(fired[0].direction[i] == u[i]);
  }

  CHECK_THROWS_AS(
      FerretStep({Vec({1, 2, 3})}, partition, {1.0, 1.0, 0.0}, 0, 7),
      std::invalid_argument);
}

TEST_CASE("release alphabet is {0, +Cu, -Cu} without dither") {
  const auto partition = PartitionGroups({4, 3}, PartitionScheme::Max());
  const double C = 2.5;
  for (int step = 0; step < 200; ++step) {
    std::vector<Eigen::VectorXd> grads;
    RngEngine e({91, StreamDomain::kNoise, static_cast<std::uint64_t>(step), 0});
    for (Eigen::Index d : {4, 3}) {
      Eigen::VectorXd g(d);
      for (Eigen::Index i = 0; i < d; ++i) g[i] = e.NextGaussian();
      grads.push_back(g);
    }
    const auto updates =
        FerretStep(grads, partition, {0.4, C, 0.0}, step, 123);
    for (const GroupUpdate& u : updates) {
      if (!u.fired) {
        CHECK(u.delta.isZero(0.0));
      } else {
        CHECK(std::abs(u.delta.norm() - C) < 1e-9);
        for (Eigen::Index i = 0; i < u.delta.size(); ++i) {
          CHECK(u.delta[i] == u.sign * C * u.direction[i]);
        }
      }
    }
  }
}

TEST_CASE("dither rides on both branches") {
  const auto partition = PartitionGroups({8}, PartitionScheme::Max());
  const double sigma_d = 0.01;
  const std::vector<Eigen::VectorXd> grads = {Vec({1, 1, 1, 1, 1, 1, 1, 1})};
  int fired_seen = 0, silent_seen = 0;
  for (int step = 0; step < 300; ++step) {
    const auto updates =
        FerretStep(grads, partition, {0.5, 1.0, sigma_d}, step, 5);
    const GroupUpdate& u = updates[0];
    if (u.fired) {
      ++fired_seen;
      const Eigen::VectorXd core = double(u.sign) * u.direction;
      CHECK((u.delta - core).norm() <= 10.0 * sigma_d * std::sqrt(8.0));
    } else {
      ++silent_seen;
      CHECK(u.delta.norm() > 0.0);  // pure dither
      CHECK(u.delta.norm() <= 10.0 * sigma_d * std::sqrt(8.0));
    }
  }
  CHECK(fired_seen > 0);
  CHECK(silent_seen > 0);
}

TEST_CASE("firing counts concentrate around G*T*p") {
  const int G = 8, T = 1000;
  const double p = 0.05;
  const auto partition =
      PartitionGroups(std::vector<Eigen::Index>(G, 1), PartitionScheme::Max());
  const std::vector<Eigen::VectorXd> grads(G, Vec({1}));
  std::int64_t total = 0;
  for (int t = 0; t < T; ++t) {
    for (const auto& u : FerretStep(grads, partition, {p, 1.0, 0.0}, t, 17)) {
      if (u.fired) ++total;
    }
  }
  const double mean = G * T * p;
  const double sd = std::sqrt(G * T * p * (1.0 - p));
  CHECK(std::abs(double(total) - mean) < 4.0 * sd);
}

TEST_CASE("apply updates") {
  const auto partition = PartitionGroups({2, 2}, PartitionScheme::Max());
  std::vector<Eigen::VectorXd> params = {Vec({10, 20}), Vec({30, 40})};

  // Hand-built update: group 0 fired with u = e1, sign = -1, C = 1.
  GroupUpdate down;
  down.step = 0;
  down.group = 0;
  down.fired = true;
  down.sign = -1;
  down.direction = Vec({1, 0});
  down.delta = Vec({-1, 0});
  GroupUpdate silent;
  silent.step = 0;
  silent.group = 1;
  silent.delta = Vec({0, 0});

  const auto next = ApplyUpdates(params, partition, {down, silent}, 1.0);
  CHECK(next[0][0] == 11.0);  // negative sign raises the scalar
  CHECK(next[0][1] == 20.0);
  CHECK(next[1][0] == 30.0);
  CHECK(next[1][1] == 40.0);

  const auto unchanged = ApplyUpdates(params, partition, {silent}, 0.7);
  for (int t = 0; t < 2; ++t) {
    for (int i = 0; i < 2; ++i) CHECK(unchanged[t][i] == params[t][i]);
  }
}

TEST_CASE("apply updates is additive across groups") {
  const auto partition = PartitionGroups({3, 2}, PartitionScheme::Two());
  REQUIRE(partition.num_groups() == 2);
  std::vector<Eigen::VectorXd> params = {Vec({1, 2, 3}), Vec({4, 5})};
  std::vector<Eigen::VectorXd> grads = {Vec({1, -2, 0.5, 3, -1})};
  // Two-scheme with two tensors puts one tensor per group.
  grads = {Vec({1, -2, 0.5}), Vec({3, -1})};
  const auto updates = FerretStep(grads, partition, {1.0, 1.5, 0.0}, 0, 99);
  const double lr = 0.3;

  const auto joint = ApplyUpdates(params, partition, updates, lr);
  auto sequential = ApplyUpdates(params, partition, {updates[0]}, lr);
  sequential = ApplyUpdates(sequential, partition, {updates[1]}, lr);
  for (int t = 0; t < 2; ++t) {
    for (Eigen::Index i = 0; i < params[t].size(); ++i) {
      CHECK(joint[t][i] == doctest::Approx(sequential[t][i]).epsilon(1e-15));
    }
  }

  // Scalar-loop oracle.
  std::vector<Eigen::VectorXd> oracle = params;
  for (const GroupUpdate& u : updates) {
    Eigen::Index at = 0;
    for (const Span& span : partition.groups[u.group]) {
      for (Eigen::Index i = 0; i < span.length; ++i) {
        oracle[span.tensor][span.offset + i] -= lr * u.delta[at + i];
      }
      at += span.length;
    }
  }
  for (int t = 0; t < 2; ++t) {
    for (Eigen::Index i = 0; i < params[t].size(); ++i) {
      CHECK(joint[t][i] == oracle[t][i]);
    }
  }
}

TEST_CASE("gather and scatter are inverse over the partition") {
  const auto partition = PartitionGroups({3, 1, 2}, PartitionScheme::Two());
  const std::vector<Eigen::VectorXd> tensors = {Vec({1, 2, 3}), Vec({4}),
                                                Vec({5, 6})};
  const auto groups = GatherGroups(partition, tensors);
  REQUIRE(groups.size() == 2);
  CHECK(groups[0].size() == 4);
  CHECK(groups[1].size() == 2);
  CHECK(groups[0][3] == 4.0);

  std::vector<GroupUpdate> updates(2);
  for (int g = 0; g < 2; ++g) {
    updates[g].group = g;
    updates[g].fired = true;
    updates[g].delta = groups[g];
  }
  const auto back = ScatterUpdates(partition, updates, {3, 1, 2});
  for (std::size_t t = 0; t < tensors.size(); ++t) {
    for (Eigen::Index i = 0; i < tensors[t].size(); ++i) {
      CHECK(back[t][i] == tensors[t][i]);
    }
  }
}

TEST_CASE("the private payload is exactly one bit per fired group") {
  for (const Eigen::Index dim : {Eigen::Index{1}, Eigen::Index{10},
                                 Eigen::Index{10000}}) {
    const auto partition = PartitionGroups({dim}, PartitionScheme::Max());
    Eigen::VectorXd g(dim);
    RngEngine e({55, StreamDomain::kNoise, static_cast<std::uint64_t>(dim), 0});
    for (Eigen::Index i = 0; i < dim; ++i) g[i] = e.NextGaussian();
    const auto updates = FerretStep({g}, partition, {1.0, 1.0, 0.0}, 0, 8);
    const SignPayload payload = PackSigns(updates);
    CHECK(payload.bit_count == 1);  // independent of d_g
    CHECK(payload.bytes.size() == 1);
  }

  // Silent groups contribute zero bits.
  const auto partition = PartitionGroups({4}, PartitionScheme::Max());
  const auto updates =
      FerretStep({Vec({1, 2, 3, 4})}, partition, {0.0, 1.0, 0.0}, 0, 8);
  CHECK(PackSigns(updates).bit_count == 0);
}

TEST_CASE("transcript reconstructs from seed plus payload") {
  const auto partition = PartitionGroups({3, 5, 2}, PartitionScheme::Max());
  for (double dither : {0.0, 0.02}) {
    const MechanismConfig config{0.6, 1.25, dither};
    SignPayload payload;
    std::vector<std::vector<GroupUpdate>> steps;
    for (int t = 0; t < 50; ++t) {
      std::vector<Eigen::VectorXd> grads;
      RngEngine e({66, StreamDomain::kNoise, static_cast<std::uint64_t>(t), 0});
      for (Eigen::Index d : {3, 5, 2}) {
        Eigen::VectorXd g(d);
        for (Eigen::Index i = 0; i < d; ++i) g[i] = e.NextGaussian();
        grads.push_back(g);
      }
      auto updates = FerretStep(grads, partition, config, t, 1234);
      const SignPayload step_bits = PackSigns(updates);
      for (std::size_t b = 0; b < step_bits.bit_count; ++b) {
        payload.AppendBit(step_bits.BitAt(b));
      }
      steps.push_back(std::move(updates));
    }
    std::size_t cursor = 0;
    for (int t = 0; t < 50; ++t) {
      const auto rebuilt =
          ReconstructStep(partition, config, t, 1234, payload, cursor);
      REQUIRE(rebuilt.size() == steps[t].size());
      for (std::size_t g = 0; g < rebuilt.size(); ++g) {
        CHECK(rebuilt[g].fired == steps[t][g].fired);
        CHECK(rebuilt[g].sign == steps[t][g].sign);
        REQUIRE(rebuilt[g].delta.size() == steps[t][g].delta.size());
        for (Eigen::Index i = 0; i < rebuilt[g].delta.size(); ++i) {
          CHECK(rebuilt[g].delta[i] == steps[t][g].delta[i]);
        }
      }
    }
    CHECK(cursor == payload.bit_count);
  }
}

TEST_CASE("update log serialization and determinism") {
  const auto partition = PartitionGroups({2, 2}, PartitionScheme::Max());
  const std::vector<Eigen::VectorXd> grads = {Vec({1, -1}), Vec({0.5, 2})};
  UpdateLog log_a, log_b;
  for (int t = 0; t < 20; ++t) {
    log_a.Append(FerretStep(grads, partition, {0.5, 1.0, 0.0}, t, 3));
    log_b.Append(FerretStep(grads, partition, {0.5, 1.0, 0.0}, t, 3));
  }
  std::ostringstream a, b;
  WriteUpdateLogCsv(a, log_a);
  WriteUpdateLogCsv(b, log_b);
  CHECK(a.str() == b.str());
  CHECK(a.str().rfind("step,group,fired,sign\n", 0) == 0);
  CHECK(log_a.records.size() == 40);
}
