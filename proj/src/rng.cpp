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

#include "ferret/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace ferret {
namespace {

inline std::uint64_t RotL(std::uint64_t x, int k) {
  return (x << k) | (x >> (64 - k));
}

// splitmix64 finalizer.
inline std::uint64_t Mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

inline std::uint64_t Absorb(std::uint64_t h, std::uint64_t v) {
  return Mix64(h ^ (v + 0x9E3779B97F4A7C15ull + (h << 12) + (h >> 4)));
}

inline std::uint64_t SplitMixNext(std::uint64_t& s) {
  s += 0x9E3779B97F4A7C15ull;
  return Mix64(s);
}

}  // namespace

RngEngine::RngEngine(const RngStream& stream) {
  std::uint64_t key = stream.seed;
  key = Absorb(key, static_cast<std::uint64_t>(stream.domain));
  key = Absorb(key, stream.step);
  key = Absorb(key, stream.group);
  std::uint64_t sm = key;
  for (auto& word : state_) word = SplitMixNext(sm);
  // xoshiro requires a nonzero state; unreachable in practice.
  if ((state_[0] | state_[1] | state_[2] | state_[3]) == 0) state_[0] = 1;
}

std::uint64_t RngEngine::NextU64() {
  const std::uint64_t result = RotL(state_[0] + state_[3], 23) + state_[0];
  const std::uint64_t t = state_[1] << 17;
  state_[2] ^= state_[0];
  state_[3] ^= state_[1];
  state_[1] ^= state_[2];
  state_[0] ^= state_[3];
  state_[2] ^= t;
  state_[3] = RotL(state_[3], 45);
  return result;
}

double RngEngine::NextDouble() {
  return static_cast<double>(NextU64() >> 11) * 0x1.0p-53;
}

double RngEngine::NextGaussian() {
  if (has_spare_gaussian_) {
    has_spare_gaussian_ = false;
    return spare_gaussian_;
  }
  const double u1 = 1.0 - NextDouble();  // (0, 1], keeps log finite
  const double u2 = NextDouble();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * std::numbers::pi * u2;
  spare_gaussian_ = r * std::sin(a);
  has_spare_gaussian_ = true;
  return r * std::cos(a);
}

Eigen::VectorXd SampleUnitVector(int dim, const RngStream& stream) {
  if (dim < 1) {
    throw std::invalid_argument("SampleUnitVector: dim must be >= 1");
  }
  RngEngine engine(stream);
  Eigen::VectorXd v(dim);
  double norm_sq = 0.0;
  do {
    for (int i = 0; i < dim; ++i) v[i] = engine.NextGaussian();
    norm_sq = v.squaredNorm();
  } while (norm_sq == 0.0);
  v /= std::sqrt(norm_sq);
  return v;
}

bool Bernoulli(double p, const RngStream& stream) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw std::invalid_argument("Bernoulli: p must be in [0, 1]");
  }
  RngEngine engine(stream);
  return engine.NextDouble() < p;
}

std::vector<std::size_t> SubsamplePoisson(std::size_t n, double s,
                                          const RngStream& stream) {
  if (n < 1) {
    throw std::invalid_argument("SubsamplePoisson: n must be >= 1");
  }
  if (!(s > 0.0 && s <= 1.0)) {
    throw std::invalid_argument("SubsamplePoisson: s must be in (0, 1]");
  }
  std::vector<std::size_t> indices;
  if (s == 1.0) {
    indices.resize(n);
    for (std::size_t i = 0; i < n; ++i) indices[i] = i;
    return indices;
  }
  RngEngine engine(stream);
  for (std::size_t i = 0; i < n; ++i) {
    if (engine.NextDouble() < s) indices.push_back(i);
  }
  return indices;
}

Eigen::VectorXd GaussianVector(double sigma, int dim, const RngStream& stream) {
  if (sigma < 0.0) {
    throw std::invalid_argument("GaussianVector: sigma must be >= 0");
  }
  if (dim < 0) {
    throw std::invalid_argument("GaussianVector: dim must be >= 0");
  }
  if (sigma == 0.0) return Eigen::VectorXd::Zero(dim);
  RngEngine engine(stream);
  Eigen::VectorXd v(dim);
  for (int i = 0; i < dim; ++i) v[i] = sigma * engine.NextGaussian();
  return v;
}

}  // namespace ferret
