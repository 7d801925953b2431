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

#ifndef FERRET_RNG_HPP_
#define FERRET_RNG_HPP_

#include <cstdint>
#include <vector>

#include <Eigen/Core>

namespace ferret {

// Purpose a stream serves. Streams with different domains are independent
// even when (seed, step, group) coincide, so the mask draw at (t, g) can
// never alias the direction draw at (t, g).
enum class StreamDomain : std::uint64_t {
  kMask = 1,
  kDirection = 2,
  kDither = 3,
  kSubsample = 4,
  kInit = 5,
  kNoise = 6,
};

// Immutable coordinates of one randomness stream. Two streams with equal
// coordinates yield byte-identical output sequences; streams differing in
// any coordinate are statistically independent. Deriving a stream costs a
// few integer multiplies, so callers create them freely per (step, group)
// instead of sharing a mutable generator.
struct RngStream {
  std::uint64_t seed = 0;
  StreamDomain domain = StreamDomain::kMask;
  std::uint64_t step = 0;
  std::uint64_t group = 0;
};

// Counter-seeded xoshiro256++ generator. The four state words are derived
// from the stream coordinates with a splitmix64 chain, the seeding scheme
// recommended by the xoshiro authors. All output is defined bit-exactly by
// this file, with no dependence on libstdc++ distribution internals.
class RngEngine {
 public:
  explicit RngEngine(const RngStream& stream);

  std::uint64_t NextU64();

  // Uniform double in [0, 1) with 53 random bits.
  double NextDouble();

  // Standard normal via Box-Muller on the uniform stream.
  double NextGaussian();

 private:
  std::uint64_t state_[4];
  double spare_gaussian_ = 0.0;
  bool has_spare_gaussian_ = false;
};

// Uniform point on the unit sphere S^{dim-1}, by normalizing a standard
// Gaussian draw. dim must be >= 1.
Eigen::VectorXd SampleUnitVector(int dim, const RngStream& stream);

// One Bernoulli(p) bit. Implemented as (uniform < p), so for a fixed stream
// the outcome is monotone in p: raising p can only turn 0s into 1s. The
// budget-monotone firing property of the training harness relies on this.
bool Bernoulli(double p, const RngStream& stream);

// Poisson subsample of {0, ..., n-1}: each index is included independently
// with probability s in (0, 1]. The result may be empty.
std::vector<std::size_t> SubsamplePoisson(std::size_t n, double s,
                                          const RngStream& stream);

// i.i.d. N(0, sigma^2) vector. sigma == 0 returns exact zeros.
Eigen::VectorXd GaussianVector(double sigma, int dim, const RngStream& stream);

}  // namespace ferret

#endif  // FERRET_RNG_HPP_
