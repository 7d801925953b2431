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

#ifndef FERRET_MECHANISM_HPP_
#define FERRET_MECHANISM_HPP_

#include <cstdint>
#include <iosfwd>
#include <vector>

#include <Eigen/Core>

#include "ferret/rng.hpp"

namespace ferret {

// How parameter tensors are partitioned into groups.
struct PartitionScheme {
  enum class Kind { kMax, kBucketOfK, kTwo };

  Kind kind = Kind::kMax;
  int bucket_size = 0;  // kBucketOfK only

  static PartitionScheme Max() { return {Kind::kMax, 0}; }
  static PartitionScheme Two() { return {Kind::kTwo, 0}; }
  static PartitionScheme BucketOfK(int k) { return {Kind::kBucketOfK, k}; }
};

// Contiguous slice of one parameter tensor. Tensors are identified by their
// position in the tensor list handed to PartitionGroups.
struct Span {
  int tensor = 0;
  Eigen::Index offset = 0;
  Eigen::Index length = 0;
};

// Disjoint cover of every parameter scalar by ordered groups of spans.
// groups[g] lists the spans of group g in tensor order; group_dims[g] is the
// scalar count d_g.
struct GroupPartition {
  std::vector<std::vector<Span>> groups;
  std::vector<Eigen::Index> group_dims;
  Eigen::Index total_dim = 0;
  int num_tensors = 0;

  int num_groups() const { return static_cast<int>(groups.size()); }
};

struct MechanismConfig {
  double firing_probability = 0.0;  // p in [0, 1]
  double magnitude = 1.0;           // release magnitude C > 0
  double dither_sigma = 0.0;        // sigma_d >= 0; 0 disables the dither
};

// One group's release at one step. With dither_sigma == 0 the delta of a
// silent group is exactly zero and the per-group release alphabet is
// {0, +C*u, -C*u}. With dither on, both branches carry the dither, so a
// silent group releases pure dither.
struct GroupUpdate {
  std::int64_t step = 0;
  int group = 0;
  bool fired = false;
  int sign = 0;                // +1 or -1 when fired, 0 otherwise
  Eigen::VectorXd direction;   // unit vector, empty when silent
  Eigen::VectorXd delta;       // length d_g
};

// Compact transcript row; directions are reconstructible from the seed and
// deliberately not stored.
struct UpdateRecord {
  std::int64_t step = 0;
  int group = 0;
  bool fired = false;
  int sign = 0;
};

struct UpdateLog {
  std::vector<UpdateRecord> records;

  void Append(const std::vector<GroupUpdate>& updates);
};

// Writes the transcript as CSV with header step,group,fired,sign.
void WriteUpdateLogCsv(std::ostream& os, const UpdateLog& log);

// Per-group firing counts K_g over a run of T steps at probability p.
struct FiringStats {
  std::vector<std::int64_t> fire_counts;
  std::int64_t steps = 0;
  double configured_p = 0.0;

  std::int64_t total_fired() const;
};

// The private payload of a sequence of releases: one sign bit per fired
// group, packed MSB-first in encounter order. Silent groups contribute
// nothing; the mask bit and the direction are derivable from the public
// seed, so this is the entire data-dependent payload.
struct SignPayload {
  std::vector<std::uint8_t> bytes;
  std::size_t bit_count = 0;

  void AppendBit(bool bit);
  bool BitAt(std::size_t index) const;
};

// Partitions tensors (given by length, id = position) into groups.
//   kMax:       one tensor per group.
//   kTwo:       two groups; the first takes ceil(n/2) tensors.
//   kBucketOfK: consecutive buckets of k tensors, remainder in the last.
// Tensor order is preserved within and across groups.
GroupPartition PartitionGroups(const std::vector<Eigen::Index>& tensor_lengths,
                               const PartitionScheme& scheme);

// sign<g, u>: +1 on positive inner product, -1 on negative, +1 on an exact
// zero (fixed data-independent tie-break). u must be unit norm within 1e-6.
int SignProjection(const Eigen::VectorXd& gradient,
                   const Eigen::VectorXd& unit_direction);

// One mechanism step: per group, draw the Bernoulli(p) mask from the Mask
// stream; if it fires, draw the public direction from the Direction stream,
// project the group gradient to a single sign, and release sign * C * u.
// With dither_sigma > 0, data-independent Gaussian dither from the Dither
// stream is added to both branches.
std::vector<GroupUpdate> FerretStep(
    const std::vector<Eigen::VectorXd>& group_gradients,
    const GroupPartition& partition, const MechanismConfig& config,
    std::int64_t step, std::uint64_t seed);

// Concatenates per-tensor vectors into per-group vectors following the
// partition spans.
std::vector<Eigen::VectorXd> GatherGroups(
    const GroupPartition& partition,
    const std::vector<Eigen::VectorXd>& tensors);

// Scatters per-group update deltas back to per-tensor vectors (zeros where
// nothing was released).
std::vector<Eigen::VectorXd> ScatterUpdates(
    const GroupPartition& partition, const std::vector<GroupUpdate>& updates,
    const std::vector<Eigen::Index>& tensor_lengths);

// theta' = theta - lr * sum of released deltas, scattered through the
// partition. Silent groups with dither off leave their scalars bit-identical.
std::vector<Eigen::VectorXd> ApplyUpdates(
    std::vector<Eigen::VectorXd> params, const GroupPartition& partition,
    const std::vector<GroupUpdate>& updates, double learning_rate);

// Packs the private payload (sign bits of fired groups only).
SignPayload PackSigns(const std::vector<GroupUpdate>& updates);

// Rebuilds one step's releases from public randomness plus the packed sign
// bits, consuming from bit_cursor. Inverse of FerretStep + PackSigns: masks,
// directions and dither are re-derived from the seed; only the signs come
// from the payload.
std::vector<GroupUpdate> ReconstructStep(const GroupPartition& partition,
                                         const MechanismConfig& config,
                                         std::int64_t step, std::uint64_t seed,
                                         const SignPayload& payload,
                                         std::size_t& bit_cursor);

}  // namespace ferret

#endif  // FERRET_MECHANISM_HPP_
