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

#include "ferret/mechanism.hpp"

#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace ferret {
namespace {

void CheckConfig(const MechanismConfig& config) {
  if (!(config.firing_probability >= 0.0 && config.firing_probability <= 1.0)) {
    throw std::invalid_argument("mechanism: p must be in [0, 1]");
  }
  if (!(config.magnitude > 0.0)) {
    throw std::invalid_argument("mechanism: magnitude C must be > 0");
  }
  if (config.dither_sigma < 0.0) {
    throw std::invalid_argument("mechanism: dither sigma must be >= 0");
  }
}

std::vector<std::vector<int>> BucketTensors(int num_tensors,
                                            const PartitionScheme& scheme) {
  std::vector<std::vector<int>> buckets;
  switch (scheme.kind) {
    case PartitionScheme::Kind::kMax:
      for (int i = 0; i < num_tensors; ++i) buckets.push_back({i});
      break;
    case PartitionScheme::Kind::kTwo: {
      // First group takes the extra tensor on odd counts.
      const int first = (num_tensors + 1) / 2;
      buckets.emplace_back();
      for (int i = 0; i < first; ++i) buckets.back().push_back(i);
      if (num_tensors > first) {
        buckets.emplace_back();
        for (int i = first; i < num_tensors; ++i) buckets.back().push_back(i);
      }
      break;
    }
    case PartitionScheme::Kind::kBucketOfK: {
      if (scheme.bucket_size < 1) {
        throw std::invalid_argument("mechanism: bucket size k must be >= 1");
      }
      for (int i = 0; i < num_tensors; i += scheme.bucket_size) {
        buckets.emplace_back();
        for (int j = i; j < std::min(num_tensors, i + scheme.bucket_size); ++j) {
          buckets.back().push_back(j);
        }
      }
      break;
    }
  }
  return buckets;
}

}  // namespace

void UpdateLog::Append(const std::vector<GroupUpdate>& updates) {
  for (const GroupUpdate& u : updates) {
    records.push_back({u.step, u.group, u.fired, u.sign});
  }
}

void WriteUpdateLogCsv(std::ostream& os, const UpdateLog& log) {
  os << "step,group,fired,sign\n";
  for (const UpdateRecord& r : log.records) {
    os << r.step << ',' << r.group << ',' << (r.fired ? 1 : 0) << ',' << r.sign
       << '\n';
  }
}

std::int64_t FiringStats::total_fired() const {
  return std::accumulate(fire_counts.begin(), fire_counts.end(),
                         std::int64_t{0});
}

void SignPayload::AppendBit(bool bit) {
  const std::size_t byte = bit_count / 8;
  if (byte == bytes.size()) bytes.push_back(0);
  if (bit) bytes[byte] |= static_cast<std::uint8_t>(1u << (7 - bit_count % 8));
  ++bit_count;
}

bool SignPayload::BitAt(std::size_t index) const {
  if (index >= bit_count) {
    throw std::out_of_range("SignPayload: bit index past payload end");
  }
  return (bytes[index / 8] >> (7 - index % 8)) & 1u;
}

GroupPartition PartitionGroups(const std::vector<Eigen::Index>& tensor_lengths,
                               const PartitionScheme& scheme) {
  if (tensor_lengths.empty()) {
    throw std::invalid_argument("mechanism: tensor list must be non-empty");
  }
  for (Eigen::Index len : tensor_lengths) {
    if (len < 1) {
      throw std::invalid_argument("mechanism: tensor lengths must be >= 1");
    }
  }
  GroupPartition partition;
  partition.num_tensors = static_cast<int>(tensor_lengths.size());
  const auto buckets = BucketTensors(partition.num_tensors, scheme);
  for (const auto& bucket : buckets) {
    std::vector<Span> spans;
    Eigen::Index dim = 0;
    for (int tensor : bucket) {
      spans.push_back({tensor, 0, tensor_lengths[tensor]});
      dim += tensor_lengths[tensor];
    }
    partition.groups.push_back(std::move(spans));
    partition.group_dims.push_back(dim);
    partition.total_dim += dim;
  }
  return partition;
}

int SignProjection(const Eigen::VectorXd& gradient,
                   const Eigen::VectorXd& unit_direction) {
  if (gradient.size() != unit_direction.size()) {
    throw std::invalid_argument(
        "mechanism: gradient and direction lengths differ");
  }
  if (std::abs(unit_direction.norm() - 1.0) > 1e-6) {
    throw std::invalid_argument("mechanism: direction is not unit norm");
  }
  const double dot = gradient.dot(unit_direction);
  return dot < 0.0 ? -1 : +1;  // exact zero resolves to +1
}

std::vector<GroupUpdate> FerretStep(
    const std::vector<Eigen::VectorXd>& group_gradients,
    const GroupPartition& partition, const MechanismConfig& config,
    std::int64_t step, std::uint64_t seed) {
  CheckConfig(config);
  if (static_cast<int>(group_gradients.size()) != partition.num_groups()) {
    throw std::invalid_argument("mechanism: one gradient vector per group");
  }
  std::vector<GroupUpdate> updates(partition.num_groups());
  for (int g = 0; g < partition.num_groups(); ++g) {
    const Eigen::Index dim = partition.group_dims[g];
    if (group_gradients[g].size() != dim) {
      throw std::invalid_argument("mechanism: gradient length mismatch");
    }
    GroupUpdate& u = updates[g];
    u.step = step;
    u.group = g;
    const std::uint64_t ustep = static_cast<std::uint64_t>(step);
    const std::uint64_t ug = static_cast<std::uint64_t>(g);
    u.fired = Bernoulli(config.firing_probability,
                        {seed, StreamDomain::kMask, ustep, ug});
    if (u.fired) {
      u.direction = SampleUnitVector(static_cast<int>(dim),
                                     {seed, StreamDomain::kDirection, ustep, ug});
      u.sign = SignProjection(group_gradients[g], u.direction);
      u.delta = u.sign * config.magnitude * u.direction;
    } else {
      u.delta = Eigen::VectorXd::Zero(dim);
    }
    if (config.dither_sigma > 0.0) {
      u.delta += GaussianVector(config.dither_sigma, static_cast<int>(dim),
                                {seed, StreamDomain::kDither, ustep, ug});
    }
  }
  return updates;
}

std::vector<Eigen::VectorXd> GatherGroups(
    const GroupPartition& partition,
    const std::vector<Eigen::VectorXd>& tensors) {
  if (static_cast<int>(tensors.size()) != partition.num_tensors) {
    throw std::invalid_argument("mechanism: tensor count mismatch");
  }
  std::vector<Eigen::VectorXd> out;
  out.reserve(partition.groups.size());
  for (std::size_t g = 0; g < partition.groups.size(); ++g) {
    Eigen::VectorXd v(partition.group_dims[g]);
    Eigen::Index at = 0;
    for (const Span& span : partition.groups[g]) {
      v.segment(at, span.length) =
          tensors[span.tensor].segment(span.offset, span.length);
      at += span.length;
    }
    out.push_back(std::move(v));
  }
  return out;
}

std::vector<Eigen::VectorXd> ScatterUpdates(
    const GroupPartition& partition, const std::vector<GroupUpdate>& updates,
    const std::vector<Eigen::Index>& tensor_lengths) {
  std::vector<Eigen::VectorXd> out;
  out.reserve(tensor_lengths.size());
  for (Eigen::Index len : tensor_lengths) {
    out.push_back(Eigen::VectorXd::Zero(len));
  }
  for (const GroupUpdate& u : updates) {
    if (u.group < 0 || u.group >= partition.num_groups()) {
      throw std::invalid_argument("mechanism: update references unknown group");
    }
    if (u.delta.size() != partition.group_dims[u.group]) {
      throw std::invalid_argument("mechanism: delta length mismatch");
    }
    Eigen::Index at = 0;
    for (const Span& span : partition.groups[u.group]) {
      out[span.tensor].segment(span.offset, span.length) +=
          u.delta.segment(at, span.length);
      at += span.length;
    }
  }
  return out;
}

std::vector<Eigen::VectorXd> ApplyUpdates(
    std::vector<Eigen::VectorXd> params, const GroupPartition& partition,
    const std::vector<GroupUpdate>& updates, double learning_rate) {
  for (const GroupUpdate& u : updates) {
    if (u.group < 0 || u.group >= partition.num_groups()) {
      throw std::invalid_argument("mechanism: update references unknown group");
    }
    if (u.delta.size() != partition.group_dims[u.group]) {
      throw std::invalid_argument("mechanism: delta length mismatch");
    }
    if (!u.fired && u.delta.isZero(0.0)) continue;  // exact-silent group
    Eigen::Index at = 0;
    for (const Span& span : partition.groups[u.group]) {
      params[span.tensor].segment(span.offset, span.length) -=
          learning_rate * u.delta.segment(at, span.length);
      at += span.length;
    }
  }
  return params;
}

SignPayload PackSigns(const std::vector<GroupUpdate>& updates) {
  SignPayload payload;
  for (const GroupUpdate& u : updates) {
    if (u.fired) payload.AppendBit(u.sign > 0);
  }
  return payload;
}

std::vector<GroupUpdate> ReconstructStep(const GroupPartition& partition,
                                         const MechanismConfig& config,
                                         std::int64_t step, std::uint64_t seed,
                                         const SignPayload& payload,
                                         std::size_t& bit_cursor) {
  CheckConfig(config);
  std::vector<GroupUpdate> updates(partition.num_groups());
  for (int g = 0; g < partition.num_groups(); ++g) {
    const Eigen::Index dim = partition.group_dims[g];
    GroupUpdate& u = updates[g];
    u.step = step;
    u.group = g;
    const std::uint64_t ustep = static_cast<std::uint64_t>(step);
    const std::uint64_t ug = static_cast<std::uint64_t>(g);
    u.fired = Bernoulli(config.firing_probability,
                        {seed, StreamDomain::kMask, ustep, ug});
    if (u.fired) {
      u.direction = SampleUnitVector(static_cast<int>(dim),
                                     {seed, StreamDomain::kDirection, ustep, ug});
      u.sign = payload.BitAt(bit_cursor++) ? +1 : -1;
      u.delta = u.sign * config.magnitude * u.direction;
    } else {
      u.delta = Eigen::VectorXd::Zero(dim);
    }
    if (config.dither_sigma > 0.0) {
      u.delta += GaussianVector(config.dither_sigma, static_cast<int>(dim),
                                {seed, StreamDomain::kDither, ustep, ug});
    }
  }
  return updates;
}

}  // namespace ferret
