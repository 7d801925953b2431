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

#include "ferret/trainers.hpp"

#include <chrono>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <stdexcept>

#include "ferret/accountant.hpp"
#include "ferret/io.hpp"
#include "ferret/rng.hpp"

namespace ferret {
namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

double SubsampleRate(const Dataset& members, const TrainConfig& config) {
  const double n = static_cast<double>(members.size());
  const double s = config.batch_expectation / n;
  if (!(s > 0.0 && s <= 1.0)) {
    throw std::invalid_argument(
        "trainers: batch expectation must give s = B/N in (0, 1]");
  }
  return s;
}

void CheckCommon(const Dataset& members, const TrainConfig& config) {
  if (members.size() < 1) {
    throw std::invalid_argument("trainers: member set must be non-empty");
  }
  if (config.total_steps < 1) {
    throw std::invalid_argument("trainers: total_steps must be >= 1");
  }
  if (!(config.learning_rate >= 0.0)) {
    throw std::invalid_argument("trainers: learning rate must be >= 0");
  }
}

std::vector<Eigen::VectorXd> ZeroDelta(
    const std::vector<Eigen::Index>& lengths) {
  std::vector<Eigen::VectorXd> delta;
  delta.reserve(lengths.size());
  for (Eigen::Index len : lengths) delta.push_back(Eigen::VectorXd::Zero(len));
  return delta;
}

class WallClock {
 public:
  double Elapsed() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         start_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point start_ =
      std::chrono::steady_clock::now();
};

}  // namespace

std::int64_t RunRecord::total_fired() const {
  std::int64_t total = 0;
  for (std::int64_t f : fired_per_step) total += f;
  return total;
}

Optimizer::Optimizer(const OptimizerRule& rule, double learning_rate,
                     const std::vector<Eigen::Index>& tensor_lengths)
    : rule_(rule), learning_rate_(learning_rate) {
  if (rule.kind == OptimizerRule::Kind::kAdamLike) {
    first_moment_ = ZeroDelta(tensor_lengths);
    second_moment_ = ZeroDelta(tensor_lengths);
  }
}

void Optimizer::Step(std::vector<NamedTensor>& tensors,
                     const std::vector<Eigen::VectorXd>& delta) {
  if (delta.size() != tensors.size()) {
    throw std::invalid_argument("optimizer: delta shape mismatch");
  }
  if (rule_.kind == OptimizerRule::Kind::kSgd) {
    for (std::size_t t = 0; t < tensors.size(); ++t) {
      if (delta[t].isZero(0.0)) continue;
      tensors[t].values -= learning_rate_ * delta[t];
    }
    return;
  }
  ++steps_taken_;
  const double bc1 = 1.0 - std::pow(rule_.beta1, double(steps_taken_));
  const double bc2 = 1.0 - std::pow(rule_.beta2, double(steps_taken_));
  for (std::size_t t = 0; t < tensors.size(); ++t) {
    first_moment_[t] = rule_.beta1 * first_moment_[t] +
                       (1.0 - rule_.beta1) * delta[t];
    second_moment_[t] =
        rule_.beta2 * second_moment_[t] +
        (1.0 - rule_.beta2) * delta[t].cwiseProduct(delta[t]);
    const Eigen::VectorXd m_hat = first_moment_[t] / bc1;
    const Eigen::VectorXd v_hat = second_moment_[t] / bc2;
    tensors[t].values -= learning_rate_ *
                         (m_hat.array() / (v_hat.array().sqrt() + rule_.epsilon))
                             .matrix();
  }
}

RunRecord Train(const ToyModel& initial_model, const Dataset& members,
                const TrainConfig& config) {
  switch (config.method) {
    case TrainMethod::kFerret:
      return TrainFerret(initial_model, members, config);
    case TrainMethod::kDpsgdLite:
      return TrainDpsgdLite(initial_model, members, config);
    case TrainMethod::kNonPrivate:
      return TrainNonPrivate(initial_model, members, config);
  }
  throw std::logic_error("unreachable");
}

RunRecord TrainFerret(const ToyModel& initial_model, const Dataset& members,
                      const TrainConfig& config) {
  CheckCommon(members, config);
  const double s = SubsampleRate(members, config);
  const auto lengths = initial_model.TensorLengths();
  const GroupPartition partition =
      PartitionGroups(lengths, config.ferret.scheme);
  const std::int64_t groups = partition.num_groups();

  double p = 0.0;
  if (config.ferret.epsilon_target.has_value()) {
    p = OptimalP(*config.ferret.epsilon_target, groups, config.total_steps, s);
  } else if (config.ferret.firing_probability.has_value()) {
    p = *config.ferret.firing_probability;
    if (!(p >= 0.0 && p <= 1.0)) {
      throw std::invalid_argument("trainers: firing probability not in [0,1]");
    }
  } else {
    throw std::invalid_argument(
        "trainers: FERRET needs an epsilon target or a firing probability");
  }
  MechanismConfig mech{p, config.ferret.magnitude, config.ferret.dither_sigma};

  WallClock clock;
  RunRecord record;
  record.final_model = initial_model;
  record.subsample_rate = s;
  record.groups = groups;
  record.p_used = p;
  record.epsilon_achieved = EpsilonTotal(groups, config.total_steps, s, p);
  record.firing.fire_counts.assign(groups, 0);
  record.firing.steps = config.total_steps;
  record.firing.configured_p = p;
  record.loss_trace.reserve(config.total_steps);
  record.fired_per_step.reserve(config.total_steps);

  Optimizer optimizer(config.optimizer, config.learning_rate, lengths);
  const std::vector<Eigen::VectorXd> zero_delta = ZeroDelta(lengths);

  for (std::int64_t step = 0; step < config.total_steps; ++step) {
    const auto batch_indices = SubsamplePoisson(
        members.size(), s,
        {config.seed, StreamDomain::kSubsample,
         static_cast<std::uint64_t>(step), 0});
    if (batch_indices.empty()) {
      // Nothing is computed or released; the step's mask coordinates are
      // simply never consumed, which keeps the T-draw accounting
      // conservative. Moments still advance.
      record.loss_trace.push_back(kNan);
      record.fired_per_step.push_back(0);
      for (int g = 0; g < partition.num_groups(); ++g) {
        record.update_log.records.push_back({step, g, false, 0});
      }
      optimizer.Step(record.final_model.tensors, zero_delta);
      continue;
    }
    const auto [features, targets] = MakeBatch(members, batch_indices);
    const GradientBundle bundle =
        LossAndGrad(record.final_model, features, targets);
    const auto group_grads = GatherGroups(partition, bundle.grads);
    const auto updates =
        FerretStep(group_grads, partition, mech, step, config.seed);
    std::int64_t fired = 0;
    for (const GroupUpdate& u : updates) {
      if (u.fired) {
        ++fired;
        ++record.firing.fire_counts[u.group];
      }
    }
    record.update_log.Append(updates);
    optimizer.Step(record.final_model.tensors,
                   ScatterUpdates(partition, updates, lengths));
    record.loss_trace.push_back(bundle.loss);
    record.fired_per_step.push_back(fired);
  }
  record.duration_seconds = clock.Elapsed();
  return record;
}

RunRecord TrainDpsgdLite(const ToyModel& initial_model, const Dataset& members,
                         const TrainConfig& config) {
  CheckCommon(members, config);
  if (!(config.dpsgd.clip > 0.0)) {
    throw std::invalid_argument("trainers: clip must be > 0");
  }
  if (config.dpsgd.noise_sigma < 0.0) {
    throw std::invalid_argument("trainers: noise sigma must be >= 0");
  }
  if (config.dpsgd.noise_sigma > 0.0 && !std::isfinite(config.dpsgd.clip)) {
    throw std::invalid_argument(
        "trainers: noise calibration needs a finite clip");
  }
  const double s = SubsampleRate(members, config);
  const auto lengths = initial_model.TensorLengths();
  const double noise_std =
      config.dpsgd.noise_sigma == 0.0
          ? 0.0
          : config.dpsgd.noise_sigma * config.dpsgd.clip /
                config.batch_expectation;

  WallClock clock;
  RunRecord record;
  record.final_model = initial_model;
  record.subsample_rate = s;
  record.epsilon_achieved = kNan;  // not accounted, by design
  record.loss_trace.reserve(config.total_steps);
  record.fired_per_step.assign(config.total_steps, 0);

  Optimizer optimizer(config.optimizer, config.learning_rate, lengths);
  const std::vector<Eigen::VectorXd> zero_delta = ZeroDelta(lengths);

  for (std::int64_t step = 0; step < config.total_steps; ++step) {
    const auto batch_indices = SubsamplePoisson(
        members.size(), s,
        {config.seed, StreamDomain::kSubsample,
         static_cast<std::uint64_t>(step), 0});
    if (batch_indices.empty()) {
      record.loss_trace.push_back(kNan);
      optimizer.Step(record.final_model.tensors, zero_delta);
      continue;
    }
    const auto [features, targets] = MakeBatch(members, batch_indices);
    const auto bundles =
        PerExampleLossAndGrad(record.final_model, features, targets);
    std::vector<Eigen::VectorXd> mean_grad = ZeroDelta(lengths);
    double mean_loss = 0.0;
    for (const GradientBundle& b : bundles) {
      double norm_sq = 0.0;
      for (const Eigen::VectorXd& g : b.grads) norm_sq += g.squaredNorm();
      const double norm = std::sqrt(norm_sq);
      const double scale =
          norm > config.dpsgd.clip ? config.dpsgd.clip / norm : 1.0;
      for (std::size_t t = 0; t < mean_grad.size(); ++t) {
        mean_grad[t] += scale * b.grads[t];
      }
      mean_loss += b.loss;
    }
    const double batch_size = static_cast<double>(bundles.size());
    mean_loss /= batch_size;
    for (std::size_t t = 0; t < mean_grad.size(); ++t) {
      mean_grad[t] /= batch_size;
      if (noise_std > 0.0) {
        mean_grad[t] += GaussianVector(
            noise_std, static_cast<int>(lengths[t]),
            {config.seed, StreamDomain::kNoise,
             static_cast<std::uint64_t>(step), static_cast<std::uint64_t>(t)});
      }
    }
    optimizer.Step(record.final_model.tensors, mean_grad);
    record.loss_trace.push_back(mean_loss);
  }
  record.duration_seconds = clock.Elapsed();
  return record;
}

RunRecord TrainNonPrivate(const ToyModel& initial_model,
                          const Dataset& members, const TrainConfig& config) {
  CheckCommon(members, config);
  const double s = SubsampleRate(members, config);
  const auto lengths = initial_model.TensorLengths();

  WallClock clock;
  RunRecord record;
  record.final_model = initial_model;
  record.subsample_rate = s;
  record.epsilon_achieved = std::numeric_limits<double>::infinity();
  record.loss_trace.reserve(config.total_steps);
  record.fired_per_step.assign(config.total_steps, 0);

  Optimizer optimizer(config.optimizer, config.learning_rate, lengths);
  const std::vector<Eigen::VectorXd> zero_delta = ZeroDelta(lengths);

  for (std::int64_t step = 0; step < config.total_steps; ++step) {
    const auto batch_indices = SubsamplePoisson(
        members.size(), s,
        {config.seed, StreamDomain::kSubsample,
         static_cast<std::uint64_t>(step), 0});
    if (batch_indices.empty()) {
      record.loss_trace.push_back(kNan);
      optimizer.Step(record.final_model.tensors, zero_delta);
      continue;
    }
    const auto [features, targets] = MakeBatch(members, batch_indices);
    const GradientBundle bundle =
        LossAndGrad(record.final_model, features, targets);
    optimizer.Step(record.final_model.tensors, bundle.grads);
    record.loss_trace.push_back(bundle.loss);
  }
  record.duration_seconds = clock.Elapsed();
  return record;
}

void WriteStepsCsv(std::ostream& os, const RunRecord& record) {
  os << "step,loss,fired_count\n";
  for (std::size_t i = 0; i < record.loss_trace.size(); ++i) {
    os << i << ',' << FormatDouble(record.loss_trace[i]) << ','
       << record.fired_per_step[i] << '\n';
  }
}

void WriteModelCsv(std::ostream& os, const ToyModel& model) {
  os << "tensor,index,value\n";
  for (const NamedTensor& t : model.tensors) {
    for (Eigen::Index i = 0; i < t.values.size(); ++i) {
      os << t.name << ',' << i << ',' << FormatDouble(t.values[i]) << '\n';
    }
  }
}

void ReadModelCsvInto(std::istream& is, ToyModel& model) {
  std::string line;
  if (!std::getline(is, line)) {
    throw std::runtime_error("model csv: missing header");
  }
  for (NamedTensor& t : model.tensors) t.values.setConstant(kNan);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto fields = SplitCsvLine(line);
    if (fields.size() != 3) throw std::runtime_error("model csv: ragged row");
    bool found = false;
    for (NamedTensor& t : model.tensors) {
      if (t.name != fields[0]) continue;
      const std::size_t index = std::stoul(fields[1]);
      if (index >= static_cast<std::size_t>(t.values.size())) {
        throw std::runtime_error("model csv: index out of range");
      }
      t.values[static_cast<Eigen::Index>(index)] = ParseDouble(fields[2]);
      found = true;
      break;
    }
    if (!found) throw std::runtime_error("model csv: unknown tensor " + fields[0]);
  }
  for (const NamedTensor& t : model.tensors) {
    if (t.values.hasNaN()) {
      throw std::runtime_error("model csv: tensor " + t.name + " incomplete");
    }
  }
}

}  // namespace ferret
