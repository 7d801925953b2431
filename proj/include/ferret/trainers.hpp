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

#ifndef FERRET_TRAINERS_HPP_
#define FERRET_TRAINERS_HPP_

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "ferret/mechanism.hpp"
#include "ferret/models.hpp"

namespace ferret {

enum class TrainMethod { kFerret, kDpsgdLite, kNonPrivate };

struct OptimizerRule {
  enum class Kind { kSgd, kAdamLike };
  Kind kind = Kind::kSgd;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct FerretOptions {
  PartitionScheme scheme = PartitionScheme::Max();
  double magnitude = 1.0;  // release magnitude C
  double dither_sigma = 0.0;
  // Exactly one of these drives the mask: a budget (p* computed, infeasible
  // budgets throw) or a direct firing probability.
  std::optional<double> epsilon_target;
  std::optional<double> firing_probability;
};

struct DpsgdOptions {
  double clip = 1.0;          // per-example gradient norm bound, > 0 (inf ok)
  double noise_sigma = 1.0;   // noise multiplier; added std is sigma*clip/B
};

struct TrainConfig {
  TrainMethod method = TrainMethod::kNonPrivate;
  std::int64_t total_steps = 1;
  double batch_expectation = 1.0;  // B; subsample rate s = B/N
  double learning_rate = 0.1;
  OptimizerRule optimizer;
  std::uint64_t seed = 0;
  FerretOptions ferret;
  DpsgdOptions dpsgd;
};

struct RunRecord {
  std::vector<double> loss_trace;           // length T; NaN on empty batches
  std::vector<std::int64_t> fired_per_step; // length T; zero for non-FERRET
  UpdateLog update_log;                     // FERRET only
  FiringStats firing;                       // FERRET only
  ToyModel final_model;
  double duration_seconds = 0.0;
  double subsample_rate = 0.0;
  std::int64_t groups = 0;                  // FERRET only
  double p_used = 0.0;                      // FERRET only
  // FERRET: G*T*s*p*ln2. NonPrivate: +inf. DPSGD-lite: NaN (not accounted;
  // its noise knob is not calibrated to any certified budget).
  double epsilon_achieved = 0.0;

  std::int64_t total_fired() const;
};

// First/second-moment (AdamLike) or plain (Sgd) update rule applied to the
// aggregate per-tensor delta: for FERRET that is the released update, for
// the gradient methods the (noisy) mean gradient. Moments advance every
// step, silent ones included.
class Optimizer {
 public:
  Optimizer(const OptimizerRule& rule, double learning_rate,
            const std::vector<Eigen::Index>& tensor_lengths);

  void Step(std::vector<NamedTensor>& tensors,
            const std::vector<Eigen::VectorXd>& delta);

 private:
  OptimizerRule rule_;
  double learning_rate_;
  std::int64_t steps_taken_ = 0;
  std::vector<Eigen::VectorXd> first_moment_;
  std::vector<Eigen::VectorXd> second_moment_;
};

// Runs the configured method from the given initial model. All three
// methods share the Subsample stream (identical batches at equal seeds) and
// the per-step loss is recorded before the update.
RunRecord Train(const ToyModel& initial_model, const Dataset& members,
                const TrainConfig& config);

RunRecord TrainFerret(const ToyModel& initial_model, const Dataset& members,
                      const TrainConfig& config);
RunRecord TrainDpsgdLite(const ToyModel& initial_model, const Dataset& members,
                         const TrainConfig& config);
RunRecord TrainNonPrivate(const ToyModel& initial_model,
                          const Dataset& members, const TrainConfig& config);

// Per-step CSV with header step,loss,fired_count.
void WriteStepsCsv(std::ostream& os, const RunRecord& record);

// Flattened parameters, header tensor,index,value.
void WriteModelCsv(std::ostream& os, const ToyModel& model);

// Fills an already-shaped model's tensors from WriteModelCsv output.
void ReadModelCsvInto(std::istream& is, ToyModel& model);

}  // namespace ferret

#endif  // FERRET_TRAINERS_HPP_
