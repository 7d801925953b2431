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

#ifndef FERRET_CLI_HPP_
#define FERRET_CLI_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ferret/mechanism.hpp"
#include "ferret/models.hpp"
#include "ferret/trainers.hpp"

namespace ferret::cli {

// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfigError = 2;
inline constexpr int kExitBudgetInfeasible = 3;
inline constexpr int kExitMissingArtifact = 4;

struct DatasetSpec {
  ModelKind kind = ModelKind::kLinearRegression;
  int n = 0;
  int dim = 0;
  int hidden = 16;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
};

struct MethodSpec {
  std::string label;  // as written in the config, used in paths and reports
  TrainMethod method = TrainMethod::kNonPrivate;
  PartitionScheme scheme = PartitionScheme::Max();
};

// One JSON document drives train and sweep-dither; see the README for the
// schema.
struct ExperimentConfig {
  DatasetSpec dataset;

  double batch_expectation = 1.0;
  std::int64_t steps_per_epoch = 0;  // 0 -> ceil(n / batch_expectation)
  double learning_rate = 0.1;
  OptimizerRule optimizer;
  double ferret_magnitude = 1.0;
  double ferret_dither_sigma = 0.0;
  DpsgdOptions dpsgd;

  std::vector<MethodSpec> methods;
  std::vector<double> epsilons;
  std::vector<std::int64_t> epochs;
  std::vector<std::uint64_t> seeds;

  std::vector<double> sweep_sigmas;
  std::vector<std::uint64_t> sweep_seeds;
  std::optional<double> sweep_epsilon;
  std::optional<double> sweep_firing_probability;

  std::int64_t StepsPerEpoch() const;
};

// Parses and validates; appends one message per bad field so a single pass
// reports everything wrong with a config.
ExperimentConfig ParseExperimentConfig(const std::string& json_text,
                                       std::vector<std::string>& errors);

// Entry point used by the ferret_lab binary.
int Run(int argc, char** argv);

}  // namespace ferret::cli

#endif  // FERRET_CLI_HPP_
