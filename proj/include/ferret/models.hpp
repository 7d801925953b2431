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

#ifndef FERRET_MODELS_HPP_
#define FERRET_MODELS_HPP_

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace ferret {

enum class ModelKind { kLinearRegression, kLogisticRegression, kMlp };

struct NamedTensor {
  std::string name;
  Eigen::VectorXd values;
};

// Desk-scale differentiable task. Parameters are kept as an ordered list of
// flattened tensors so the mechanism's group partition applies directly.
//   LinearRegression / LogisticRegression: weight (d), bias (1).
//   Mlp (tanh hidden layer, sigmoid output): w1 (h*d, row-major), b1 (h),
//   w2 (h), b2 (1).
// Losses: half squared error for regression, bernoulli NLL for the
// classifiers. The 1/2 factor makes the regression gradient X^T(Xw - y)/n.
struct ToyModel {
  ModelKind kind = ModelKind::kLinearRegression;
  int input_dim = 0;
  int hidden_dim = 0;  // Mlp only
  std::vector<NamedTensor> tensors;

  std::vector<Eigen::Index> TensorLengths() const;
};

enum class SplitTag { kMember, kNonMember };

struct Dataset {
  Eigen::MatrixXd features;  // n x d
  Eigen::VectorXd targets;   // n
  SplitTag split = SplitTag::kMember;

  Eigen::Index size() const { return features.rows(); }
};

// Per-tensor gradients aligned with ToyModel::tensors, plus the loss they
// were taken at.
struct GradientBundle {
  std::vector<Eigen::VectorXd> grads;
  double loss = 0.0;
};

struct SynthResult {
  Dataset member;
  Dataset nonmember;
  std::vector<NamedTensor> teacher;  // ground-truth parameters
};

struct EvalMetrics {
  double mse = 0.0;                // regression: mean squared error (no 1/2)
  double nll = 0.0;                // classifiers: mean negative log-likelihood
  double perplexity_analog = 0.0;  // exp(nll), classifiers only
  bool is_regression = false;

  double primary() const { return is_regression ? mse : nll; }
};

// Random initial parameters: weights N(0, 1/sqrt(fan_in)) from the Init
// stream, biases zero. Deterministic per seed.
ToyModel MakeModel(ModelKind kind, int input_dim, std::uint64_t seed,
                   int hidden_dim = 16);

// Two disjoint i.i.d. splits of n records each, drawn from the same
// synthetic source: standard normal features, targets from a ground-truth
// teacher of the same kind plus noise_sigma perturbation (regression noise
// on the target, classifiers on the logit before sampling the label).
SynthResult SynthDataset(ModelKind kind, int n, int dim, double noise_sigma,
                         std::uint64_t seed, int hidden_dim = 16);

// Mean loss and mean analytic gradient over the batch.
GradientBundle LossAndGrad(const ToyModel& model,
                           const Eigen::MatrixXd& features,
                           const Eigen::VectorXd& targets);

// One bundle per record, in batch order.
std::vector<GradientBundle> PerExampleLossAndGrad(
    const ToyModel& model, const Eigen::MatrixXd& features,
    const Eigen::VectorXd& targets);

// Central finite differences of the mean loss, step h per scalar.
GradientBundle FiniteDiffGrad(const ToyModel& model,
                              const Eigen::MatrixXd& features,
                              const Eigen::VectorXd& targets, double h);

// Training-loss value on a single record.
double PerExampleLoss(const ToyModel& model, const Eigen::VectorXd& x,
                      double y);

EvalMetrics Evaluate(const ToyModel& model, const Dataset& dataset);

// Extracts the rows named by indices.
std::pair<Eigen::MatrixXd, Eigen::VectorXd> MakeBatch(
    const Dataset& dataset, const std::vector<std::size_t>& indices);

// Fixture interchange: header f0..f{d-1},target,split_tag; one row per
// record, members first.
void WriteDatasetCsv(std::ostream& os, const Dataset& member,
                     const Dataset& nonmember);
std::pair<Dataset, Dataset> ReadDatasetCsv(std::istream& is);

}  // namespace ferret

#endif  // FERRET_MODELS_HPP_
