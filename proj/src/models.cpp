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

#include "ferret/models.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>

#include "ferret/io.hpp"
#include "ferret/rng.hpp"

namespace ferret {
namespace {

double Sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// Bernoulli NLL of label y under logit z: log(1 + e^z) - y*z, stably.
double LogitNll(double z, double y) {
  return std::max(z, 0.0) - y * z + std::log1p(std::exp(-std::abs(z)));
}

struct MlpActivations {
  Eigen::VectorXd hidden;  // tanh(W1 x + b1)
  double logit = 0.0;
};

MlpActivations MlpForward(const ToyModel& m, const Eigen::VectorXd& x) {
  const int h = m.hidden_dim;
  const int d = m.input_dim;
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                 Eigen::RowMajor>>
      w1(m.tensors[0].values.data(), h, d);
  const Eigen::VectorXd& b1 = m.tensors[1].values;
  const Eigen::VectorXd& w2 = m.tensors[2].values;
  const double b2 = m.tensors[3].values[0];
  MlpActivations act;
  act.hidden = (w1 * x + b1).array().tanh();
  act.logit = w2.dot(act.hidden) + b2;
  return act;
}

double ModelLogitOrPrediction(const ToyModel& m, const Eigen::VectorXd& x) {
  switch (m.kind) {
    case ModelKind::kLinearRegression:
    case ModelKind::kLogisticRegression:
      return m.tensors[0].values.dot(x) + m.tensors[1].values[0];
    case ModelKind::kMlp:
      return MlpForward(m, x).logit;
  }
  throw std::logic_error("unreachable");
}

// Adds this record's gradient into bundle (no scaling) and returns its loss.
double AccumulateExampleGrad(const ToyModel& m, const Eigen::VectorXd& x,
                             double y, std::vector<Eigen::VectorXd>& grads) {
  switch (m.kind) {
    case ModelKind::kLinearRegression: {
      const double r = m.tensors[0].values.dot(x) + m.tensors[1].values[0] - y;
      grads[0] += r * x;
      grads[1][0] += r;
      return 0.5 * r * r;
    }
    case ModelKind::kLogisticRegression: {
      const double z = m.tensors[0].values.dot(x) + m.tensors[1].values[0];
      const double dz = Sigmoid(z) - y;
      grads[0] += dz * x;
      grads[1][0] += dz;
      return LogitNll(z, y);
    }
    case ModelKind::kMlp: {
      const MlpActivations act = MlpForward(m, x);
      const Eigen::VectorXd& w2 = m.tensors[2].values;
      const double dz2 = Sigmoid(act.logit) - y;
      const Eigen::VectorXd dz1 =
          (dz2 * w2.array() * (1.0 - act.hidden.array().square())).matrix();
      Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                               Eigen::RowMajor>>
          dw1(grads[0].data(), m.hidden_dim, m.input_dim);
      dw1 += dz1 * x.transpose();
      grads[1] += dz1;
      grads[2] += dz2 * act.hidden;
      grads[3][0] += dz2;
      return LogitNll(act.logit, y);
    }
  }
  throw std::logic_error("unreachable");
}

std::vector<Eigen::VectorXd> ZeroGrads(const ToyModel& m) {
  std::vector<Eigen::VectorXd> grads;
  grads.reserve(m.tensors.size());
  for (const NamedTensor& t : m.tensors) {
    grads.push_back(Eigen::VectorXd::Zero(t.values.size()));
  }
  return grads;
}

void CheckBatch(const ToyModel& m, const Eigen::MatrixXd& features,
                const Eigen::VectorXd& targets) {
  if (features.rows() == 0) {
    throw std::invalid_argument("models: batch must be non-empty");
  }
  if (features.cols() != m.input_dim || features.rows() != targets.size()) {
    throw std::invalid_argument("models: batch shape mismatch");
  }
}

Eigen::MatrixXd DrawMatrix(Eigen::Index rows, Eigen::Index cols,
                           const RngStream& stream) {
  RngEngine engine(stream);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = engine.NextGaussian();
  }
  return m;
}

std::vector<NamedTensor> TeacherParams(ModelKind kind, int dim, int hidden,
                                       const RngStream& stream) {
  RngEngine engine(stream);
  auto draw = [&engine](Eigen::Index n, double scale) {
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = scale * engine.NextGaussian();
    return v;
  };
  std::vector<NamedTensor> teacher;
  if (kind == ModelKind::kMlp) {
    teacher.push_back({"w1", draw(static_cast<Eigen::Index>(hidden) * dim,
                                  1.0 / std::sqrt(double(dim)))});
    teacher.push_back({"b1", draw(hidden, 0.5)});
    teacher.push_back({"w2", draw(hidden, 1.0 / std::sqrt(double(hidden)))});
    teacher.push_back({"b2", draw(1, 0.5)});
  } else {
    teacher.push_back({"weight", draw(dim, 1.0)});
    teacher.push_back({"bias", draw(1, 1.0)});
  }
  return teacher;
}

Dataset SynthSplit(ModelKind kind, const std::vector<NamedTensor>& teacher,
                   int n, int dim, int hidden, double noise_sigma,
                   SplitTag tag, std::uint64_t seed,
                   std::uint64_t stream_group) {
  Dataset ds;
  ds.split = tag;
  ds.features = DrawMatrix(n, dim, {seed, StreamDomain::kInit, 1, stream_group});
  ds.targets.resize(n);
  ToyModel teacher_model;
  teacher_model.kind = kind;
  teacher_model.input_dim = dim;
  teacher_model.hidden_dim = hidden;
  teacher_model.tensors = teacher;
  RngEngine noise({seed, StreamDomain::kInit, 1, stream_group + 1});
  for (int i = 0; i < n; ++i) {
    const double raw =
        ModelLogitOrPrediction(teacher_model, ds.features.row(i).transpose());
    const double perturbed =
        raw + (noise_sigma > 0.0 ? noise_sigma * noise.NextGaussian() : 0.0);
    if (kind == ModelKind::kLinearRegression) {
      ds.targets[i] = perturbed;
    } else {
      ds.targets[i] = noise.NextDouble() < Sigmoid(perturbed) ? 1.0 : 0.0;
    }
  }
  return ds;
}

}  // namespace

std::vector<Eigen::Index> ToyModel::TensorLengths() const {
  std::vector<Eigen::Index> lengths;
  lengths.reserve(tensors.size());
  for (const NamedTensor& t : tensors) lengths.push_back(t.values.size());
  return lengths;
}

ToyModel MakeModel(ModelKind kind, int input_dim, std::uint64_t seed,
                   int hidden_dim) {
  if (input_dim < 1) {
    throw std::invalid_argument("models: input_dim must be >= 1");
  }
  if (kind == ModelKind::kMlp && hidden_dim < 1) {
    throw std::invalid_argument("models: hidden_dim must be >= 1");
  }
  ToyModel m;
  m.kind = kind;
  m.input_dim = input_dim;
  m.hidden_dim = kind == ModelKind::kMlp ? hidden_dim : 0;
  auto draw = [seed](const std::string& name, Eigen::Index n, double scale,
                     std::uint64_t group) {
    RngEngine engine({seed, StreamDomain::kInit, 0, group});
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = scale * engine.NextGaussian();
    return NamedTensor{name, std::move(v)};
  };
  if (kind == ModelKind::kMlp) {
    m.tensors.push_back(draw("w1", static_cast<Eigen::Index>(hidden_dim) * input_dim,
                             1.0 / std::sqrt(double(input_dim)), 0));
    m.tensors.push_back({"b1", Eigen::VectorXd::Zero(hidden_dim)});
    m.tensors.push_back(
        draw("w2", hidden_dim, 1.0 / std::sqrt(double(hidden_dim)), 2));
    m.tensors.push_back({"b2", Eigen::VectorXd::Zero(1)});
  } else {
    m.tensors.push_back(
        draw("weight", input_dim, 1.0 / std::sqrt(double(input_dim)), 0));
    m.tensors.push_back({"bias", Eigen::VectorXd::Zero(1)});
  }
  return m;
}

SynthResult SynthDataset(ModelKind kind, int n, int dim, double noise_sigma,
                         std::uint64_t seed, int hidden_dim) {
  if (n < 1 || dim < 1) {
    throw std::invalid_argument("models: n and dim must be >= 1");
  }
  if (noise_sigma < 0.0) {
    throw std::invalid_argument("models: noise_sigma must be >= 0");
  }
  if (kind == ModelKind::kMlp && hidden_dim < 1) {
    throw std::invalid_argument("models: hidden_dim must be >= 1");
  }
  SynthResult result;
  result.teacher =
      TeacherParams(kind, dim, hidden_dim, {seed, StreamDomain::kInit, 1, 0});
  result.member = SynthSplit(kind, result.teacher, n, dim, hidden_dim,
                             noise_sigma, SplitTag::kMember, seed, 1);
  result.nonmember = SynthSplit(kind, result.teacher, n, dim, hidden_dim,
                                noise_sigma, SplitTag::kNonMember, seed, 3);
  return result;
}

GradientBundle LossAndGrad(const ToyModel& model,
                           const Eigen::MatrixXd& features,
                           const Eigen::VectorXd& targets) {
  CheckBatch(model, features, targets);
  GradientBundle bundle;
  bundle.grads = ZeroGrads(model);
  const Eigen::Index n = features.rows();
  for (Eigen::Index i = 0; i < n; ++i) {
    bundle.loss += AccumulateExampleGrad(model, features.row(i).transpose(),
                                         targets[i], bundle.grads);
  }
  bundle.loss /= static_cast<double>(n);
  for (Eigen::VectorXd& g : bundle.grads) g /= static_cast<double>(n);
  return bundle;
}

std::vector<GradientBundle> PerExampleLossAndGrad(
    const ToyModel& model, const Eigen::MatrixXd& features,
    const Eigen::VectorXd& targets) {
  CheckBatch(model, features, targets);
  std::vector<GradientBundle> bundles;
  bundles.reserve(features.rows());
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    GradientBundle b;
    b.grads = ZeroGrads(model);
    b.loss = AccumulateExampleGrad(model, features.row(i).transpose(),
                                   targets[i], b.grads);
    bundles.push_back(std::move(b));
  }
  return bundles;
}

GradientBundle FiniteDiffGrad(const ToyModel& model,
                              const Eigen::MatrixXd& features,
                              const Eigen::VectorXd& targets, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("models: h must be > 0");
  CheckBatch(model, features, targets);
  ToyModel probe = model;
  GradientBundle bundle;
  bundle.grads = ZeroGrads(model);
  auto mean_loss = [&]() {
    double total = 0.0;
    for (Eigen::Index i = 0; i < features.rows(); ++i) {
      total +=
          PerExampleLoss(probe, features.row(i).transpose(), targets[i]);
    }
    return total / static_cast<double>(features.rows());
  };
  for (std::size_t t = 0; t < model.tensors.size(); ++t) {
    for (Eigen::Index i = 0; i < model.tensors[t].values.size(); ++i) {
      const double original = probe.tensors[t].values[i];
      probe.tensors[t].values[i] = original + h;
      const double up = mean_loss();
      probe.tensors[t].values[i] = original - h;
      const double down = mean_loss();
      probe.tensors[t].values[i] = original;
      bundle.grads[t][i] = (up - down) / (2.0 * h);
    }
  }
  bundle.loss = mean_loss();
  return bundle;
}

double PerExampleLoss(const ToyModel& model, const Eigen::VectorXd& x,
                      double y) {
  switch (model.kind) {
    case ModelKind::kLinearRegression: {
      const double r = ModelLogitOrPrediction(model, x) - y;
      return 0.5 * r * r;
    }
    case ModelKind::kLogisticRegression:
    case ModelKind::kMlp:
      return LogitNll(ModelLogitOrPrediction(model, x), y);
  }
  throw std::logic_error("unreachable");
}

EvalMetrics Evaluate(const ToyModel& model, const Dataset& dataset) {
  if (dataset.size() == 0) {
    throw std::invalid_argument("models: dataset must be non-empty");
  }
  EvalMetrics metrics;
  metrics.is_regression = model.kind == ModelKind::kLinearRegression;
  double total = 0.0;
  for (Eigen::Index i = 0; i < dataset.size(); ++i) {
    const Eigen::VectorXd x = dataset.features.row(i).transpose();
    if (metrics.is_regression) {
      const double r = ModelLogitOrPrediction(model, x) - dataset.targets[i];
      total += r * r;
    } else {
      total += LogitNll(ModelLogitOrPrediction(model, x), dataset.targets[i]);
    }
  }
  total /= static_cast<double>(dataset.size());
  if (metrics.is_regression) {
    metrics.mse = total;
  } else {
    metrics.nll = total;
    metrics.perplexity_analog = std::exp(total);
  }
  return metrics;
}

std::pair<Eigen::MatrixXd, Eigen::VectorXd> MakeBatch(
    const Dataset& dataset, const std::vector<std::size_t>& indices) {
  Eigen::MatrixXd features(indices.size(), dataset.features.cols());
  Eigen::VectorXd targets(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    features.row(i) = dataset.features.row(indices[i]);
    targets[i] = dataset.targets[indices[i]];
  }
  return {std::move(features), std::move(targets)};
}

void WriteDatasetCsv(std::ostream& os, const Dataset& member,
                     const Dataset& nonmember) {
  const Eigen::Index d = member.features.cols();
  for (Eigen::Index j = 0; j < d; ++j) os << 'f' << j << ',';
  os << "target,split_tag\n";
  auto write_rows = [&os, d](const Dataset& ds, const char* tag) {
    for (Eigen::Index i = 0; i < ds.size(); ++i) {
      for (Eigen::Index j = 0; j < d; ++j) {
        os << FormatDouble(ds.features(i, j)) << ',';
      }
      os << FormatDouble(ds.targets[i]) << ',' << tag << '\n';
    }
  };
  write_rows(member, "member");
  write_rows(nonmember, "nonmember");
}

std::pair<Dataset, Dataset> ReadDatasetCsv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) {
    throw std::runtime_error("dataset csv: missing header");
  }
  const auto header = SplitCsvLine(line);
  if (header.size() < 3 || header[header.size() - 1] != "split_tag" ||
      header[header.size() - 2] != "target") {
    throw std::runtime_error("dataset csv: unexpected header");
  }
  const std::size_t d = header.size() - 2;
  std::vector<std::vector<double>> member_rows, nonmember_rows;
  std::vector<double> member_targets, nonmember_targets;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto fields = SplitCsvLine(line);
    if (fields.size() != header.size()) {
      throw std::runtime_error("dataset csv: ragged row");
    }
    std::vector<double> row(d);
    for (std::size_t j = 0; j < d; ++j) row[j] = ParseDouble(fields[j]);
    const double target = ParseDouble(fields[d]);
    if (fields[d + 1] == "member") {
      member_rows.push_back(std::move(row));
      member_targets.push_back(target);
    } else if (fields[d + 1] == "nonmember") {
      nonmember_rows.push_back(std::move(row));
      nonmember_targets.push_back(target);
    } else {
      throw std::runtime_error("dataset csv: unknown split tag");
    }
  }
  auto build = [d](const std::vector<std::vector<double>>& rows,
                   const std::vector<double>& targets, SplitTag tag) {
    Dataset ds;
    ds.split = tag;
    ds.features.resize(rows.size(), d);
    ds.targets.resize(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (std::size_t j = 0; j < d; ++j) ds.features(i, j) = rows[i][j];
      ds.targets[i] = targets[i];
    }
    return ds;
  };
  return {build(member_rows, member_targets, SplitTag::kMember),
          build(nonmember_rows, nonmember_targets, SplitTag::kNonMember)};
}

}  // namespace ferret
