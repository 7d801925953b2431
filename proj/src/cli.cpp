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

#include "ferret/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"

#include "ferret/accountant.hpp"
#include "ferret/evaluation.hpp"
#include "ferret/io.hpp"

namespace ferret::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Config parsing
// ---------------------------------------------------------------------------

const char* KindName(ModelKind kind) {
  switch (kind) {
    case ModelKind::kLinearRegression:
      return "linear_regression";
    case ModelKind::kLogisticRegression:
      return "logistic_regression";
    case ModelKind::kMlp:
      return "mlp";
  }
  return "?";
}

bool ParseKind(const std::string& name, ModelKind& kind) {
  if (name == "linear_regression") {
    kind = ModelKind::kLinearRegression;
  } else if (name == "logistic_regression") {
    kind = ModelKind::kLogisticRegression;
  } else if (name == "mlp") {
    kind = ModelKind::kMlp;
  } else {
    return false;
  }
  return true;
}

bool ParseMethod(const std::string& label, MethodSpec& spec) {
  spec.label = label;
  if (label == "ferret-max") {
    spec.method = TrainMethod::kFerret;
    spec.scheme = PartitionScheme::Max();
  } else if (label == "ferret-eighth") {
    spec.method = TrainMethod::kFerret;
    spec.scheme = PartitionScheme::BucketOfK(8);
  } else if (label == "ferret-2") {
    spec.method = TrainMethod::kFerret;
    spec.scheme = PartitionScheme::Two();
  } else if (label == "dpsgd") {
    spec.method = TrainMethod::kDpsgdLite;
  } else if (label == "nonprivate") {
    spec.method = TrainMethod::kNonPrivate;
  } else {
    return false;
  }
  return true;
}

const char* SchemeName(const PartitionScheme& scheme) {
  switch (scheme.kind) {
    case PartitionScheme::Kind::kMax:
      return "max";
    case PartitionScheme::Kind::kTwo:
      return "two";
    case PartitionScheme::Kind::kBucketOfK:
      return "bucket";
  }
  return "?";
}

class ConfigReader {
 public:
  ConfigReader(const json& root, std::vector<std::string>& errors)
      : root_(root), errors_(errors) {}

  double Number(const std::string& section, const std::string& key,
                double fallback, bool required = false) {
    const json* v = Lookup(section, key, required);
    if (v == nullptr) return fallback;
    if (!v->is_number()) {
      Fail(section, key, "must be a number");
      return fallback;
    }
    return v->get<double>();
  }

  std::int64_t Integer(const std::string& section, const std::string& key,
                       std::int64_t fallback, bool required = false) {
    const json* v = Lookup(section, key, required);
    if (v == nullptr) return fallback;
    if (!v->is_number_integer()) {
      Fail(section, key, "must be an integer");
      return fallback;
    }
    return v->get<std::int64_t>();
  }

  std::string Text(const std::string& section, const std::string& key,
                   const std::string& fallback, bool required = false) {
    const json* v = Lookup(section, key, required);
    if (v == nullptr) return fallback;
    if (!v->is_string()) {
      Fail(section, key, "must be a string");
      return fallback;
    }
    return v->get<std::string>();
  }

  const json* Lookup(const std::string& section, const std::string& key,
                     bool required) {
    if (!root_.contains(section) || !root_[section].is_object()) {
      if (required) Fail(section, key, "missing (section absent)");
      return nullptr;
    }
    const json& sec = root_[section];
    if (!sec.contains(key)) {
      if (required) Fail(section, key, "missing");
      return nullptr;
    }
    return &sec[key];
  }

  void Fail(const std::string& section, const std::string& key,
            const std::string& what) {
    errors_.push_back(section + "." + key + ": " + what);
  }

 private:
  const json& root_;
  std::vector<std::string>& errors_;
};

}  // namespace

std::int64_t ExperimentConfig::StepsPerEpoch() const {
  if (steps_per_epoch > 0) return steps_per_epoch;
  return static_cast<std::int64_t>(
      std::ceil(static_cast<double>(dataset.n) / batch_expectation));
}

ExperimentConfig ParseExperimentConfig(const std::string& json_text,
                                       std::vector<std::string>& errors) {
  ExperimentConfig cfg;
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    errors.push_back(std::string("config is not valid JSON: ") + e.what());
    return cfg;
  }
  if (!root.is_object()) {
    errors.push_back("config root must be a JSON object");
    return cfg;
  }
  ConfigReader r(root, errors);

  const std::string kind_name =
      r.Text("dataset", "kind", "linear_regression", true);
  if (!ParseKind(kind_name, cfg.dataset.kind)) {
    r.Fail("dataset", "kind",
           "must be linear_regression, logistic_regression or mlp");
  }
  cfg.dataset.n = static_cast<int>(r.Integer("dataset", "n", 0, true));
  if (cfg.dataset.n < 1) r.Fail("dataset", "n", "must be >= 1");
  cfg.dataset.dim = static_cast<int>(r.Integer("dataset", "dim", 0, true));
  if (cfg.dataset.dim < 1) r.Fail("dataset", "dim", "must be >= 1");
  cfg.dataset.noise_sigma = r.Number("dataset", "noise_sigma", 0.0);
  if (cfg.dataset.noise_sigma < 0.0) {
    r.Fail("dataset", "noise_sigma", "must be >= 0");
  }
  cfg.dataset.seed =
      static_cast<std::uint64_t>(r.Integer("dataset", "seed", 0));
  cfg.dataset.hidden = static_cast<int>(r.Integer("dataset", "hidden", 16));
  if (cfg.dataset.kind == ModelKind::kMlp && cfg.dataset.hidden < 1) {
    r.Fail("dataset", "hidden", "must be >= 1");
  }

  cfg.batch_expectation = r.Number("train", "batch_expectation", 0.0, true);
  if (!(cfg.batch_expectation > 0.0)) {
    r.Fail("train", "batch_expectation", "must be > 0");
  } else if (cfg.dataset.n >= 1 &&
             cfg.batch_expectation > static_cast<double>(cfg.dataset.n)) {
    r.Fail("train", "batch_expectation", "must be <= dataset.n");
  }
  cfg.steps_per_epoch = r.Integer("train", "steps_per_epoch", 0);
  if (cfg.steps_per_epoch < 0) {
    r.Fail("train", "steps_per_epoch", "must be >= 0");
  }
  cfg.learning_rate = r.Number("train", "learning_rate", 0.0, true);
  if (!(cfg.learning_rate > 0.0)) {
    r.Fail("train", "learning_rate", "must be > 0");
  }
  const std::string opt = r.Text("train", "optimizer", "sgd");
  if (opt == "sgd") {
    cfg.optimizer.kind = OptimizerRule::Kind::kSgd;
  } else if (opt == "adam") {
    cfg.optimizer.kind = OptimizerRule::Kind::kAdamLike;
  } else {
    r.Fail("train", "optimizer", "must be sgd or adam");
  }
  if (root.contains("train") && root["train"].is_object() &&
      root["train"].contains("adam") && root["train"]["adam"].is_object()) {
    const json& adam = root["train"]["adam"];
    cfg.optimizer.beta1 = adam.value("beta1", cfg.optimizer.beta1);
    cfg.optimizer.beta2 = adam.value("beta2", cfg.optimizer.beta2);
    cfg.optimizer.epsilon = adam.value("epsilon", cfg.optimizer.epsilon);
    if (!(cfg.optimizer.beta1 >= 0.0 && cfg.optimizer.beta1 < 1.0)) {
      r.Fail("train", "adam.beta1", "must be in [0, 1)");
    }
    if (!(cfg.optimizer.beta2 >= 0.0 && cfg.optimizer.beta2 < 1.0)) {
      r.Fail("train", "adam.beta2", "must be in [0, 1)");
    }
    if (!(cfg.optimizer.epsilon > 0.0)) {
      r.Fail("train", "adam.epsilon", "must be > 0");
    }
  }
  if (root.contains("train") && root["train"].is_object() &&
      root["train"].contains("ferret") &&
      root["train"]["ferret"].is_object()) {
    const json& f = root["train"]["ferret"];
    cfg.ferret_magnitude = f.value("magnitude", cfg.ferret_magnitude);
    cfg.ferret_dither_sigma = f.value("dither_sigma", cfg.ferret_dither_sigma);
    if (!(cfg.ferret_magnitude > 0.0)) {
      r.Fail("train", "ferret.magnitude", "must be > 0");
    }
    if (cfg.ferret_dither_sigma < 0.0) {
      r.Fail("train", "ferret.dither_sigma", "must be >= 0");
    }
  }
  if (root.contains("train") && root["train"].is_object() &&
      root["train"].contains("dpsgd") && root["train"]["dpsgd"].is_object()) {
    const json& d = root["train"]["dpsgd"];
    cfg.dpsgd.clip = d.value("clip", cfg.dpsgd.clip);
    cfg.dpsgd.noise_sigma = d.value("noise_sigma", cfg.dpsgd.noise_sigma);
    if (!(cfg.dpsgd.clip > 0.0)) r.Fail("train", "dpsgd.clip", "must be > 0");
    if (cfg.dpsgd.noise_sigma < 0.0) {
      r.Fail("train", "dpsgd.noise_sigma", "must be >= 0");
    }
  }

  if (root.contains("grid") && root["grid"].is_object()) {
    const json& grid = root["grid"];
    if (grid.contains("methods") && grid["methods"].is_array()) {
      for (const json& m : grid["methods"]) {
        MethodSpec spec;
        if (!m.is_string() || !ParseMethod(m.get<std::string>(), spec)) {
          r.Fail("grid", "methods",
                 "entries must be ferret-max, ferret-eighth, ferret-2, dpsgd "
                 "or nonprivate");
          continue;
        }
        cfg.methods.push_back(spec);
      }
    }
    if (grid.contains("epsilons") && grid["epsilons"].is_array()) {
      for (const json& e : grid["epsilons"]) {
        if (!e.is_number() || !(e.get<double>() > 0.0)) {
          r.Fail("grid", "epsilons", "entries must be positive numbers");
          continue;
        }
        cfg.epsilons.push_back(e.get<double>());
      }
    }
    if (grid.contains("epochs") && grid["epochs"].is_array()) {
      for (const json& e : grid["epochs"]) {
        if (!e.is_number_integer() || e.get<std::int64_t>() < 1) {
          r.Fail("grid", "epochs", "entries must be integers >= 1");
          continue;
        }
        cfg.epochs.push_back(e.get<std::int64_t>());
      }
    }
    if (grid.contains("seeds") && grid["seeds"].is_array()) {
      for (const json& s : grid["seeds"]) {
        if (!s.is_number_integer() || s.get<std::int64_t>() < 0) {
          r.Fail("grid", "seeds", "entries must be integers >= 0");
          continue;
        }
        cfg.seeds.push_back(static_cast<std::uint64_t>(s.get<std::int64_t>()));
      }
    }
  }

  if (root.contains("sweep") && root["sweep"].is_object()) {
    const json& sweep = root["sweep"];
    if (sweep.contains("sigmas") && sweep["sigmas"].is_array()) {
      for (const json& s : sweep["sigmas"]) {
        if (!s.is_number() || s.get<double>() < 0.0) {
          r.Fail("sweep", "sigmas", "entries must be numbers >= 0");
          continue;
        }
        cfg.sweep_sigmas.push_back(s.get<double>());
      }
    }
    if (sweep.contains("seeds") && sweep["seeds"].is_array()) {
      for (const json& s : sweep["seeds"]) {
        if (!s.is_number_integer() || s.get<std::int64_t>() < 0) {
          r.Fail("sweep", "seeds", "entries must be integers >= 0");
          continue;
        }
        cfg.sweep_seeds.push_back(
            static_cast<std::uint64_t>(s.get<std::int64_t>()));
      }
    }
    if (sweep.contains("epsilon")) {
      if (!sweep["epsilon"].is_number() ||
          !(sweep["epsilon"].get<double>() > 0.0)) {
        r.Fail("sweep", "epsilon", "must be a positive number");
      } else {
        cfg.sweep_epsilon = sweep["epsilon"].get<double>();
      }
    }
    if (sweep.contains("firing_probability")) {
      const json& p = sweep["firing_probability"];
      if (!p.is_number() ||
          !(p.get<double>() >= 0.0 && p.get<double>() <= 1.0)) {
        r.Fail("sweep", "firing_probability", "must be in [0, 1]");
      } else {
        cfg.sweep_firing_probability = p.get<double>();
      }
    }
  }
  return cfg;
}

namespace {

// ---------------------------------------------------------------------------
// Shared command plumbing
// ---------------------------------------------------------------------------

struct GridCell {
  MethodSpec method;
  double epsilon = 0.0;
  std::int64_t epochs = 1;
  std::uint64_t seed = 0;
};

std::string CellDirName(const GridCell& cell) {
  std::ostringstream os;
  os << cell.method.label << "_eps" << FormatDouble(cell.epsilon) << "_ep"
     << cell.epochs << "_seed" << cell.seed;
  return os.str();
}

std::string ResolveOutDir(const std::string& flag_value,
                          std::vector<std::string>& errors) {
  if (!flag_value.empty()) return flag_value;
  const char* env = std::getenv("FERRET_LAB_OUT");
  if (env != nullptr && *env != '\0') return env;
  errors.push_back(
      "no output directory: pass --out or set FERRET_LAB_OUT");
  return {};
}

std::vector<std::uint64_t> ParseSeedList(const std::string& text,
                                         std::vector<std::string>& errors) {
  std::vector<std::uint64_t> seeds;
  std::istringstream is(text);
  std::string item;
  while (std::getline(is, item, ',')) {
    try {
      seeds.push_back(std::stoull(item));
    } catch (const std::exception&) {
      errors.push_back("--seed-list: not an integer: '" + item + "'");
    }
  }
  if (seeds.empty()) errors.push_back("--seed-list: empty list");
  return seeds;
}

int ReportErrors(const std::vector<std::string>& errors) {
  for (const std::string& e : errors) std::cerr << "config error: " << e << "\n";
  return kExitConfigError;
}

TrainConfig CellTrainConfig(const ExperimentConfig& cfg, const GridCell& cell) {
  TrainConfig tc;
  tc.method = cell.method.method;
  tc.total_steps = cell.epochs * cfg.StepsPerEpoch();
  tc.batch_expectation = cfg.batch_expectation;
  tc.learning_rate = cfg.learning_rate;
  tc.optimizer = cfg.optimizer;
  tc.seed = cell.seed;
  tc.ferret.scheme = cell.method.scheme;
  tc.ferret.magnitude = cfg.ferret_magnitude;
  tc.ferret.dither_sigma = cfg.ferret_dither_sigma;
  if (cell.method.method == TrainMethod::kFerret) {
    tc.ferret.epsilon_target = cell.epsilon;
  }
  tc.dpsgd = cfg.dpsgd;
  return tc;
}

// Runs tasks 0..count-1 on up to `workers` threads. Each task writes its own
// files, so scheduling order cannot leak into outputs.
void RunParallel(std::size_t count, int workers,
                 const std::function<void(std::size_t)>& task) {
  const int n = std::max(1, std::min<int>(workers, static_cast<int>(count)));
  if (n == 1) {
    for (std::size_t i = 0; i < count; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::string> failures;
  std::mutex failures_mutex;
  std::vector<std::thread> pool;
  pool.reserve(n);
  for (int w = 0; w < n; ++w) {
    pool.emplace_back([&]() {
      for (std::size_t i = next.fetch_add(1); i < count;
           i = next.fetch_add(1)) {
        try {
          task(i);
        } catch (const std::exception& e) {
          std::lock_guard<std::mutex> lock(failures_mutex);
          failures.push_back(e.what());
        }
      }
    });
  }
  for (std::thread& t : pool) t.join();
  if (!failures.empty()) throw std::runtime_error(failures.front());
}

void WriteRunDir(const fs::path& dir, const ExperimentConfig& cfg,
                 const GridCell& cell, const TrainConfig& tc,
                 const RunRecord& record, const Dataset& members) {
  fs::create_directories(dir);

  KeyValueFile meta;
  meta.Set("method", cell.method.label);
  meta.SetDouble("epsilon_budget", cell.epsilon);
  meta.SetDouble("epsilon_achieved", record.epsilon_achieved);
  if (cell.method.method == TrainMethod::kFerret) {
    meta.Set("scheme", SchemeName(cell.method.scheme));
    meta.SetDouble("p_star", record.p_used);
    meta.Set("groups", std::to_string(record.groups));
    meta.SetDouble("release_magnitude", tc.ferret.magnitude);
    meta.SetDouble("dither_sigma", tc.ferret.dither_sigma);
  }
  if (cell.method.method == TrainMethod::kDpsgdLite) {
    meta.SetDouble("clip", tc.dpsgd.clip);
    meta.SetDouble("noise_multiplier", tc.dpsgd.noise_sigma);
  }
  meta.Set("epochs", std::to_string(cell.epochs));
  meta.Set("steps_per_epoch", std::to_string(cfg.StepsPerEpoch()));
  meta.Set("total_steps", std::to_string(tc.total_steps));
  meta.SetDouble("batch_expectation", tc.batch_expectation);
  meta.SetDouble("subsample_rate", record.subsample_rate);
  meta.SetDouble("learning_rate", tc.learning_rate);
  meta.Set("optimizer", tc.optimizer.kind == OptimizerRule::Kind::kSgd
                            ? "sgd"
                            : "adam");
  if (tc.optimizer.kind == OptimizerRule::Kind::kAdamLike) {
    meta.SetDouble("adam_beta1", tc.optimizer.beta1);
    meta.SetDouble("adam_beta2", tc.optimizer.beta2);
    meta.SetDouble("adam_epsilon", tc.optimizer.epsilon);
  }
  meta.Set("seed", std::to_string(cell.seed));
  meta.Set("model_kind", KindName(cfg.dataset.kind));
  meta.Set("input_dim", std::to_string(cfg.dataset.dim));
  if (cfg.dataset.kind == ModelKind::kMlp) {
    meta.Set("hidden_dim", std::to_string(cfg.dataset.hidden));
  }
  meta.Set("dataset_n", std::to_string(cfg.dataset.n));
  meta.SetDouble("dataset_noise_sigma", cfg.dataset.noise_sigma);
  meta.Set("dataset_seed", std::to_string(cfg.dataset.seed));

  const EvalMetrics metrics = Evaluate(record.final_model, members);
  meta.Set("loss_metric", metrics.is_regression ? "mse" : "nll");
  meta.SetDouble("final_loss", metrics.primary());
  meta.Set("fired_total", std::to_string(record.total_fired()));
  WriteFile((dir / "metadata.txt").string(), meta.Serialize());

  std::ostringstream steps;
  WriteStepsCsv(steps, record);
  WriteFile((dir / "steps.csv").string(), steps.str());

  std::ostringstream model_csv;
  WriteModelCsv(model_csv, record.final_model);
  WriteFile((dir / "model.csv").string(), model_csv.str());

  if (cell.method.method == TrainMethod::kFerret) {
    std::ostringstream log;
    WriteUpdateLogCsv(log, record.update_log);
    WriteFile((dir / "updates.csv").string(), log.str());
  }

  // Wall-clock lives apart from the deterministic artifacts; reruns
  // reproduce everything above byte for byte, never this file.
  KeyValueFile timing;
  timing.SetDouble("duration_seconds", record.duration_seconds);
  WriteFile((dir / "timing.txt").string(), timing.Serialize());
}

// ---------------------------------------------------------------------------
// plan
// ---------------------------------------------------------------------------

int CmdPlan(std::int64_t groups, std::int64_t steps, double subsample_rate,
            double epsilon) {
  PrivacyPlan plan;
  try {
    plan = MakePlan({groups, steps, subsample_rate, epsilon});
  } catch (const BudgetInfeasibleError& e) {
    std::cerr << "infeasible: epsilon " << FormatDouble(e.epsilon())
              << " reaches or exceeds epsilon_max "
              << FormatDouble(e.epsilon_max())
              << " = G*T*s*ln2; choose a smaller budget or more groups/steps\n";
    return kExitBudgetInfeasible;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  }
  std::cout << "FERRET privacy plan\n"
            << "  groups G:          " << groups << "\n"
            << "  steps T:           " << steps << "\n"
            << "  subsample rate s:  " << FormatDouble(subsample_rate) << "\n"
            << "  epsilon target:    " << FormatDouble(epsilon) << " nats ("
            << FormatDouble(NatsToBits(epsilon)) << " bits)\n"
            << "  epsilon_max:       " << FormatDouble(plan.epsilon_max)
            << " nats (" << FormatDouble(NatsToBits(plan.epsilon_max))
            << " bits)\n"
            << "  p_star:            " << FormatDouble(plan.p_star) << "\n"
            << "  epsilon achieved:  " << FormatDouble(plan.epsilon_achieved)
            << " nats\n"
            << "---\n"
            << "G=" << groups << "\n"
            << "T=" << steps << "\n"
            << "s=" << FormatDouble(subsample_rate) << "\n"
            << "epsilon_target=" << FormatDouble(epsilon) << "\n"
            << "epsilon_target_bits=" << FormatDouble(NatsToBits(epsilon))
            << "\n"
            << "epsilon_max=" << FormatDouble(plan.epsilon_max) << "\n"
            << "epsilon_max_bits=" << FormatDouble(NatsToBits(plan.epsilon_max))
            << "\n"
            << "p_star=" << FormatDouble(plan.p_star) << "\n"
            << "epsilon_achieved=" << FormatDouble(plan.epsilon_achieved)
            << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

int CmdTrain(const std::string& config_path, const std::string& out_flag,
             int workers, const std::string& seed_list) {
  std::vector<std::string> errors;
  std::string config_text;
  try {
    config_text = ReadFileOrThrow(config_path);
  } catch (const std::exception& e) {
    std::cerr << "missing artifact: " << e.what() << "\n";
    return kExitMissingArtifact;
  }
  ExperimentConfig cfg = ParseExperimentConfig(config_text, errors);
  if (!seed_list.empty()) cfg.seeds = ParseSeedList(seed_list, errors);
  if (cfg.methods.empty()) errors.push_back("grid.methods: must be non-empty");
  if (cfg.epsilons.empty()) {
    errors.push_back("grid.epsilons: must be non-empty");
  }
  if (cfg.epochs.empty()) errors.push_back("grid.epochs: must be non-empty");
  if (cfg.seeds.empty()) errors.push_back("grid.seeds: must be non-empty");
  const std::string out_dir = ResolveOutDir(out_flag, errors);
  if (!errors.empty()) return ReportErrors(errors);

  // Every FERRET (epsilon, epochs) pair must be feasible before anything runs.
  const ToyModel probe = MakeModel(cfg.dataset.kind, cfg.dataset.dim, 0,
                                   cfg.dataset.hidden);
  for (const MethodSpec& method : cfg.methods) {
    if (method.method != TrainMethod::kFerret) continue;
    const GroupPartition partition =
        PartitionGroups(probe.TensorLengths(), method.scheme);
    for (double epsilon : cfg.epsilons) {
      for (std::int64_t epochs : cfg.epochs) {
        const std::int64_t steps = epochs * cfg.StepsPerEpoch();
        const double s =
            cfg.batch_expectation / static_cast<double>(cfg.dataset.n);
        try {
          OptimalP(epsilon, partition.num_groups(), steps, s);
        } catch (const BudgetInfeasibleError& e) {
          std::cerr << "infeasible: " << method.label << " at epsilon "
                    << FormatDouble(epsilon) << ", " << epochs
                    << " epoch(s): epsilon_max is "
                    << FormatDouble(e.epsilon_max()) << "\n";
          return kExitBudgetInfeasible;
        }
      }
    }
  }

  const SynthResult data =
      SynthDataset(cfg.dataset.kind, cfg.dataset.n, cfg.dataset.dim,
                   cfg.dataset.noise_sigma, cfg.dataset.seed,
                   cfg.dataset.hidden);

  fs::create_directories(out_dir);
  WriteFile((fs::path(out_dir) / "config.json").string(), config_text);
  std::ostringstream dataset_csv;
  WriteDatasetCsv(dataset_csv, data.member, data.nonmember);
  WriteFile((fs::path(out_dir) / "dataset.csv").string(), dataset_csv.str());

  std::vector<GridCell> cells;
  for (const MethodSpec& method : cfg.methods) {
    for (double epsilon : cfg.epsilons) {
      for (std::int64_t epochs : cfg.epochs) {
        for (std::uint64_t seed : cfg.seeds) {
          cells.push_back({method, epsilon, epochs, seed});
        }
      }
    }
  }
  try {
    RunParallel(cells.size(), workers, [&](std::size_t i) {
      const GridCell& cell = cells[i];
      const TrainConfig tc = CellTrainConfig(cfg, cell);
      const ToyModel model = MakeModel(cfg.dataset.kind, cfg.dataset.dim,
                                       cell.seed, cfg.dataset.hidden);
      const RunRecord record = Train(model, data.member, tc);
      WriteRunDir(fs::path(out_dir) / CellDirName(cell), cfg, cell, tc, record,
                  data.member);
    });
  } catch (const std::exception& e) {
    std::cerr << "run failed: " << e.what() << "\n";
    return kExitConfigError;
  }
  std::cout << "wrote " << cells.size() << " run(s) under " << out_dir << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// sweep-dither
// ---------------------------------------------------------------------------

int CmdSweepDither(const std::string& config_path, const std::string& out_flag,
                   int workers, const std::string& seed_list) {
  std::vector<std::string> errors;
  std::string config_text;
  try {
    config_text = ReadFileOrThrow(config_path);
  } catch (const std::exception& e) {
    std::cerr << "missing artifact: " << e.what() << "\n";
    return kExitMissingArtifact;
  }
  ExperimentConfig cfg = ParseExperimentConfig(config_text, errors);
  if (!seed_list.empty()) cfg.sweep_seeds = ParseSeedList(seed_list, errors);
  if (cfg.dataset.kind != ModelKind::kLinearRegression) {
    errors.push_back("dataset.kind: sweep-dither runs on linear_regression");
  }
  if (cfg.sweep_sigmas.empty()) {
    errors.push_back("sweep.sigmas: must be non-empty");
  } else if (std::find(cfg.sweep_sigmas.begin(), cfg.sweep_sigmas.end(), 0.0) ==
             cfg.sweep_sigmas.end()) {
    errors.push_back("sweep.sigmas: must include 0 as the baseline");
  }
  if (cfg.sweep_seeds.empty()) {
    errors.push_back("sweep.seeds: must be non-empty");
  }
  if (cfg.sweep_epsilon.has_value() &&
      cfg.sweep_firing_probability.has_value()) {
    errors.push_back("sweep: give epsilon or firing_probability, not both");
  }
  const std::string out_dir = ResolveOutDir(out_flag, errors);
  if (!errors.empty()) return ReportErrors(errors);

  const std::int64_t steps =
      (cfg.epochs.empty() ? 1 : cfg.epochs.front()) * cfg.StepsPerEpoch();
  const SynthResult data =
      SynthDataset(cfg.dataset.kind, cfg.dataset.n, cfg.dataset.dim,
                   cfg.dataset.noise_sigma, cfg.dataset.seed,
                   cfg.dataset.hidden);

  std::vector<double> sigmas = cfg.sweep_sigmas;
  std::sort(sigmas.begin(), sigmas.end());
  sigmas.erase(std::unique(sigmas.begin(), sigmas.end()), sigmas.end());

  std::vector<std::vector<double>> final_mse(
      sigmas.size(), std::vector<double>(cfg.sweep_seeds.size(), 0.0));
  const std::size_t total = sigmas.size() * cfg.sweep_seeds.size();
  try {
    RunParallel(total, workers, [&](std::size_t task) {
      const std::size_t si = task / cfg.sweep_seeds.size();
      const std::size_t ki = task % cfg.sweep_seeds.size();
      TrainConfig tc;
      tc.method = TrainMethod::kFerret;
      tc.total_steps = steps;
      tc.batch_expectation = cfg.batch_expectation;
      tc.learning_rate = cfg.learning_rate;
      tc.optimizer = cfg.optimizer;
      tc.seed = cfg.sweep_seeds[ki];
      tc.ferret.scheme = PartitionScheme::Max();
      tc.ferret.magnitude = cfg.ferret_magnitude;
      tc.ferret.dither_sigma = sigmas[si];
      if (cfg.sweep_epsilon.has_value()) {
        tc.ferret.epsilon_target = *cfg.sweep_epsilon;
      } else {
        tc.ferret.firing_probability =
            cfg.sweep_firing_probability.value_or(0.5);
      }
      const ToyModel model = MakeModel(cfg.dataset.kind, cfg.dataset.dim,
                                       tc.seed, cfg.dataset.hidden);
      const RunRecord record = Train(model, data.member, tc);
      final_mse[si][ki] = Evaluate(record.final_model, data.member).mse;
    });
  } catch (const BudgetInfeasibleError& e) {
    std::cerr << "infeasible: " << e.what() << "\n";
    return kExitBudgetInfeasible;
  } catch (const std::exception& e) {
    std::cerr << "run failed: " << e.what() << "\n";
    return kExitConfigError;
  }

  std::ostringstream csv;
  csv << "sigma,q25,median,q75\n";
  for (std::size_t si = 0; si < sigmas.size(); ++si) {
    csv << FormatDouble(sigmas[si]) << ','
        << FormatDouble(Quantile(final_mse[si], 0.25)) << ','
        << FormatDouble(Quantile(final_mse[si], 0.5)) << ','
        << FormatDouble(Quantile(final_mse[si], 0.75)) << '\n';
  }
  fs::create_directories(out_dir);
  WriteFile((fs::path(out_dir) / "sweep.csv").string(), csv.str());
  std::cout << "wrote sweep over " << sigmas.size() << " sigma value(s), "
            << cfg.sweep_seeds.size() << " seed(s) to " << out_dir
            << "/sweep.csv\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// mia
// ---------------------------------------------------------------------------

int CmdMia(const std::string& run_dir, const std::string& data_flag,
           const std::string& out_flag) {
  const fs::path run(run_dir);
  const fs::path meta_path = run / "metadata.txt";
  const fs::path model_path = run / "model.csv";
  const fs::path data_path =
      data_flag.empty() ? run.parent_path() / "dataset.csv"
                        : fs::path(data_flag);
  for (const fs::path& p : {meta_path, model_path, data_path}) {
    if (!fs::exists(p)) {
      std::cerr << "missing artifact: " << p.string() << "\n";
      return kExitMissingArtifact;
    }
  }
  try {
    const KeyValueFile meta =
        KeyValueFile::Parse(ReadFileOrThrow(meta_path.string()));
    ModelKind kind;
    if (!ParseKind(meta.GetOr("model_kind", ""), kind)) {
      std::cerr << "config error: metadata has no valid model_kind\n";
      return kExitConfigError;
    }
    const int dim = std::stoi(meta.GetOr("input_dim", "0"));
    const int hidden = std::stoi(meta.GetOr("hidden_dim", "16"));
    ToyModel model = MakeModel(kind, dim, 0, hidden);
    std::istringstream model_csv(ReadFileOrThrow(model_path.string()));
    ReadModelCsvInto(model_csv, model);

    std::istringstream data_csv(ReadFileOrThrow(data_path.string()));
    const auto [member, nonmember] = ReadDatasetCsv(data_csv);

    const auto [member_scores, nonmember_scores] =
        MiaScores(model, member, nonmember);
    const MiaReport report = RocAuc(member_scores, nonmember_scores);

    const fs::path out = out_flag.empty() ? run : fs::path(out_flag);
    fs::create_directories(out);
    std::ostringstream roc_csv;
    WriteRocCsv(roc_csv, report);
    WriteFile((out / "mia_roc.csv").string(), roc_csv.str());
    KeyValueFile summary;
    summary.SetDouble("auc", report.auc);
    summary.SetDouble("advantage", report.advantage);
    summary.Set("members", std::to_string(member.size()));
    summary.Set("nonmembers", std::to_string(nonmember.size()));
    WriteFile((out / "mia_summary.txt").string(), summary.Serialize());
    std::cout << "auc=" << FormatDouble(report.auc)
              << " advantage=" << FormatDouble(report.advantage) << "\n";
  } catch (const std::exception& e) {
    std::cerr << "mia failed: " << e.what() << "\n";
    return kExitConfigError;
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

struct ReportRow {
  std::string method;
  std::string epsilon = "na";
  std::string epochs = "na";
  std::string seed = "na";
  std::string final_loss = "na";
  std::string auc = "na";
  std::string advantage = "na";
  std::string fired_count = "na";
  std::string duration = "na";
};

bool RowOrder(const ReportRow& a, const ReportRow& b) {
  auto key = [](const ReportRow& r) {
    const double eps = r.epsilon == "na" ? -1.0 : ParseDouble(r.epsilon);
    const double ep = r.epochs == "na" ? -1.0 : ParseDouble(r.epochs);
    const double seed = r.seed == "na" ? -1.0 : ParseDouble(r.seed);
    return std::make_tuple(r.method, eps, ep, seed);
  };
  return key(a) < key(b);
}

std::string CsvLine(const ReportRow& r) {
  std::ostringstream os;
  os << r.method << ',' << r.epsilon << ',' << r.epochs << ',' << r.seed << ','
     << r.final_loss << ',' << r.auc << ',' << r.advantage << ','
     << r.fired_count << ',' << r.duration;
  return os.str();
}

int CmdReport(const std::string& out_flag) {
  std::vector<std::string> errors;
  const std::string out_dir = ResolveOutDir(out_flag, errors);
  if (!errors.empty()) return ReportErrors(errors);
  if (!fs::exists(out_dir)) {
    std::cerr << "missing artifact: " << out_dir << "\n";
    return kExitMissingArtifact;
  }

  std::vector<ReportRow> rows;
  std::vector<std::string> run_dirs;
  for (const auto& entry : fs::directory_iterator(out_dir)) {
    if (entry.is_directory() && fs::exists(entry.path() / "metadata.txt")) {
      run_dirs.push_back(entry.path().string());
    }
  }
  std::sort(run_dirs.begin(), run_dirs.end());

  std::vector<std::string> seen;  // cell dir names found on disk
  for (const std::string& dir : run_dirs) {
    const KeyValueFile meta =
        KeyValueFile::Parse(ReadFileOrThrow(dir + "/metadata.txt"));
    ReportRow row;
    row.method = meta.GetOr("method", "na");
    row.epsilon = meta.GetOr("epsilon_budget", "na");
    row.epochs = meta.GetOr("epochs", "na");
    row.seed = meta.GetOr("seed", "na");
    row.final_loss = meta.GetOr("final_loss", "na");
    row.fired_count = meta.GetOr("fired_total", "na");
    if (fs::exists(fs::path(dir) / "mia_summary.txt")) {
      const KeyValueFile mia =
          KeyValueFile::Parse(ReadFileOrThrow(dir + "/mia_summary.txt"));
      row.auc = mia.GetOr("auc", "na");
      row.advantage = mia.GetOr("advantage", "na");
    }
    if (fs::exists(fs::path(dir) / "timing.txt")) {
      const KeyValueFile timing =
          KeyValueFile::Parse(ReadFileOrThrow(dir + "/timing.txt"));
      row.duration = timing.GetOr("duration_seconds", "na");
    }
    rows.push_back(row);
    seen.push_back(fs::path(dir).filename().string());
  }

  // A config copy lets us mark grid cells that never produced a run.
  const fs::path config_path = fs::path(out_dir) / "config.json";
  if (fs::exists(config_path)) {
    std::vector<std::string> config_errors;
    const ExperimentConfig cfg = ParseExperimentConfig(
        ReadFileOrThrow(config_path.string()), config_errors);
    if (config_errors.empty()) {
      for (const MethodSpec& method : cfg.methods) {
        for (double epsilon : cfg.epsilons) {
          for (std::int64_t epochs : cfg.epochs) {
            for (std::uint64_t seed : cfg.seeds) {
              const GridCell cell{method, epsilon, epochs, seed};
              const std::string name = CellDirName(cell);
              if (std::find(seen.begin(), seen.end(), name) != seen.end()) {
                continue;
              }
              ReportRow row;  // missing cell: everything else stays "na"
              row.method = method.label;
              row.epsilon = FormatDouble(epsilon);
              row.epochs = std::to_string(epochs);
              row.seed = std::to_string(seed);
              rows.push_back(row);
            }
          }
        }
      }
    }
  }

  std::sort(rows.begin(), rows.end(), RowOrder);
  std::ostringstream csv;
  csv << "method,epsilon,epochs,seed,final_loss,auc,advantage,fired_count,"
         "duration\n";
  for (const ReportRow& r : rows) csv << CsvLine(r) << '\n';
  WriteFile((fs::path(out_dir) / "report.csv").string(), csv.str());

  // Seed-averaged summary per (method, epsilon, epochs) cell group.
  std::ostringstream summary;
  summary << "method,epsilon,epochs,n_runs,mean_final_loss,mean_auc,"
             "mean_advantage,mean_fired_count,mean_duration\n";
  std::size_t i = 0;
  while (i < rows.size()) {
    std::size_t j = i;
    std::vector<const ReportRow*> block;
    while (j < rows.size() && rows[j].method == rows[i].method &&
           rows[j].epsilon == rows[i].epsilon &&
           rows[j].epochs == rows[i].epochs) {
      block.push_back(&rows[j]);
      ++j;
    }
    auto mean_of = [&block](std::string ReportRow::*field) -> std::string {
      double total = 0.0;
      int count = 0;
      for (const ReportRow* r : block) {
        const std::string& v = r->*field;
        if (v == "na") continue;
        total += ParseDouble(v);
        ++count;
      }
      return count == 0 ? "na" : FormatDouble(total / count);
    };
    summary << rows[i].method << ',' << rows[i].epsilon << ',' << rows[i].epochs
            << ',' << block.size() << ',' << mean_of(&ReportRow::final_loss)
            << ',' << mean_of(&ReportRow::auc) << ','
            << mean_of(&ReportRow::advantage) << ','
            << mean_of(&ReportRow::fired_count) << ','
            << mean_of(&ReportRow::duration) << '\n';
    i = j;
  }
  WriteFile((fs::path(out_dir) / "report_summary.csv").string(),
            summary.str());
  std::cout << "report over " << rows.size() << " row(s) written to "
            << out_dir << "\n";
  return kExitOk;
}

}  // namespace

// ---------------------------------------------------------------------------
// argument wiring
// ---------------------------------------------------------------------------

int Run(int argc, char** argv) {
  CLI::App app{"FERRET mechanism lab: privacy planning, desk-scale training, "
               "dither sweeps, and membership-inference evaluation"};
  app.require_subcommand(1);

  std::int64_t groups = 0, steps = 0;
  double subsample_rate = 0.0, epsilon = 0.0;
  auto* plan = app.add_subcommand("plan", "resolve p* and head-room");
  plan->add_option("--groups,-G", groups, "number of parameter groups")
      ->required();
  plan->add_option("--steps,-T", steps, "training steps")->required();
  plan->add_option("--subsample-rate,-s", subsample_rate, "s = B/N")
      ->required();
  plan->add_option("--epsilon,-e", epsilon, "target budget in nats")
      ->required();

  std::string config_path, out_dir, seed_list, run_dir, data_path;
  int workers = 1;
  auto* train = app.add_subcommand("train", "run the experiment grid");
  train->add_option("--config", config_path, "experiment JSON")->required();
  train->add_option("--out", out_dir, "output root (or FERRET_LAB_OUT)");
  train->add_option("--workers", workers, "parallel grid cells")
      ->check(CLI::PositiveNumber);
  train->add_option("--seed-list", seed_list, "comma-separated seeds");

  auto* sweep = app.add_subcommand("sweep-dither",
                                   "dither sigma sweep on linear regression");
  sweep->add_option("--config", config_path, "experiment JSON")->required();
  sweep->add_option("--out", out_dir, "output root (or FERRET_LAB_OUT)");
  sweep->add_option("--workers", workers, "parallel runs")
      ->check(CLI::PositiveNumber);
  sweep->add_option("--seed-list", seed_list, "comma-separated seeds");

  auto* mia = app.add_subcommand("mia", "loss-threshold membership inference");
  mia->add_option("--run", run_dir, "run directory")->required();
  mia->add_option("--data", data_path,
                  "dataset csv (default: <run>/../dataset.csv)");
  mia->add_option("--out", out_dir, "output directory (default: run dir)");

  auto* report = app.add_subcommand("report", "aggregate runs into a CSV");
  report->add_option("--out", out_dir, "output root (or FERRET_LAB_OUT)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfigError;
  }

  if (plan->parsed()) return CmdPlan(groups, steps, subsample_rate, epsilon);
  if (train->parsed()) return CmdTrain(config_path, out_dir, workers, seed_list);
  if (sweep->parsed()) {
    return CmdSweepDither(config_path, out_dir, workers, seed_list);
  }
  if (mia->parsed()) return CmdMia(run_dir, data_path, out_dir);
  if (report->parsed()) return CmdReport(out_dir);
  return kExitConfigError;
}

}  // namespace ferret::cli
