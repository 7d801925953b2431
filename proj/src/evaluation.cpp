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

#include "ferret/evaluation.hpp"

#include <algorithm>
#include <limits>
#include <ostream>
#include <stdexcept>

#include "ferret/io.hpp"

namespace ferret {
namespace {

// Mann-Whitney AUC from average ranks; exact halves keep the all-ties case
// at 0.5 with no rounding.
double RankSumAuc(const std::vector<double>& members,
                  const std::vector<double>& nonmembers) {
  struct Tagged {
    double score;
    bool member;
  };
  std::vector<Tagged> all;
  all.reserve(members.size() + nonmembers.size());
  for (double s : members) all.push_back({s, true});
  for (double s : nonmembers) all.push_back({s, false});
  std::sort(all.begin(), all.end(),
            [](const Tagged& a, const Tagged& b) { return a.score < b.score; });
  double member_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < all.size()) {
    std::size_t j = i;
    while (j < all.size() && all[j].score == all[i].score) ++j;
    // ranks i+1 .. j, averaged over the tie block
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (all[k].member) member_rank_sum += avg_rank;
    }
    i = j;
  }
  const double m = static_cast<double>(members.size());
  const double n = static_cast<double>(nonmembers.size());
  return (member_rank_sum - m * (m + 1.0) / 2.0) / (m * n);
}

}  // namespace

std::pair<std::vector<double>, std::vector<double>> MiaScores(
    const ToyModel& model, const Dataset& members, const Dataset& nonmembers) {
  if (members.size() == 0 || nonmembers.size() == 0) {
    throw std::invalid_argument("evaluation: both splits must be non-empty");
  }
  auto score_split = [&model](const Dataset& ds) {
    std::vector<double> scores(ds.size());
    for (Eigen::Index i = 0; i < ds.size(); ++i) {
      scores[i] =
          -PerExampleLoss(model, ds.features.row(i).transpose(), ds.targets[i]);
    }
    return scores;
  };
  return {score_split(members), score_split(nonmembers)};
}

MiaReport RocAuc(const std::vector<double>& member_scores,
                 const std::vector<double>& nonmember_scores) {
  if (member_scores.empty() || nonmember_scores.empty()) {
    throw std::invalid_argument("evaluation: score lists must be non-empty");
  }
  MiaReport report;
  report.member_scores = member_scores;
  report.nonmember_scores = nonmember_scores;

  std::vector<double> thresholds = member_scores;
  thresholds.insert(thresholds.end(), nonmember_scores.begin(),
                    nonmember_scores.end());
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()),
                   thresholds.end());

  std::vector<double> m_sorted = member_scores;
  std::vector<double> n_sorted = nonmember_scores;
  std::sort(m_sorted.begin(), m_sorted.end(), std::greater<>());
  std::sort(n_sorted.begin(), n_sorted.end(), std::greater<>());

  report.roc.push_back(
      {std::numeric_limits<double>::infinity(), 0.0, 0.0});
  std::size_t mi = 0, ni = 0;
  for (double t : thresholds) {
    while (mi < m_sorted.size() && m_sorted[mi] >= t) ++mi;
    while (ni < n_sorted.size() && n_sorted[ni] >= t) ++ni;
    report.roc.push_back({t,
                          static_cast<double>(ni) / n_sorted.size(),
                          static_cast<double>(mi) / m_sorted.size()});
  }
  report.auc = RankSumAuc(member_scores, nonmember_scores);
  report.advantage = Advantage(report.roc);
  return report;
}

double Advantage(const std::vector<RocPoint>& roc) {
  double best = 0.0;
  for (const RocPoint& p : roc) best = std::max(best, p.tpr - p.fpr);
  return best;
}

void WriteRocCsv(std::ostream& os, const MiaReport& report) {
  os << "threshold,fpr,tpr\n";
  for (const RocPoint& p : report.roc) {
    os << FormatDouble(p.threshold) << ',' << FormatDouble(p.fpr) << ','
       << FormatDouble(p.tpr) << '\n';
  }
}

double Quantile(std::vector<double> values, double q) {
  if (values.empty()) {
    throw std::invalid_argument("evaluation: quantile of empty sample");
  }
  if (!(q >= 0.0 && q <= 1.0)) {
    throw std::invalid_argument("evaluation: q must be in [0, 1]");
  }
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  if (lo + 1 >= values.size()) return values.back();
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[lo + 1] - values[lo]);
}

}  // namespace ferret
