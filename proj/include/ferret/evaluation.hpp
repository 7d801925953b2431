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

#ifndef FERRET_EVALUATION_HPP_
#define FERRET_EVALUATION_HPP_

#include <iosfwd>
#include <vector>

#include "ferret/models.hpp"

namespace ferret {

struct RocPoint {
  double threshold = 0.0;  // score >= threshold predicts "member"
  double fpr = 0.0;
  double tpr = 0.0;
};

// Loss-threshold membership-inference result. Scores are negated per-example
// losses, so higher means more member-like.
struct MiaReport {
  std::vector<double> member_scores;
  std::vector<double> nonmember_scores;
  std::vector<RocPoint> roc;  // from (0,0) to (1,1), coordinates non-decreasing
  double auc = 0.0;           // Mann-Whitney, ties counted 1/2
  double advantage = 0.0;     // max over thresholds of tpr - fpr
};

// score(x) = -loss(model, x) for every record of both splits.
std::pair<std::vector<double>, std::vector<double>> MiaScores(
    const ToyModel& model, const Dataset& members, const Dataset& nonmembers);

// ROC by threshold sweep over the union of observed scores; AUC via the
// rank-sum statistic (equals pair counting with half-weight ties);
// advantage = max(tpr - fpr).
MiaReport RocAuc(const std::vector<double>& member_scores,
                 const std::vector<double>& nonmember_scores);

double Advantage(const std::vector<RocPoint>& roc);

// CSV columns threshold,fpr,tpr.
void WriteRocCsv(std::ostream& os, const MiaReport& report);

// Quantile with linear interpolation between order statistics (the common
// "type 7" rule). q in [0, 1]; values need not be sorted.
double Quantile(std::vector<double> values, double q);

}  // namespace ferret

#endif  // FERRET_EVALUATION_HPP_
