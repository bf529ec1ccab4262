// Copyright 2026 The dentlabel Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef DENTLABEL_STUDY_H_
#define DENTLABEL_STUDY_H_

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dentlabel/crop.h"
#include "dentlabel/labeling.h"
#include "dentlabel/metrics.h"
#include "json.hpp"

namespace dentlabel {

// One classifier output for one (crop, condition).
struct PredictionRecord {
  CropRef crop;
  int condition = 1;
  double probability = 0;
  std::uint8_t prediction = 0;
};

nlohmann::json to_json(const PredictionRecord& p);
// A missing hard prediction is derived as probability >= 0.5.
PredictionRecord prediction_from_json(const nlohmann::json& j);

enum class RaterGroup { kStudent, kExpert, kModel };

std::string_view group_name(RaterGroup group);
RaterGroup parse_group(std::string_view name);

struct AnnotationRecord {
  std::string rater_id;
  RaterGroup group = RaterGroup::kExpert;
  CropRef crop;
  LabelVector labels;  // all-zero means "none"
  std::string timestamp;

  bool operator==(const AnnotationRecord&) const = default;
};

nlohmann::json to_json(const AnnotationRecord& a);
AnnotationRecord annotation_from_json(const nlohmann::json& j);

enum class Stratum { kTruePositive, kFalsePositive, kFalseNegative };

std::string_view stratum_name(Stratum s);

struct ExpertItem {
  CropRef crop;
  int condition = 1;
  Stratum stratum = Stratum::kTruePositive;
};

struct ExpertImageDataset {
  std::vector<ExpertItem> items;
  std::uint64_t seed = 0;

  std::vector<CropRef> crops() const;
  nlohmann::json to_json() const;
  static ExpertImageDataset from_json(const nlohmann::json& j);
};

struct StratumCounts {
  int true_positive = 2;
  int false_positive = 2;
  int false_negative = 2;
};

// Per condition (in index order) draws the requested number of crops from
// each stratum, comparing hard predictions with report-derived labels. A crop
// is never drawn twice. Throws StratumExhausted naming condition and stratum.
ExpertImageDataset sample_expert_set(const std::vector<PredictionRecord>& predictions,
                                     const LabelMatrix& report_labels, StratumCounts counts,
                                     std::uint64_t seed);

enum class TiePolicy { kNegative, kPositive };

TiePolicy parse_tie_policy(std::string_view name);

// Per condition: positive when strictly more than half the annotations mark
// it; exact ties follow `tie`.
LabelVector majority_vote(const std::vector<LabelVector>& annotations, TiePolicy tie = TiePolicy::kNegative);

// Latest record per (rater, crop); later entries in `records` win.
class AnnotationSet {
 public:
  AnnotationSet(const std::vector<AnnotationRecord>& records, int conditions);

  int conditions() const { return conditions_; }
  std::vector<std::string> raters(std::optional<RaterGroup> group = std::nullopt) const;
  RaterGroup group_of(const std::string& rater) const;
  const LabelVector* find(const std::string& rater, const CropRef& crop) const;

 private:
  int conditions_;
  std::map<std::string, RaterGroup> groups_;
  std::map<std::pair<std::string, CropRef>, LabelVector> latest_;
};

// Majority vote of the given raters per crop. Throws IncompleteAnnotations.
std::vector<LabelVector> consensus(const AnnotationSet& annotations, const std::vector<CropRef>& crops,
                                   const std::vector<std::string>& raters, TiePolicy tie);

struct RaterScore {
  std::string rater_id;
  RaterGroup group = RaterGroup::kExpert;
  std::vector<double> per_condition_mcc;  // index 0 = condition 1
  double average = 0;
};

// Experts are scored against the consensus of the other experts; students
// and models against the consensus of all experts. Degenerate MCCs count as 0.
// Throws IncompleteAnnotations listing the missing (rater, crop) pairs.
std::vector<RaterScore> leave_one_out_eval(const AnnotationSet& annotations,
                                           const std::vector<CropRef>& crops,
                                           TiePolicy tie = TiePolicy::kNegative);

// Arithmetic mean of per-rater averages for each group. Throws EmptyGroup when
// a group in `required` has no rater.
std::map<std::string, double> group_average(const std::map<std::string, double>& averages,
                                            const std::map<std::string, std::string>& group_of,
                                            const std::vector<std::string>& required = {});
std::map<std::string, double> group_average(const std::vector<RaterScore>& scores);

struct ConditionAnalysis {
  int condition = 1;
  long frequency = 0;  // positives under the all-expert consensus
  std::optional<double> kappa;  // empty when degenerate
  // Mean of per-rater MCCs, keyed by group name.
  std::map<std::string, double> mean_mcc;
  // MCC of the group's own majority vote against the expert consensus
  // (non-expert groups only).
  std::map<std::string, double> aggregate_mcc;
};

std::vector<ConditionAnalysis> per_condition_analysis(const AnnotationSet& annotations,
                                                      const std::vector<CropRef>& crops,
                                                      TiePolicy tie = TiePolicy::kNegative);

struct TrendFits {
  RegressionFit kappa_only;           // MCC ~ kappa
  RegressionFit kappa_and_frequency;  // MCC ~ kappa + frequency
  int points = 0;
};

// Fits over (kappa, frequency, mcc) triples; conditions without a kappa are
// skipped.
TrendFits fit_agreement_trends(const std::vector<double>& kappa, const std::vector<double>& frequency,
                               const std::vector<double>& mcc);
TrendFits fit_agreement_trends(const std::vector<ConditionAnalysis>& rows, const std::string& group);

}  // namespace dentlabel

#endif  // DENTLABEL_STUDY_H_
