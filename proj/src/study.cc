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

#include "dentlabel/study.h"

#include <algorithm>
#include <random>
#include <set>

#include "dentlabel/error.h"
#include "dentlabel/random.h"

namespace dentlabel {

using nlohmann::json;

json to_json(const PredictionRecord& p) {
  return {{"image_id", p.crop.image_id},
          {"fdi", p.crop.tooth.code()},
          {"condition", p.condition},
          {"probability", p.probability},
          {"prediction", p.prediction}};
}

PredictionRecord prediction_from_json(const json& j) {
  PredictionRecord p;
  try {
    p.crop = {j.at("image_id").get<std::string>(), FdiTooth(j.at("fdi").get<int>())};
    p.condition = j.at("condition").get<int>();
    p.probability = j.value("probability", 0.0);
    if (j.contains("prediction")) {
      p.prediction = j.at("prediction").is_boolean() ? j.at("prediction").get<bool>()
                                                      : j.at("prediction").get<int>() != 0;
    } else {
      p.prediction = p.probability >= 0.5;
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::kIoError, std::string("bad prediction record: ") + e.what());
  }
  if (p.probability < 0 || p.probability > 1) {
    fail(ErrorCode::kInvalidArgument, "prediction probability outside [0, 1]");
  }
  return p;
}

std::string_view group_name(RaterGroup group) {
  switch (group) {
    case RaterGroup::kStudent: return "student";
    case RaterGroup::kExpert: return "expert";
    case RaterGroup::kModel: return "model";
  }
  return "expert";
}

RaterGroup parse_group(std::string_view name) {
  if (name == "student") return RaterGroup::kStudent;
  if (name == "expert") return RaterGroup::kExpert;
  if (name == "model") return RaterGroup::kModel;
  fail(ErrorCode::kInvalidArgument, "unknown rater group '" + std::string(name) + "'");
}

json to_json(const AnnotationRecord& a) {
  return {{"rater_id", a.rater_id},
          {"group", group_name(a.group)},
          {"image_id", a.crop.image_id},
          {"fdi", a.crop.tooth.code()},
          {"labels", a.labels},
          {"timestamp", a.timestamp}};
}

AnnotationRecord annotation_from_json(const json& j) {
  AnnotationRecord a;
  try {
    a.rater_id = j.at("rater_id").get<std::string>();
    a.group = parse_group(j.at("group").get<std::string>());
    a.crop = {j.at("image_id").get<std::string>(), FdiTooth(j.at("fdi").get<int>())};
    for (const auto& v : j.at("labels")) {
      a.labels.push_back(v.is_boolean() ? v.get<bool>() : v.get<int>() != 0);
    }
    a.timestamp = j.value("timestamp", "");
  } catch (const json::exception& e) {
    fail(ErrorCode::kIoError, std::string("bad annotation record: ") + e.what());
  }
  return a;
}

std::string_view stratum_name(Stratum s) {
  switch (s) {
    case Stratum::kTruePositive: return "TP";
    case Stratum::kFalsePositive: return "FP";
    case Stratum::kFalseNegative: return "FN";
  }
  return "TP";
}

std::vector<CropRef> ExpertImageDataset::crops() const {
  std::vector<CropRef> out;
  for (const auto& item : items) out.push_back(item.crop);
  return out;
}

json ExpertImageDataset::to_json() const {
  json jitems = json::array();
  for (const auto& item : items) {
    jitems.push_back({{"crop_id", item.crop.id()},
                      {"image_id", item.crop.image_id},
                      {"fdi", item.crop.tooth.code()},
                      {"condition", item.condition},
                      {"stratum", stratum_name(item.stratum)}});
  }
  return {{"seed", seed}, {"items", jitems}};
}

ExpertImageDataset ExpertImageDataset::from_json(const json& j) {
  ExpertImageDataset d;
  try {
    d.seed = j.value("seed", std::uint64_t{0});
    for (const auto& ji : j.at("items")) {
      ExpertItem item;
      item.crop = {ji.at("image_id").get<std::string>(), FdiTooth(ji.at("fdi").get<int>())};
      item.condition = ji.value("condition", 1);
      const std::string s = ji.value("stratum", "TP");
      item.stratum = s == "FP" ? Stratum::kFalsePositive
                     : s == "FN" ? Stratum::kFalseNegative
                                 : Stratum::kTruePositive;
      d.items.push_back(std::move(item));
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::kIoError, std::string("bad expert dataset: ") + e.what());
  }
  std::set<CropRef> seen;
  for (const auto& item : d.items) {
    if (!seen.insert(item.crop).second) {
      fail(ErrorCode::kInvalidArgument, "expert dataset lists " + item.crop.id() + " twice");
    }
  }
  return d;
}

ExpertImageDataset sample_expert_set(const std::vector<PredictionRecord>& predictions,
                                     const LabelMatrix& report_labels, StratumCounts counts,
                                     std::uint64_t seed) {
  const int k = report_labels.vocabulary().size();
  // condition -> crop -> hard prediction (last record wins)
  std::map<int, std::map<CropRef, bool>> by_condition;
  for (const auto& p : predictions) {
    report_labels.vocabulary().at(p.condition);
    by_condition[p.condition][p.crop] = p.prediction != 0;
  }

  ExpertImageDataset dataset;
  dataset.seed = seed;
  std::mt19937_64 rng(seed);
  std::set<CropRef> chosen;
  const std::pair<Stratum, int> plan[] = {{Stratum::kTruePositive, counts.true_positive},
                                          {Stratum::kFalsePositive, counts.false_positive},
                                          {Stratum::kFalseNegative, counts.false_negative}};
  for (int c = 1; c <= k; ++c) {
    std::map<Stratum, std::vector<CropRef>> strata;
    for (const auto& [crop, predicted] : by_condition[c]) {
      const bool actual = report_labels.positive(crop.image_id, crop.tooth, c);
      if (predicted && actual) {
        strata[Stratum::kTruePositive].push_back(crop);
      } else if (predicted) {
        strata[Stratum::kFalsePositive].push_back(crop);
      } else if (actual) {
        strata[Stratum::kFalseNegative].push_back(crop);
      }
    }
    for (const auto& [stratum, need] : plan) {
      std::vector<CropRef> pool;
      for (const auto& crop : strata[stratum]) {
        if (!chosen.count(crop)) pool.push_back(crop);
      }
      if (static_cast<int>(pool.size()) < need) {
        fail(ErrorCode::kStratumExhausted,
             "condition " + std::to_string(c) + " (" + report_labels.vocabulary().at(c).name + ") stratum " +
                 std::string(stratum_name(stratum)) + ": need " + std::to_string(need) + ", have " +
                 std::to_string(pool.size()));
      }
      // Partial Fisher-Yates: the first `need` slots are a uniform draw.
      for (int i = 0; i < need; ++i) {
        const auto j = i + static_cast<size_t>(uniform_index(rng, pool.size() - i));
        std::swap(pool[i], pool[j]);
        chosen.insert(pool[i]);
        dataset.items.push_back({pool[i], c, stratum});
      }
    }
  }
  return dataset;
}

TiePolicy parse_tie_policy(std::string_view name) {
  if (name == "negative") return TiePolicy::kNegative;
  if (name == "positive") return TiePolicy::kPositive;
  fail(ErrorCode::kConfigError, "unknown tie policy '" + std::string(name) + "'");
}

LabelVector majority_vote(const std::vector<LabelVector>& annotations, TiePolicy tie) {
  if (annotations.empty()) fail(ErrorCode::kInvalidArgument, "majority vote over no annotations");
  const size_t k = annotations.front().size();
  std::vector<int> votes(k, 0);
  for (const auto& a : annotations) {
    if (a.size() != k) fail(ErrorCode::kBadVectorLength, "annotations disagree on vector length");
    for (size_t c = 0; c < k; ++c) votes[c] += a[c] ? 1 : 0;
  }
  const int n = static_cast<int>(annotations.size());
  LabelVector out(k, 0);
  for (size_t c = 0; c < k; ++c) {
    if (2 * votes[c] > n) {
      out[c] = 1;
    } else if (2 * votes[c] == n) {
      out[c] = tie == TiePolicy::kPositive ? 1 : 0;
    }
  }
  return out;
}

AnnotationSet::AnnotationSet(const std::vector<AnnotationRecord>& records, int conditions)
    : conditions_(conditions) {
  for (const auto& r : records) {
    if (static_cast<int>(r.labels.size()) != conditions) {
      fail(ErrorCode::kBadVectorLength, "annotation by " + r.rater_id + " on " + r.crop.id() + " has " +
                                            std::to_string(r.labels.size()) + " labels, expected " +
                                            std::to_string(conditions));
    }
    auto [it, inserted] = groups_.emplace(r.rater_id, r.group);
    if (!inserted && it->second != r.group) {
      fail(ErrorCode::kInvalidArgument, "rater " + r.rater_id + " appears in two groups");
    }
    latest_[{r.rater_id, r.crop}] = r.labels;
  }
}

std::vector<std::string> AnnotationSet::raters(std::optional<RaterGroup> group) const {
  std::vector<std::string> out;
  for (const auto& [id, g] : groups_) {
    if (!group || g == *group) out.push_back(id);
  }
  return out;
}

RaterGroup AnnotationSet::group_of(const std::string& rater) const {
  auto it = groups_.find(rater);
  if (it == groups_.end()) fail(ErrorCode::kUnknownRater, "unknown rater " + rater);
  return it->second;
}

const LabelVector* AnnotationSet::find(const std::string& rater, const CropRef& crop) const {
  auto it = latest_.find({rater, crop});
  return it == latest_.end() ? nullptr : &it->second;
}

namespace {

void require_complete(const AnnotationSet& annotations, const std::vector<CropRef>& crops,
                      const std::vector<std::string>& raters) {
  std::string missing;
  int count = 0;
  for (const auto& r : raters) {
    for (const auto& crop : crops) {
      if (annotations.find(r, crop)) continue;
      if (count < 20) missing += (missing.empty() ? "" : ", ") + r + "/" + crop.id();
      ++count;
    }
  }
  if (count > 0) {
    fail(ErrorCode::kIncompleteAnnotations,
         std::to_string(count) + " missing annotations: " + missing + (count > 20 ? ", ..." : ""));
  }
}

std::vector<double> per_condition_scores(const std::vector<LabelVector>& predicted,
                                         const std::vector<LabelVector>& truth, int k) {
  std::vector<double> out(k, 0.0);
  for (int c = 0; c < k; ++c) {
    LabelVector p;
    LabelVector t;
    for (size_t i = 0; i < predicted.size(); ++i) {
      p.push_back(predicted[i][c]);
      t.push_back(truth[i][c]);
    }
    out[c] = mcc(confusion_from_predictions(p, t));
  }
  return out;
}

std::vector<LabelVector> labels_of(const AnnotationSet& annotations, const std::string& rater,
                                   const std::vector<CropRef>& crops) {
  std::vector<LabelVector> out;
  for (const auto& crop : crops) out.push_back(*annotations.find(rater, crop));
  return out;
}

double mean(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

}  // namespace

std::vector<LabelVector> consensus(const AnnotationSet& annotations, const std::vector<CropRef>& crops,
                                   const std::vector<std::string>& raters, TiePolicy tie) {
  if (raters.empty()) fail(ErrorCode::kInvalidArgument, "consensus needs at least one rater");
  require_complete(annotations, crops, raters);
  std::vector<LabelVector> out;
  for (const auto& crop : crops) {
    std::vector<LabelVector> votes;
    for (const auto& r : raters) votes.push_back(*annotations.find(r, crop));
    out.push_back(majority_vote(votes, tie));
  }
  return out;
}

std::vector<RaterScore> leave_one_out_eval(const AnnotationSet& annotations,
                                           const std::vector<CropRef>& crops, TiePolicy tie) {
  if (crops.empty()) fail(ErrorCode::kInvalidArgument, "no items to evaluate");
  const auto experts = annotations.raters(RaterGroup::kExpert);
  if (experts.size() < 2) fail(ErrorCode::kInvalidArgument, "leave-one-out needs at least two experts");
  require_complete(annotations, crops, annotations.raters());
  const int k = annotations.conditions();

  std::vector<RaterScore> scores;
  for (const auto& expert : experts) {
    std::vector<std::string> others;
    for (const auto& e : experts) {
      if (e != expert) others.push_back(e);
    }
    const auto truth = consensus(annotations, crops, others, tie);
    RaterScore s{expert, RaterGroup::kExpert, per_condition_scores(labels_of(annotations, expert, crops), truth, k), 0};
    s.average = mean(s.per_condition_mcc);
    scores.push_back(std::move(s));
  }
  const auto all_experts = consensus(annotations, crops, experts, tie);
  for (RaterGroup g : {RaterGroup::kStudent, RaterGroup::kModel}) {
    for (const auto& rater : annotations.raters(g)) {
      RaterScore s{rater, g, per_condition_scores(labels_of(annotations, rater, crops), all_experts, k), 0};
      s.average = mean(s.per_condition_mcc);
      scores.push_back(std::move(s));
    }
  }
  return scores;
}

std::map<std::string, double> group_average(const std::map<std::string, double>& averages,
                                            const std::map<std::string, std::string>& group_of,
                                            const std::vector<std::string>& required) {
  std::map<std::string, std::vector<double>> members;
  for (const auto& g : required) members[g];
  for (const auto& [rater, avg] : averages) {
    auto it = group_of.find(rater);
    if (it == group_of.end()) fail(ErrorCode::kUnknownRater, "rater " + rater + " has no group");
    members[it->second].push_back(avg);
  }
  std::map<std::string, double> out;
  for (const auto& [group, values] : members) {
    if (values.empty()) fail(ErrorCode::kEmptyGroup, "group " + group + " has no raters");
    out[group] = mean(values);
  }
  return out;
}

std::map<std::string, double> group_average(const std::vector<RaterScore>& scores) {
  std::map<std::string, double> averages;
  std::map<std::string, std::string> group_of;
  for (const auto& s : scores) {
    averages[s.rater_id] = s.average;
    group_of[s.rater_id] = std::string(group_name(s.group));
  }
  return group_average(averages, group_of);
}

std::vector<ConditionAnalysis> per_condition_analysis(const AnnotationSet& annotations,
                                                      const std::vector<CropRef>& crops, TiePolicy tie) {
  const auto scores = leave_one_out_eval(annotations, crops, tie);
  const auto experts = annotations.raters(RaterGroup::kExpert);
  const auto truth = consensus(annotations, crops, experts, tie);
  const int k = annotations.conditions();

  std::vector<ConditionAnalysis> rows;
  for (int c = 0; c < k; ++c) {
    ConditionAnalysis row;
    row.condition = c + 1;
    for (const auto& t : truth) row.frequency += t[c] ? 1 : 0;

    std::vector<LabelVector> by_rater;
    for (const auto& e : experts) {
      LabelVector ratings;
      for (const auto& crop : crops) ratings.push_back((*annotations.find(e, crop))[c]);
      by_rater.push_back(std::move(ratings));
    }
    try {
      row.kappa = fleiss_kappa(AgreementTable::from_binary(by_rater));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kDegenerateAgreement) throw;
    }

    std::map<std::string, std::vector<double>> members;
    for (const auto& s : scores) members[std::string(group_name(s.group))].push_back(s.per_condition_mcc[c]);
    for (const auto& [group, values] : members) row.mean_mcc[group] = mean(values);

    for (RaterGroup g : {RaterGroup::kStudent, RaterGroup::kModel}) {
      const auto raters = annotations.raters(g);
      if (raters.empty()) continue;
      const auto group_vote = consensus(annotations, crops, raters, tie);
      LabelVector p;
      LabelVector t;
      for (size_t i = 0; i < crops.size(); ++i) {
        p.push_back(group_vote[i][c]);
        t.push_back(truth[i][c]);
      }
      row.aggregate_mcc[std::string(group_name(g))] = mcc(confusion_from_predictions(p, t));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

TrendFits fit_agreement_trends(const std::vector<double>& kappa, const std::vector<double>& frequency,
                               const std::vector<double>& mcc_values) {
  if (kappa.size() != frequency.size() || kappa.size() != mcc_values.size()) {
    fail(ErrorCode::kLengthMismatch, "trend inputs differ in length");
  }
  std::vector<std::vector<double>> one;
  std::vector<std::vector<double>> two;
  for (size_t i = 0; i < kappa.size(); ++i) {
    one.push_back({kappa[i]});
    two.push_back({kappa[i], frequency[i]});
  }
  TrendFits fits;
  fits.points = static_cast<int>(kappa.size());
  fits.kappa_only = ols_fit(one, mcc_values);
  fits.kappa_and_frequency = ols_fit(two, mcc_values);
  return fits;
}

TrendFits fit_agreement_trends(const std::vector<ConditionAnalysis>& rows, const std::string& group) {
  std::vector<double> kappa;
  std::vector<double> frequency;
  std::vector<double> values;
  for (const auto& row : rows) {
    auto it = row.mean_mcc.find(group);
    if (!row.kappa || it == row.mean_mcc.end()) continue;
    kappa.push_back(*row.kappa);
    frequency.push_back(static_cast<double>(row.frequency));
    values.push_back(it->second);
  }
  return fit_agreement_trends(kappa, frequency, values);
}

}  // namespace dentlabel
