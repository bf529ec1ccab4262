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

#ifndef DENTLABEL_METRICS_H_
#define DENTLABEL_METRICS_H_

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "json.hpp"

namespace dentlabel {

// Real-valued so that soft (probability-weighted) counts fit too.
struct ConfusionCounts {
  double tp = 0;
  double fp = 0;
  double fn = 0;
  double tn = 0;

  double total() const { return tp + fp + fn + tn; }
  bool operator==(const ConfusionCounts&) const = default;
};

// Matthews correlation. Returns 0 when any marginal is empty. Throws
// EmptyCounts on an all-zero table, InvalidArgument on negative counts.
double mcc(const ConfusionCounts& counts);

// Loss-side variant: epsilon is added to the denominator instead of the
// zero-marginal convention.
double mcc_smoothed(const ConfusionCounts& counts, double epsilon);

ConfusionCounts confusion_from_predictions(std::span<const std::uint8_t> predicted,
                                           std::span<const std::uint8_t> truth);

ConfusionCounts soft_confusion(std::span<const double> truth, std::span<const double> probability);

struct LossConfig {
  double alpha = 0.5;
  double epsilon = 1e-8;
  double clamp = 1e-7;

  void validate() const;
};

// Mean binary cross-entropy, probabilities clamped to [clamp, 1 - clamp].
double bce(std::span<const double> truth, std::span<const double> probability, double clamp = 1e-7);

// alpha * BCE + (1 - alpha) * (1 - soft MCC).
double combined_loss(std::span<const double> truth, std::span<const double> probability,
                     const LossConfig& config = {});

// N items x k categories; each row holds how many raters chose each category.
class AgreementTable {
 public:
  // Throws InvalidArgument on ragged rows, negative cells or unequal row sums.
  explicit AgreementTable(std::vector<std::vector<int>> counts);

  // Binary ratings (raters x items) collapsed into a 2-category table.
  static AgreementTable from_binary(const std::vector<std::vector<std::uint8_t>>& ratings_by_rater);

  int items() const { return static_cast<int>(counts_.size()); }
  int raters() const { return raters_; }
  int categories() const { return categories_; }
  const std::vector<std::vector<int>>& counts() const { return counts_; }

 private:
  std::vector<std::vector<int>> counts_;
  int raters_ = 0;
  int categories_ = 0;
};

// Fleiss' kappa. Throws InvalidArgument for fewer than two raters or no
// items, DegenerateAgreement when expected agreement is 1.
double fleiss_kappa(const AgreementTable& table);

struct RegressionFit {
  std::vector<double> coefficients;  // intercept first when fitted
  double r_squared = 0;
  std::vector<double> residuals;
  bool with_intercept = true;

  double predict(std::span<const double> regressors) const;
  nlohmann::json to_json() const;
};

// Least squares on rows of regressors. R^2 is 1 - SSE/SST with SST centred.
// Throws InvalidArgument (shape), RankDeficient, DegenerateVariance.
RegressionFit ols_fit(const std::vector<std::vector<double>>& rows, std::span<const double> y,
                      bool with_intercept = true);

}  // namespace dentlabel

#endif  // DENTLABEL_METRICS_H_
