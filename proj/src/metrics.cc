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

#include "dentlabel/metrics.h"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>

#include "dentlabel/error.h"

namespace dentlabel {

namespace {

void check_counts(const ConfusionCounts& c) {
  if (c.tp < 0 || c.fp < 0 || c.fn < 0 || c.tn < 0 || !std::isfinite(c.total())) {
    fail(ErrorCode::kInvalidArgument, "confusion counts must be finite and non-negative");
  }
}

// Marginal products multiplied in sorted order so that the symmetric and
// label-flipped tables give bit-identical denominators.
double marginal_product(const ConfusionCounts& c) {
  std::array<double, 4> f{c.tp + c.fp, c.tp + c.fn, c.tn + c.fp, c.tn + c.fn};
  std::sort(f.begin(), f.end());
  return f[0] * f[1] * f[2] * f[3];
}

void check_lengths(size_t a, size_t b) {
  if (a != b) {
    fail(ErrorCode::kLengthMismatch,
         "vectors have lengths " + std::to_string(a) + " and " + std::to_string(b));
  }
}

}  // namespace

double mcc(const ConfusionCounts& c) {
  check_counts(c);
  if (c.total() <= 0) fail(ErrorCode::kEmptyCounts, "MCC of an empty confusion table");
  const double product = marginal_product(c);
  if (product == 0) return 0.0;
  const double value = (c.tp * c.tn - c.fp * c.fn) / std::sqrt(product);
  return std::clamp(value, -1.0, 1.0);
}

double mcc_smoothed(const ConfusionCounts& c, double epsilon) {
  check_counts(c);
  return (c.tp * c.tn - c.fp * c.fn) / (std::sqrt(marginal_product(c)) + epsilon);
}

ConfusionCounts confusion_from_predictions(std::span<const std::uint8_t> predicted,
                                           std::span<const std::uint8_t> truth) {
  check_lengths(predicted.size(), truth.size());
  ConfusionCounts c;
  for (size_t i = 0; i < predicted.size(); ++i) {
    const bool p = predicted[i] != 0;
    const bool t = truth[i] != 0;
    if (p && t) {
      c.tp += 1;
    } else if (p) {
      c.fp += 1;
    } else if (t) {
      c.fn += 1;
    } else {
      c.tn += 1;
    }
  }
  return c;
}

ConfusionCounts soft_confusion(std::span<const double> y, std::span<const double> p) {
  check_lengths(y.size(), p.size());
  ConfusionCounts c;
  for (size_t i = 0; i < y.size(); ++i) {
    if (p[i] < 0 || p[i] > 1 || std::isnan(p[i])) {
      fail(ErrorCode::kInvalidArgument, "probabilities must lie in [0, 1]");
    }
    c.tp += y[i] * p[i];
    c.fp += (1 - y[i]) * p[i];
    c.fn += y[i] * (1 - p[i]);
    c.tn += (1 - y[i]) * (1 - p[i]);
  }
  return c;
}

void LossConfig::validate() const {
  if (!(alpha >= 0 && alpha <= 1)) fail(ErrorCode::kConfigError, "alpha must lie in [0, 1]");
  if (!(epsilon > 0)) fail(ErrorCode::kConfigError, "epsilon must be positive");
  if (!(clamp > 0 && clamp < 0.5)) fail(ErrorCode::kConfigError, "clamp must lie in (0, 0.5)");
}

double bce(std::span<const double> y, std::span<const double> p, double clamp) {
  check_lengths(y.size(), p.size());
  if (y.empty()) fail(ErrorCode::kLengthMismatch, "BCE of empty vectors");
  double sum = 0;
  for (size_t i = 0; i < y.size(); ++i) {
    const double q = std::clamp(p[i], clamp, 1 - clamp);
    sum += y[i] * std::log(q) + (1 - y[i]) * std::log(1 - q);
  }
  return -sum / static_cast<double>(y.size());
}

double combined_loss(std::span<const double> y, std::span<const double> p, const LossConfig& config) {
  config.validate();
  const double cross_entropy = bce(y, p, config.clamp);
  const double soft_mcc = mcc_smoothed(soft_confusion(y, p), config.epsilon);
  return config.alpha * cross_entropy + (1 - config.alpha) * (1 - soft_mcc);
}

AgreementTable::AgreementTable(std::vector<std::vector<int>> counts) : counts_(std::move(counts)) {
  if (counts_.empty()) fail(ErrorCode::kInvalidArgument, "agreement table has no items");
  categories_ = static_cast<int>(counts_.front().size());
  if (categories_ < 1) fail(ErrorCode::kInvalidArgument, "agreement table has no categories");
  for (size_t i = 0; i < counts_.size(); ++i) {
    const auto& row = counts_[i];
    if (static_cast<int>(row.size()) != categories_) {
      fail(ErrorCode::kInvalidArgument, "agreement table row " + std::to_string(i) + " is ragged");
    }
    int sum = 0;
    for (int v : row) {
      if (v < 0) fail(ErrorCode::kInvalidArgument, "negative agreement count");
      sum += v;
    }
    if (i == 0) raters_ = sum;
    if (sum != raters_) {
      fail(ErrorCode::kInvalidArgument, "row " + std::to_string(i) + " sums to " + std::to_string(sum) +
                                            ", expected " + std::to_string(raters_));
    }
  }
}

AgreementTable AgreementTable::from_binary(const std::vector<std::vector<std::uint8_t>>& by_rater) {
  if (by_rater.empty()) fail(ErrorCode::kInvalidArgument, "no raters");
  const size_t items = by_rater.front().size();
  std::vector<std::vector<int>> counts(items, std::vector<int>(2, 0));
  for (const auto& ratings : by_rater) {
    check_lengths(ratings.size(), items);
    for (size_t i = 0; i < items; ++i) ++counts[i][ratings[i] ? 1 : 0];
  }
  return AgreementTable(std::move(counts));
}

double fleiss_kappa(const AgreementTable& table) {
  const int n = table.raters();
  const int items = table.items();
  const int k = table.categories();
  if (n < 2) fail(ErrorCode::kInvalidArgument, "Fleiss' kappa needs at least two raters");

  std::vector<double> column(k, 0.0);
  double agreement_sum = 0;
  for (const auto& row : table.counts()) {
    double squares = 0;
    for (int j = 0; j < k; ++j) {
      squares += static_cast<double>(row[j]) * row[j];
      column[j] += row[j];
    }
    agreement_sum += (squares - n) / (static_cast<double>(n) * (n - 1));
  }
  const double observed = agreement_sum / items;
  double expected = 0;
  for (double c : column) {
    const double pj = c / (static_cast<double>(items) * n);
    expected += pj * pj;
  }
  if (expected >= 1.0 - 1e-12) {
    fail(ErrorCode::kDegenerateAgreement, "all ratings fall in one category; kappa is undefined");
  }
  return (observed - expected) / (1.0 - expected);
}

double RegressionFit::predict(std::span<const double> x) const {
  const size_t offset = with_intercept ? 1 : 0;
  check_lengths(x.size() + offset, coefficients.size());
  double value = with_intercept ? coefficients[0] : 0.0;
  for (size_t i = 0; i < x.size(); ++i) value += coefficients[i + offset] * x[i];
  return value;
}

nlohmann::json RegressionFit::to_json() const {
  return {{"coefficients", coefficients},
          {"with_intercept", with_intercept},
          {"r_squared", r_squared},
          {"residuals", residuals}};
}

RegressionFit ols_fit(const std::vector<std::vector<double>>& rows, std::span<const double> y,
                      bool with_intercept) {
  check_lengths(rows.size(), y.size());
  if (rows.empty()) fail(ErrorCode::kInvalidArgument, "regression needs observations");
  const size_t d = rows.front().size();
  const size_t p = d + (with_intercept ? 1 : 0);
  if (p == 0) fail(ErrorCode::kInvalidArgument, "regression needs at least one term");
  if (rows.size() <= p) {
    fail(ErrorCode::kInvalidArgument, "regression needs more observations (" + std::to_string(rows.size()) +
                                          ") than parameters (" + std::to_string(p) + ")");
  }

  const auto n = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd X(n, static_cast<Eigen::Index>(p));
  Eigen::VectorXd Y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = rows[static_cast<size_t>(i)];
    check_lengths(row.size(), d);
    Eigen::Index col = 0;
    if (with_intercept) X(i, col++) = 1.0;
    for (double v : row) X(i, col++) = v;
    Y(i) = y[static_cast<size_t>(i)];
  }

  // Columns are scaled to unit max-norm before forming the normal equations.
  Eigen::VectorXd scale = X.cwiseAbs().colwise().maxCoeff().transpose();
  for (Eigen::Index j = 0; j < scale.size(); ++j) {
    if (scale(j) == 0) fail(ErrorCode::kRankDeficient, "regressor column " + std::to_string(j) + " is zero");
  }
  const Eigen::MatrixXd Xs = X * scale.cwiseInverse().asDiagonal();
  const Eigen::MatrixXd normal = Xs.transpose() * Xs;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(normal);
  lu.setThreshold(1e-12);
  if (lu.rank() < static_cast<Eigen::Index>(p)) {
    fail(ErrorCode::kRankDeficient, "design matrix is rank deficient");
  }
  Eigen::VectorXd beta = lu.solve(Xs.transpose() * Y);
  // One refinement step tightens X^T r toward zero.
  beta += lu.solve(Xs.transpose() * (Y - Xs * beta));
  const Eigen::VectorXd coef = beta.cwiseQuotient(scale);
  const Eigen::VectorXd residual = Y - X * coef;

  const double mean = Y.mean();
  const double sst = (Y.array() - mean).square().sum();
  if (sst <= 0) fail(ErrorCode::kDegenerateVariance, "response has zero variance");
  const double sse = residual.squaredNorm();

  RegressionFit fit;
  fit.with_intercept = with_intercept;
  fit.coefficients.assign(coef.data(), coef.data() + coef.size());
  fit.residuals.assign(residual.data(), residual.data() + residual.size());
  fit.r_squared = 1.0 - sse / sst;
  if (with_intercept) fit.r_squared = std::clamp(fit.r_squared, 0.0, 1.0);
  return fit;
}

}  // namespace dentlabel
