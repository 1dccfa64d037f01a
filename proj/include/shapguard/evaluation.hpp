#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "shapguard/attribution.hpp"

namespace shapguard {

// Positive class is "adversarial" (label 1) throughout.
struct ConfusionCounts {
  size_t tp = 0;
  size_t tn = 0;
  size_t fp = 0;
  size_t fn = 0;

  size_t total() const { return tp + tn + fp + fn; }
};

struct MetricsReport {
  double accuracy = 0;
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  std::optional<double> roc_auc;  // undefined when truths hold a single class
  std::optional<double> average_precision;
  double specificity = 0;
  double npv = 0;
  double fpr = 0;
  double fnr = 0;
  ConfusionCounts counts;
};

struct RobustnessReport {
  double ca = 0;   // clean accuracy
  double aa = 0;   // adversarial accuracy
  double asr = 0;  // attack success rate
};

ConfusionCounts confusion(const std::vector<int>& truth, const std::vector<int>& predicted);

// Threshold metrics from the counts; roc_auc / average_precision from the
// scores (higher = more adversarial). Pass empty scores to skip them.
MetricsReport classification_metrics(const ConfusionCounts& counts,
                                     const std::vector<double>& scores,
                                     const std::vector<int>& truths);

// Trapezoidal area under the ROC curve with tied scores grouped.
std::optional<double> roc_auc(const std::vector<double>& scores, const std::vector<int>& truths);
// sum_n (R_n - R_{n-1}) * P_n over descending distinct thresholds.
std::optional<double> average_precision(const std::vector<double>& scores,
                                        const std::vector<int>& truths);

RobustnessReport robustness_metrics(const std::vector<bool>& clean_correct,
                                    const std::vector<bool>& adv_correct);

// Mean |phi_j| over the fingerprints.
std::vector<double> importance(const std::vector<AttributionFingerprint>& fps);

// Ranks 1..M by descending importance, ties broken by lower feature index.
std::vector<size_t> rank_features(const std::vector<double>& importance);

std::vector<size_t> rank_shift(const std::vector<size_t>& clean_ranks,
                               const std::vector<size_t>& attack_ranks);

struct RankTable {
  std::vector<std::string> feature_names;
  std::vector<std::string> conditions;           // conditions[0] is the clean reference
  std::vector<std::vector<double>> importance;   // [condition][feature]
  std::vector<std::vector<size_t>> ranks;        // [condition][feature]
  std::vector<std::vector<size_t>> shifts;       // [condition-1][feature], vs clean

  // Rows in Table-1 column order, sorted by clean rank.
  std::string to_csv(bool include_normalized = true) const;
  nlohmann::json to_json() const;
};

RankTable build_rank_table(const std::vector<std::string>& feature_names,
                           const std::vector<std::string>& conditions,
                           const std::vector<std::vector<double>>& importance_per_condition);

struct GroupSummary {
  size_t count = 0;
  double mean = 0;
  double median = 0;
  double fraction_above_tau = 0;
};

struct ErrorDistributionReport {
  double tau = 0;
  std::vector<double> bin_edges;  // bins + 1 edges over the pooled range
  std::vector<size_t> clean_counts;
  std::vector<size_t> adv_counts;
  GroupSummary clean;
  GroupSummary adversarial;

  std::string to_csv() const;
  nlohmann::json to_json() const;
};

ErrorDistributionReport error_distribution_report(const std::vector<double>& errors_clean,
                                                  const std::vector<double>& errors_adv,
                                                  double tau, size_t bins = 50);

nlohmann::json to_json(const ConfusionCounts& c);
nlohmann::json to_json(const MetricsReport& m);
nlohmann::json to_json(const RobustnessReport& r);
std::string metrics_csv_header();
std::string metrics_csv_row(const std::string& label, const MetricsReport& m);

// Recomputes every metric from counts and checks the identities
// fpr + specificity = 1 and fnr + recall = 1. Returns failure messages.
std::vector<std::string> check_metric_invariants(const MetricsReport& m);

}  // namespace shapguard
