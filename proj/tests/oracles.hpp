#pragma once

// Independent reference computations the library is checked against. None of
// these call the code path they verify.

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <vector>

#include "shapguard/neural.hpp"
#include "support.hpp"

namespace shapguard::oracle {

// True if every hidden pre-activation of the batch keeps |z| >= margin, so a
// central difference of size h cannot straddle a relu kink.
inline bool away_from_kinks(const MlpModel& model, const Matrix& X, double margin = 1e-3) {
  const ForwardTrace t = forward(model, X);
  for (size_t l = 0; l + 1 < t.pre.size(); ++l) {
    if (t.pre[l].cwiseAbs().minCoeff() < margin) return false;
  }
  return true;
}

// Max relative error between analytic parameter gradients and central
// differences of loss_value.
inline double param_gradient_error(const MlpModel& model, const Matrix& X, const Matrix& T,
                                   LossKind loss, double h = 1e-5) {
  const ParamGradients g = grad_params(model, X, T, loss);
  MlpModel probe = model;
  auto eval = [&] { return loss_value(outputs(probe, X), T, loss); };
  double worst = 0;
  for (size_t l = 0; l < model.weights.size(); ++l) {
    for (Eigen::Index i = 0; i < model.weights[l].rows(); ++i) {
      for (Eigen::Index j = 0; j < model.weights[l].cols(); ++j) {
        double& w = probe.weights[l](i, j);
        const double w0 = w;
        w = w0 + h;
        const double up = eval();
        w = w0 - h;
        const double down = eval();
        w = w0;
        worst = std::max(worst, testkit::rel_err(g.weights[l](i, j), (up - down) / (2 * h)));
      }
    }
    for (Eigen::Index i = 0; i < model.biases[l].size(); ++i) {
      double& b = probe.biases[l](i);
      const double b0 = b;
      b = b0 + h;
      const double up = eval();
      b = b0 - h;
      const double down = eval();
      b = b0;
      worst = std::max(worst, testkit::rel_err(g.biases[l](i), (up - down) / (2 * h)));
    }
  }
  return worst;
}

inline double input_gradient_error(const MlpModel& model, const Vector& x, const Vector& target,
                                   LossKind loss, double h = 1e-5) {
  const Vector g = grad_input(model, x, target, loss);
  const Matrix T = target.transpose();
  double worst = 0;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    Vector up = x, down = x;
    up(j) += h;
    down(j) -= h;
    const double fd = (loss_value(outputs(model, up.transpose()), T, loss) -
                       loss_value(outputs(model, down.transpose()), T, loss)) /
                      (2 * h);
    worst = std::max(worst, testkit::rel_err(g(j), fd));
  }
  return worst;
}

// Smallest v in the sample such that at least p% of values are <= v, then
// linearly interpolated between order statistics at rank p/100 * (n - 1).
// Written from the order statistics directly, without sorting helpers.
inline double percentile(std::vector<double> v, double p) {
  const size_t n = v.size();
  std::vector<double> order;
  while (!v.empty()) {
    auto it = std::min_element(v.begin(), v.end());
    order.push_back(*it);
    v.erase(it);
  }
  const double rank = p / 100.0 * static_cast<double>(n - 1);
  const auto k = static_cast<size_t>(rank);
  if (k + 1 >= n) return order[n - 1];
  return order[k] + (rank - static_cast<double>(k)) * (order[k + 1] - order[k]);
}

// Average precision by sweeping every candidate threshold t (each distinct
// score), computing precision/recall of the rule "score >= t" from scratch,
// and summing (R_t - R_prev) * P_t in order of decreasing t.
inline std::optional<double> average_precision_sweep(const std::vector<double>& scores,
                                                     const std::vector<int>& truths) {
  const auto positives = std::count(truths.begin(), truths.end(), 1);
  if (positives == 0 || positives == static_cast<long>(truths.size())) return std::nullopt;
  std::vector<double> thresholds = scores;
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  double ap = 0, prev_recall = 0;
  for (double t : thresholds) {
    long tp = 0, fp = 0;
    for (size_t i = 0; i < scores.size(); ++i) {
      if (scores[i] >= t) (truths[i] == 1 ? tp : fp) += 1;
    }
    const double recall = static_cast<double>(tp) / static_cast<double>(positives);
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
  }
  return ap;
}

// ROC AUC as the probability a random positive outscores a random negative,
// ties counting one half (Mann-Whitney), by enumerating all pairs.
inline std::optional<double> roc_auc_pairs(const std::vector<double>& scores, const std::vector<int>& truths) {
  double wins = 0, pairs = 0;
  for (size_t i = 0; i < scores.size(); ++i) {
    if (truths[i] != 1) continue;
    for (size_t j = 0; j < scores.size(); ++j) {
      if (truths[j] != 0) continue;
      pairs += 1;
      wins += scores[i] > scores[j] ? 1.0 : scores[i] == scores[j] ? 0.5 : 0.0;
    }
  }
  if (pairs == 0) return std::nullopt;
  return wins / pairs;
}

// Ranks by counting, for each feature, how many others beat it (larger value,
// or equal value at a lower index).
inline std::vector<size_t> ranks_by_counting(const std::vector<double>& v) {
  std::vector<size_t> r(v.size());
  for (size_t i = 0; i < v.size(); ++i) {
    size_t better = 0;
    for (size_t j = 0; j < v.size(); ++j) {
      if (v[j] > v[i] || (v[j] == v[i] && j < i)) ++better;
    }
    r[i] = better + 1;
  }
  return r;
}

}  // namespace shapguard::oracle
