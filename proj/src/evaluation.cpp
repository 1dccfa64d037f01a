#include "shapguard/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "shapguard/error.hpp"
#include "shapguard/io.hpp"

namespace shapguard {

namespace {

double ratio(size_t num, size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

void check_scores(const std::vector<double>& scores, const std::vector<int>& truths) {
  if (scores.size() != truths.size()) throw DimensionError("scores and truths differ in length");
}

// Indices sorted by descending score.
std::vector<size_t> descending_order(const std::vector<double>& scores) {
  std::vector<size_t> order(scores.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return scores[a] > scores[b]; });
  return order;
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

GroupSummary summarize(const std::vector<double>& v, double tau) {
  GroupSummary s;
  s.count = v.size();
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  s.median = median_of(v);
  s.fraction_above_tau =
      ratio(static_cast<size_t>(std::count_if(v.begin(), v.end(), [&](double e) { return e > tau; })),
            v.size());
  return s;
}

}  // namespace

ConfusionCounts confusion(const std::vector<int>& truth, const std::vector<int>& predicted) {
  if (truth.size() != predicted.size()) throw DimensionError("confusion: length mismatch");
  if (truth.empty()) throw EmptyDatasetError("confusion: no samples");
  ConfusionCounts c;
  for (size_t i = 0; i < truth.size(); ++i) {
    const bool t = truth[i] == 1;
    const bool p = predicted[i] == 1;
    if (t && p) ++c.tp;
    else if (!t && !p) ++c.tn;
    else if (!t && p) ++c.fp;
    else ++c.fn;
  }
  return c;
}

std::optional<double> roc_auc(const std::vector<double>& scores, const std::vector<int>& truths) {
  check_scores(scores, truths);
  const auto pos = static_cast<size_t>(std::count(truths.begin(), truths.end(), 1));
  const size_t neg = truths.size() - pos;
  if (pos == 0 || neg == 0) return std::nullopt;
  const auto order = descending_order(scores);
  double area = 0;
  size_t tp = 0, fp = 0;
  double prev_tpr = 0, prev_fpr = 0;
  for (size_t k = 0; k < order.size();) {
    const double s = scores[order[k]];
    while (k < order.size() && scores[order[k]] == s) {
      (truths[order[k]] == 1 ? tp : fp) += 1;
      ++k;
    }
    const double tpr = ratio(tp, pos);
    const double fpr = ratio(fp, neg);
    area += (fpr - prev_fpr) * (tpr + prev_tpr) / 2.0;
    prev_tpr = tpr;
    prev_fpr = fpr;
  }
  return area;
}

std::optional<double> average_precision(const std::vector<double>& scores,
                                        const std::vector<int>& truths) {
  check_scores(scores, truths);
  const auto pos = static_cast<size_t>(std::count(truths.begin(), truths.end(), 1));
  if (pos == 0 || pos == truths.size()) return std::nullopt;
  const auto order = descending_order(scores);
  double ap = 0;
  double prev_recall = 0;
  size_t tp = 0, fp = 0;
  for (size_t k = 0; k < order.size();) {
    const double s = scores[order[k]];
    while (k < order.size() && scores[order[k]] == s) {
      (truths[order[k]] == 1 ? tp : fp) += 1;
      ++k;
    }
    const double recall = ratio(tp, pos);
    ap += (recall - prev_recall) * ratio(tp, tp + fp);
    prev_recall = recall;
  }
  return ap;
}

MetricsReport classification_metrics(const ConfusionCounts& c, const std::vector<double>& scores,
                                     const std::vector<int>& truths) {
  MetricsReport m;
  m.counts = c;
  m.accuracy = ratio(c.tp + c.tn, c.total());
  m.precision = ratio(c.tp, c.tp + c.fp);
  m.recall = ratio(c.tp, c.tp + c.fn);
  m.f1 = m.precision + m.recall > 0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  m.specificity = ratio(c.tn, c.tn + c.fp);
  m.npv = ratio(c.tn, c.tn + c.fn);
  m.fpr = ratio(c.fp, c.fp + c.tn);
  m.fnr = ratio(c.fn, c.fn + c.tp);
  if (!scores.empty() || !truths.empty()) {
    m.roc_auc = roc_auc(scores, truths);
    m.average_precision = average_precision(scores, truths);
  }
  return m;
}

RobustnessReport robustness_metrics(const std::vector<bool>& clean_correct,
                                    const std::vector<bool>& adv_correct) {
  if (clean_correct.empty() || adv_correct.empty()) {
    throw EmptyDatasetError("robustness_metrics: empty flag list");
  }
  RobustnessReport r;
  const auto clean_ok = static_cast<size_t>(std::count(clean_correct.begin(), clean_correct.end(), true));
  const auto adv_ok = static_cast<size_t>(std::count(adv_correct.begin(), adv_correct.end(), true));
  r.ca = ratio(clean_ok, clean_correct.size());
  r.aa = ratio(adv_ok, adv_correct.size());
  r.asr = ratio(adv_correct.size() - adv_ok, adv_correct.size());
  return r;
}

std::vector<double> importance(const std::vector<AttributionFingerprint>& fps) {
  if (fps.empty()) throw EmptyDatasetError("importance: no fingerprints");
  const Eigen::Index m = fps.front().phi.size();
  Vector total = Vector::Zero(m);
  for (const auto& fp : fps) {
    if (fp.phi.size() != m) throw DimensionError("importance: fingerprints differ in length");
    total += fp.phi.cwiseAbs();
  }
  total /= static_cast<double>(fps.size());
  return {total.data(), total.data() + total.size()};
}

std::vector<size_t> rank_features(const std::vector<double>& imp) {
  std::vector<size_t> order(imp.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    if (imp[a] != imp[b]) return imp[a] > imp[b];
    return a < b;
  });
  std::vector<size_t> ranks(imp.size());
  for (size_t r = 0; r < order.size(); ++r) ranks[order[r]] = r + 1;
  return ranks;
}

std::vector<size_t> rank_shift(const std::vector<size_t>& clean_ranks,
                               const std::vector<size_t>& attack_ranks) {
  if (clean_ranks.size() != attack_ranks.size()) throw DimensionError("rank_shift: length mismatch");
  std::vector<size_t> shifts(clean_ranks.size());
  for (size_t j = 0; j < shifts.size(); ++j) {
    shifts[j] = clean_ranks[j] > attack_ranks[j] ? clean_ranks[j] - attack_ranks[j]
                                                 : attack_ranks[j] - clean_ranks[j];
  }
  return shifts;
}

RankTable build_rank_table(const std::vector<std::string>& feature_names,
                           const std::vector<std::string>& conditions,
                           const std::vector<std::vector<double>>& importance_per_condition) {
  if (conditions.empty() || conditions.size() != importance_per_condition.size()) {
    throw DimensionError("rank table: one importance vector per condition required");
  }
  RankTable t;
  t.feature_names = feature_names;
  t.conditions = conditions;
  t.importance = importance_per_condition;
  for (const auto& imp : importance_per_condition) {
    if (imp.size() != feature_names.size()) throw DimensionError("rank table: feature count");
    t.ranks.push_back(rank_features(imp));
  }
  for (size_t c = 1; c < conditions.size(); ++c) t.shifts.push_back(rank_shift(t.ranks[0], t.ranks[c]));
  return t;
}

std::string RankTable::to_csv(bool include_normalized) const {
  std::string out = "feature,index";
  for (const auto& c : conditions) out += ",shap_" + c;
  for (const auto& c : conditions) out += ",rank_" + c;
  for (size_t c = 1; c < conditions.size(); ++c) out += ",shift_" + conditions[c];
  if (include_normalized) {
    for (const auto& c : conditions) out += ",shap_norm_" + c;
  }
  out += "\n";
  std::vector<size_t> order(feature_names.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return ranks[0][a] < ranks[0][b]; });
  std::vector<double> max_imp;
  for (const auto& imp : importance) {
    max_imp.push_back(imp.empty() ? 0.0 : *std::max_element(imp.begin(), imp.end()));
  }
  for (size_t j : order) {
    out += feature_names[j] + "," + std::to_string(j);
    for (const auto& imp : importance) out += "," + io::format_double(imp[j]);
    for (const auto& r : ranks) out += "," + std::to_string(r[j]);
    for (const auto& s : shifts) out += "," + std::to_string(s[j]);
    if (include_normalized) {
      for (size_t c = 0; c < importance.size(); ++c) {
        out += "," + io::format_double(max_imp[c] > 0 ? importance[c][j] / max_imp[c] : 0.0);
      }
    }
    out += "\n";
  }
  return out;
}

nlohmann::json RankTable::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (size_t j = 0; j < feature_names.size(); ++j) {
    nlohmann::json row = {{"feature", feature_names[j]}, {"index", j}};
    for (size_t c = 0; c < conditions.size(); ++c) {
      row["shap"][conditions[c]] = importance[c][j];
      row["rank"][conditions[c]] = ranks[c][j];
      if (c > 0) row["shift"][conditions[c]] = shifts[c - 1][j];
    }
    rows.push_back(std::move(row));
  }
  return {{"conditions", conditions}, {"features", rows}};
}

ErrorDistributionReport error_distribution_report(const std::vector<double>& errors_clean,
                                                  const std::vector<double>& errors_adv, double tau,
                                                  size_t bins) {
  if (errors_clean.empty() || errors_adv.empty()) {
    throw EmptyDatasetError("error distribution: both groups must be non-empty");
  }
  if (bins < 1) throw ConfigError("error distribution: bins must be >= 1");
  ErrorDistributionReport r;
  r.tau = tau;
  double lo = std::min(*std::min_element(errors_clean.begin(), errors_clean.end()),
                       *std::min_element(errors_adv.begin(), errors_adv.end()));
  double hi = std::max(*std::max_element(errors_clean.begin(), errors_clean.end()),
                       *std::max_element(errors_adv.begin(), errors_adv.end()));
  const double width = hi > lo ? (hi - lo) / static_cast<double>(bins) : 0.0;
  for (size_t b = 0; b <= bins; ++b) {
    r.bin_edges.push_back(b == bins ? hi : lo + width * static_cast<double>(b));
  }
  auto bin_of = [&](double e) -> size_t {
    if (width == 0) return 0;
    const auto b = static_cast<size_t>((e - lo) / width);
    return std::min(b, bins - 1);
  };
  r.clean_counts.assign(bins, 0);
  r.adv_counts.assign(bins, 0);
  for (double e : errors_clean) ++r.clean_counts[bin_of(e)];
  for (double e : errors_adv) ++r.adv_counts[bin_of(e)];
  r.clean = summarize(errors_clean, tau);
  r.adversarial = summarize(errors_adv, tau);
  return r;
}

std::string ErrorDistributionReport::to_csv() const {
  std::string out = "bin,lower,upper,clean,adversarial\n";
  for (size_t b = 0; b < clean_counts.size(); ++b) {
    out += std::to_string(b) + "," + io::format_double(bin_edges[b]) + "," +
           io::format_double(bin_edges[b + 1]) + "," + std::to_string(clean_counts[b]) + "," +
           std::to_string(adv_counts[b]) + "\n";
  }
  return out;
}

nlohmann::json ErrorDistributionReport::to_json() const {
  auto group = [](const GroupSummary& g) {
    return nlohmann::json{{"count", g.count},
                          {"mean", g.mean},
                          {"median", g.median},
                          {"fraction_above_tau", g.fraction_above_tau}};
  };
  return {{"tau", tau},
          {"bin_edges", bin_edges},
          {"clean_counts", clean_counts},
          {"adversarial_counts", adv_counts},
          {"clean", group(clean)},
          {"adversarial", group(adversarial)}};
}

nlohmann::json to_json(const ConfusionCounts& c) {
  return {{"tp", c.tp}, {"tn", c.tn}, {"fp", c.fp}, {"fn", c.fn}};
}

nlohmann::json to_json(const MetricsReport& m) {
  auto opt = [](const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  return {{"accuracy", m.accuracy},
          {"precision", m.precision},
          {"recall", m.recall},
          {"f1", m.f1},
          {"roc_auc", opt(m.roc_auc)},
          {"average_precision", opt(m.average_precision)},
          {"specificity", m.specificity},
          {"npv", m.npv},
          {"fpr", m.fpr},
          {"fnr", m.fnr},
          {"counts", to_json(m.counts)}};
}

nlohmann::json to_json(const RobustnessReport& r) {
  return {{"ca", r.ca}, {"aa", r.aa}, {"asr", r.asr}};
}

std::string metrics_csv_header() {
  return "attack,accuracy,precision,recall,f1,roc_auc,average_precision,specificity,npv,fpr,fnr,"
         "tp,tn,fp,fn\n";
}

std::string metrics_csv_row(const std::string& label, const MetricsReport& m) {
  auto opt = [](const std::optional<double>& v) { return v ? io::format_double(*v) : std::string("NA"); };
  return label + "," + io::format_double(m.accuracy) + "," + io::format_double(m.precision) + "," +
         io::format_double(m.recall) + "," + io::format_double(m.f1) + "," + opt(m.roc_auc) + "," +
         opt(m.average_precision) + "," + io::format_double(m.specificity) + "," +
         io::format_double(m.npv) + "," + io::format_double(m.fpr) + "," +
         io::format_double(m.fnr) + "," + std::to_string(m.counts.tp) + "," +
         std::to_string(m.counts.tn) + "," + std::to_string(m.counts.fp) + "," +
         std::to_string(m.counts.fn) + "\n";
}

std::vector<std::string> check_metric_invariants(const MetricsReport& m) {
  std::vector<std::string> failures;
  const auto& c = m.counts;
  auto expect = [&](const char* name, double got, double want, double tol) {
    if (!(std::abs(got - want) <= tol)) {
      failures.push_back(std::string(name) + ": " + io::format_double(got) + " != " +
                         io::format_double(want));
    }
  };
  expect("accuracy", m.accuracy, ratio(c.tp + c.tn, c.total()), 0.0);
  const double p = ratio(c.tp, c.tp + c.fp);
  const double r = ratio(c.tp, c.tp + c.fn);
  expect("precision", m.precision, p, 0.0);
  expect("recall", m.recall, r, 0.0);
  expect("f1", m.f1, p + r > 0 ? 2 * p * r / (p + r) : 0.0, 1e-12);
  if (c.fp + c.tn > 0) expect("fpr+specificity", m.fpr + m.specificity, 1.0, 1e-12);
  if (c.fn + c.tp > 0) expect("fnr+recall", m.fnr + m.recall, 1.0, 1e-12);
  for (const auto& [name, v] : {std::pair{"roc_auc", m.roc_auc}, {"average_precision", m.average_precision}}) {
    if (v && !(*v >= 0 && *v <= 1)) failures.push_back(std::string(name) + " outside [0,1]");
  }
  return failures;
}

}  // namespace shapguard
