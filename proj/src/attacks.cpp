#include "shapguard/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "shapguard/error.hpp"
#include "shapguard/io.hpp"

namespace shapguard {

namespace {

double sign(double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); }

Vector clamp_unit(Vector v) { return v.cwiseMax(0.0).cwiseMin(1.0); }

void project(Vector& v, const Vector& center, double epsilon) {
  for (Eigen::Index j = 0; j < v.size(); ++j) {
    v(j) = std::clamp(v(j), center(j) - epsilon, center(j) + epsilon);
    v(j) = std::clamp(v(j), 0.0, 1.0);
    // center + epsilon can round past the ball; step back by ulps.
    while (std::abs(v(j) - center(j)) > epsilon) v(j) = std::nextafter(v(j), center(j));
  }
}

}  // namespace

std::string to_string(AttackKind kind) {
  switch (kind) {
    case AttackKind::kFgsm:
      return "fgsm";
    case AttackKind::kPgd:
      return "pgd";
    case AttackKind::kDeepFool:
      return "deepfool";
  }
  return "?";
}

AttackKind attack_kind_from_string(const std::string& s) {
  if (s == "fgsm") return AttackKind::kFgsm;
  if (s == "pgd") return AttackKind::kPgd;
  if (s == "deepfool") return AttackKind::kDeepFool;
  throw ConfigError("unknown attack kind: " + s);
}

std::string to_string(RowFilter f) { return f == RowFilter::kAll ? "all" : "malicious_only"; }

RowFilter row_filter_from_string(const std::string& s) {
  if (s == "all") return RowFilter::kAll;
  if (s == "malicious_only" || s == "malicious") return RowFilter::kMaliciousOnly;
  throw ConfigError("unknown row filter: " + s);
}

void AttackConfig::validate() const {
  if (kind == AttackKind::kFgsm || kind == AttackKind::kPgd) {
    if (!(epsilon > 0)) throw ConfigError("attack epsilon must be > 0");
  }
  if (kind == AttackKind::kPgd) {
    if (!(alpha > 0 && alpha <= epsilon)) throw ConfigError("PGD alpha must be in (0, epsilon]");
    if (steps < 1) throw ConfigError("PGD steps must be >= 1");
  }
  if (kind == AttackKind::kDeepFool) {
    if (max_iter < 1) throw ConfigError("DeepFool max_iter must be >= 1");
    if (!(overshoot >= 0)) throw ConfigError("DeepFool overshoot must be >= 0");
  }
}

AttackConfig AttackConfig::defaults(AttackKind kind) {
  AttackConfig cfg;
  cfg.kind = kind;
  return cfg;
}

nlohmann::json attack_config_to_json(const AttackConfig& cfg) {
  return {{"kind", to_string(cfg.kind)},     {"epsilon", cfg.epsilon},
          {"alpha", cfg.alpha},              {"steps", cfg.steps},
          {"max_iter", cfg.max_iter},        {"overshoot", cfg.overshoot},
          {"random_start", cfg.random_start}, {"seed", cfg.seed}};
}

AttackConfig attack_config_from_json(const nlohmann::json& j) {
  AttackConfig cfg = AttackConfig::defaults(attack_kind_from_string(j.at("kind")));
  cfg.epsilon = j.value("epsilon", cfg.epsilon);
  cfg.alpha = j.value("alpha", cfg.alpha);
  cfg.steps = j.value("steps", cfg.steps);
  cfg.max_iter = j.value("max_iter", cfg.max_iter);
  cfg.overshoot = j.value("overshoot", cfg.overshoot);
  cfg.random_start = j.value("random_start", cfg.random_start);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.validate();
  return cfg;
}

double AdvBatch::success_rate() const {
  if (success.empty()) return 0.0;
  return static_cast<double>(std::count(success.begin(), success.end(), true)) /
         static_cast<double>(success.size());
}

Vector fgsm(const MlpModel& model, const Vector& x, int y_true, double epsilon) {
  const Vector g = grad_input(model, x, y_true);
  Vector out = x;
  for (Eigen::Index j = 0; j < x.size(); ++j) out(j) = x(j) + epsilon * sign(g(j));
  project(out, x, epsilon);
  return out;
}

Vector pgd(const MlpModel& model, const Vector& x, int y_true, const AttackConfig& cfg,
           uint64_t row_seed, const std::function<void(const Vector&)>& observer) {
  Vector cur = x;
  if (cfg.random_start) {
    std::seed_seq seq{static_cast<uint32_t>(cfg.seed), static_cast<uint32_t>(cfg.seed >> 32),
                      static_cast<uint32_t>(row_seed), static_cast<uint32_t>(row_seed >> 32)};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> start(-cfg.epsilon, cfg.epsilon);
    for (Eigen::Index j = 0; j < cur.size(); ++j) cur(j) += start(rng);
    project(cur, x, cfg.epsilon);
  }
  for (size_t t = 0; t < cfg.steps; ++t) {
    const Vector g = grad_input(model, cur, y_true);
    for (Eigen::Index j = 0; j < cur.size(); ++j) cur(j) = cur(j) + cfg.alpha * sign(g(j));
    project(cur, x, cfg.epsilon);
    if (observer) observer(cur);
  }
  return cur;
}

DeepFoolResult deepfool(const MlpModel& model, const Vector& x, const AttackConfig& cfg,
                        std::optional<int> y_true) {
  if (model.spec.output_activation != Activation::kSigmoid || model.spec.output_size() != 1) {
    throw ContractError("DeepFool requires a single sigmoid-output model");
  }
  DeepFoolResult result;
  const double g0 = logit(model, x);
  const int original = g0 > 0 ? 1 : 0;
  if (y_true && *y_true != original) {
    result.adversarial = x;
    return result;
  }
  // Iterates that land on g = 0 up to rounding count as having reached the
  // boundary; stepping again would not move them.
  const double boundary_tol = 1e-12 * std::max(1.0, std::abs(g0));
  Vector cur = x;
  bool reached = false;
  while (result.iterations < cfg.max_iter) {
    const double g = logit(model, cur);
    if ((g > 0 ? 1 : 0) != original || std::abs(g) <= boundary_tol) {
      reached = true;
      break;
    }
    const Vector grad = grad_logit(model, cur);
    const double norm2 = grad.squaredNorm();
    if (std::sqrt(norm2) < 1e-12) {
      throw DegenerateGradientError("DeepFool: vanishing logit gradient at iteration " +
                                    std::to_string(result.iterations));
    }
    cur -= (g / norm2) * grad;
    ++result.iterations;
  }
  if (!reached) {
    const double g = logit(model, cur);
    reached = (g > 0 ? 1 : 0) != original || std::abs(g) <= boundary_tol;
  }
  Vector out = reached ? Vector(x + (1.0 + cfg.overshoot) * (cur - x)) : cur;
  result.adversarial = clamp_unit(std::move(out));
  result.success = predict_label(model, result.adversarial) != original;
  return result;
}

AdvBatch attack_batch(const MlpModel& model, const FlowDataset& ds, const AttackConfig& cfg,
                      RowFilter filter) {
  cfg.validate();
  ds.validate();
  AdvBatch batch;
  batch.config = cfg;
  for (size_t i = 0; i < ds.rows(); ++i) {
    if (filter == RowFilter::kAll || ds.y[i] == 1) batch.row_index.push_back(i);
  }
  if (batch.row_index.empty()) throw EmptyDatasetError("attack_batch: empty selection");
  const auto n = static_cast<Eigen::Index>(batch.row_index.size());
  batch.clean.resize(n, ds.X.cols());
  batch.adversarial.resize(n, ds.X.cols());
  for (Eigen::Index r = 0; r < n; ++r) {
    const size_t src = batch.row_index[static_cast<size_t>(r)];
    const Vector x = ds.X.row(static_cast<Eigen::Index>(src)).transpose();
    const int y = ds.y[src];
    Vector adv;
    size_t iterations = 0;
    switch (cfg.kind) {
      case AttackKind::kFgsm:
        adv = fgsm(model, x, y, cfg.epsilon);
        break;
      case AttackKind::kPgd:
        adv = pgd(model, x, y, cfg, src);
        break;
      case AttackKind::kDeepFool:
        try {
          auto res = deepfool(model, x, cfg, y);
          adv = std::move(res.adversarial);
          iterations = res.iterations;
        } catch (const DegenerateGradientError&) {
          adv = x;
          ++batch.degenerate;
        }
        break;
    }
    batch.clean.row(r) = x.transpose();
    batch.adversarial.row(r) = adv.transpose();
    batch.labels.push_back(y);
    batch.success.push_back(predict_label(model, adv) != predict_label(model, x));
    const Vector delta = adv - x;
    batch.linf.push_back(delta.cwiseAbs().maxCoeff());
    batch.l2.push_back(delta.norm());
    batch.iterations.push_back(iterations);
  }
  return batch;
}

std::string adv_batch_to_csv(const AdvBatch& batch) {
  const Eigen::Index m = batch.clean.cols();
  std::string out = "row_index,label";
  for (Eigen::Index j = 0; j < m; ++j) out += ",clean_" + std::to_string(j);
  for (Eigen::Index j = 0; j < m; ++j) out += ",adv_" + std::to_string(j);
  out += ",success,linf,l2,iterations\n";
  for (size_t r = 0; r < batch.size(); ++r) {
    const auto i = static_cast<Eigen::Index>(r);
    out += std::to_string(batch.row_index[r]) + "," + std::to_string(batch.labels[r]);
    for (Eigen::Index j = 0; j < m; ++j) out += "," + io::format_double(batch.clean(i, j));
    for (Eigen::Index j = 0; j < m; ++j) out += "," + io::format_double(batch.adversarial(i, j));
    out += std::string(",") + (batch.success[r] ? "1" : "0") + "," +
           io::format_double(batch.linf[r]) + "," + io::format_double(batch.l2[r]) + "," +
           std::to_string(batch.iterations[r]) + "\n";
  }
  return out;
}

void save_adv_batch(const AdvBatch& batch, const std::filesystem::path& csv_path,
                    const std::filesystem::path& json_path) {
  io::write_file(csv_path, adv_batch_to_csv(batch));
  nlohmann::json side = {{"config", attack_config_to_json(batch.config)},
                         {"samples", batch.size()},
                         {"success_rate", batch.success_rate()},
                         {"degenerate", batch.degenerate}};
  io::write_file(json_path, side.dump(1) + "\n");
}

AdvBatch load_adv_batch(const std::filesystem::path& csv_path,
                        const std::filesystem::path& json_path) {
  AdvBatch batch;
  const auto side = nlohmann::json::parse(io::read_file(json_path));
  batch.config = attack_config_from_json(side.at("config"));
  batch.degenerate = side.value("degenerate", size_t{0});
  std::istringstream in(io::read_file(csv_path));
  std::string line;
  if (!std::getline(in, line)) throw EmptyDatasetError("empty AdvBatch file");
  const auto header = io::split_csv_line(line);
  if (header.size() < 6 || (header.size() - 6) % 2 != 0) {
    throw SchemaError("AdvBatch CSV: malformed header");
  }
  const size_t m = (header.size() - 6) / 2;
  std::vector<double> clean, adv;
  auto num = [&](const std::string& field) {
    double v = 0;
    if (!io::parse_double(field, v)) throw ParseError("AdvBatch CSV: bad number '" + field + "'");
    return v;
  };
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = io::split_csv_line(line);
    if (f.size() != header.size()) throw ParseError("AdvBatch CSV: wrong field count");
    batch.row_index.push_back(static_cast<size_t>(num(f[0])));
    batch.labels.push_back(static_cast<int>(num(f[1])));
    for (size_t j = 0; j < m; ++j) clean.push_back(num(f[2 + j]));
    for (size_t j = 0; j < m; ++j) adv.push_back(num(f[2 + m + j]));
    batch.success.push_back(num(f[2 + 2 * m]) != 0);
    batch.linf.push_back(num(f[3 + 2 * m]));
    batch.l2.push_back(num(f[4 + 2 * m]));
    batch.iterations.push_back(static_cast<size_t>(num(f[5 + 2 * m])));
  }
  const auto n = static_cast<Eigen::Index>(batch.row_index.size());
  batch.clean = Eigen::Map<Matrix>(clean.data(), n, static_cast<Eigen::Index>(m));
  batch.adversarial = Eigen::Map<Matrix>(adv.data(), n, static_cast<Eigen::Index>(m));
  return batch;
}

}  // namespace shapguard
