#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "shapguard/data.hpp"
#include "shapguard/neural.hpp"

namespace shapguard {

enum class AttackKind { kFgsm, kPgd, kDeepFool };

std::string to_string(AttackKind kind);
AttackKind attack_kind_from_string(const std::string& s);

enum class RowFilter { kAll, kMaliciousOnly };

std::string to_string(RowFilter f);
RowFilter row_filter_from_string(const std::string& s);

struct AttackConfig {
  AttackKind kind = AttackKind::kFgsm;
  double epsilon = 0.1;  // l-inf budget in scaled feature units
  double alpha = 0.01;   // PGD step
  size_t steps = 40;     // PGD iterations
  size_t max_iter = 50;  // DeepFool iterations
  double overshoot = 0.02;
  bool random_start = false;
  uint64_t seed = 0;

  void validate() const;
  static AttackConfig defaults(AttackKind kind);
};

nlohmann::json attack_config_to_json(const AttackConfig& cfg);
AttackConfig attack_config_from_json(const nlohmann::json& j);

struct AdvBatch {
  Matrix clean;
  Matrix adversarial;
  std::vector<size_t> row_index;  // source row of each sample
  std::vector<int> labels;        // true labels of the source rows
  std::vector<bool> success;      // predicted label changed
  std::vector<double> linf;
  std::vector<double> l2;
  std::vector<size_t> iterations;  // DeepFool only; zero otherwise
  size_t degenerate = 0;           // DeepFool samples left untouched on a vanishing gradient
  AttackConfig config;

  size_t size() const { return row_index.size(); }
  double success_rate() const;
};

// x' = clamp(x + eps * sign(grad_x L(f(x), y)), 0, 1), sign(0) = 0.
Vector fgsm(const MlpModel& model, const Vector& x, int y_true, double epsilon);

// Iterated sign-gradient steps, each projected onto the eps-ball around x
// intersected with [0,1]^M. The observer, when set, sees every iterate.
Vector pgd(const MlpModel& model, const Vector& x, int y_true, const AttackConfig& cfg,
           uint64_t row_seed = 0,
           const std::function<void(const Vector&)>& observer = nullptr);

struct DeepFoolResult {
  Vector adversarial;
  size_t iterations = 0;
  bool success = false;
};

// Minimal l2 steps on the logit g toward g = 0. When y_true is given and the
// model already misclassifies x, x is returned untouched after 0 iterations.
// Throws DegenerateGradientError when ||grad g|| < 1e-12 at an iterate.
DeepFoolResult deepfool(const MlpModel& model, const Vector& x, const AttackConfig& cfg,
                        std::optional<int> y_true = std::nullopt);

AdvBatch attack_batch(const MlpModel& model, const FlowDataset& ds, const AttackConfig& cfg,
                      RowFilter filter);

std::string adv_batch_to_csv(const AdvBatch& batch);
void save_adv_batch(const AdvBatch& batch, const std::filesystem::path& csv_path,
                    const std::filesystem::path& json_path);
AdvBatch load_adv_batch(const std::filesystem::path& csv_path,
                        const std::filesystem::path& json_path);

}  // namespace shapguard
