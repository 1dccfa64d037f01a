#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "shapguard/attacks.hpp"
#include "shapguard/data.hpp"
#include "shapguard/detector.hpp"
#include "shapguard/error.hpp"
#include "shapguard/evaluation.hpp"
#include "shapguard/neural.hpp"

namespace shapguard {

inline constexpr const char* kToolVersion = "0.3.0";

// A stage failed; what() is prefixed with the stage name.
class StageError : public Error {
 public:
  StageError(const std::string& stage, const std::string& message)
      : Error(stage + ": " + message), stage_(stage) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

// A run completed but one of its self-checks did not hold.
class InvariantError : public Error {
 public:
  InvariantError(const std::string& stage, std::vector<std::string> failures);
  const std::vector<std::string>& failures() const { return failures_; }

 private:
  std::vector<std::string> failures_;
};

struct DataSourceConfig {
  enum class Kind { kSynthetic, kCsv } kind = Kind::kSynthetic;
  SynthSpec synthetic;
  std::vector<std::string> csv_paths;  // merged in order
  std::vector<std::string> schema;     // empty = CIC-IoT2023 schema
  CsvOptions csv;
};

struct PipelineConfig {
  uint64_t seed = 42;
  DataSourceConfig data;
  SplitSpec split;

  std::vector<size_t> classifier_hidden = {64, 32};
  uint64_t classifier_init_seed = 0;
  TrainConfig classifier_train;

  std::vector<AttackConfig> attacks;  // one per kind, in fgsm/pgd/deepfool order
  RowFilter attack_filter = RowFilter::kMaliciousOnly;

  size_t background_size = 100;
  uint64_t background_seed = 0;

  AutoencoderShape detector_shape;
  uint64_t detector_init_seed = 0;
  TrainConfig detector_train;
  CalibrationMethod calibration;
  RowFilter detector_filter = RowFilter::kMaliciousOnly;  // which clean rows form Z

  RowFilter clean_panel = RowFilter::kMaliciousOnly;  // clean test rows in evaluation
  size_t histogram_bins = 50;

  const AttackConfig& attack(AttackKind kind) const;
  std::vector<AttackKind> attack_kinds() const;
};

// Defaults for every field, seeds derived from `seed`.
PipelineConfig default_config(uint64_t seed = 42);

// Reads a JSON config, filling omitted fields with defaults. A seed override
// replaces the master seed and re-derives every stage seed from it.
PipelineConfig config_from_json(const nlohmann::json& j,
                                std::optional<uint64_t> seed_override = std::nullopt);
nlohmann::json config_to_json(const PipelineConfig& cfg);
PipelineConfig load_config(const std::filesystem::path& path,
                           std::optional<uint64_t> seed_override = std::nullopt);

// Files produced under the output directory, keyed by path relative to it.
class RunManifest {
 public:
  explicit RunManifest(std::filesystem::path out_dir);

  // Loads an existing manifest.json if present so separate stage invocations
  // accumulate into one record.
  void load_existing();
  void set_config(const PipelineConfig& cfg);
  void write_artifact(const std::string& relative, std::string_view content);
  void record_stage(const std::string& stage, double seconds);
  void save() const;

  const std::filesystem::path& out_dir() const { return out_dir_; }
  const std::map<std::string, std::string>& artifacts() const { return artifacts_; }
  // Recomputes every listed digest; returns the paths that no longer match.
  std::vector<std::string> verify() const;

 private:
  std::filesystem::path out_dir_;
  nlohmann::json config_;
  std::map<std::string, std::string> artifacts_;
  std::map<std::string, double> stage_seconds_;
};

struct IngestSummary {
  size_t rows_read = 0;
  size_t rows_dropped = 0;
  size_t train = 0, val = 0, test = 0;
  std::vector<std::string> warnings;
};

struct NidsSummary {
  double train_accuracy = 0;
  double test_accuracy = 0;
  double final_loss = 0;
};

struct AttackSummary {
  AttackKind kind = AttackKind::kFgsm;
  size_t samples = 0;
  double success_rate = 0;
  double mean_linf = 0;
  double mean_l2 = 0;
  size_t containment_violations = 0;
};

struct FingerprintSummary {
  std::map<std::string, size_t> rows;  // file -> fingerprint count
  size_t completeness_violations = 0;
};

struct DetectorSummary {
  double tau = 0;
  size_t train_rows = 0;
  size_t calibration_rows = 0;
  double final_loss = 0;
};

struct AttackEvaluation {
  AttackKind kind = AttackKind::kFgsm;
  MetricsReport metrics;
  RobustnessReport robustness;
  ErrorDistributionReport distribution;
};

struct EvaluationSummary {
  std::vector<AttackEvaluation> attacks;
  RankTable ranks;
  std::vector<std::string> invariant_failures;
};

IngestSummary cmd_ingest(const PipelineConfig& cfg, RunManifest& manifest);
NidsSummary cmd_train_nids(const PipelineConfig& cfg, RunManifest& manifest);
AttackSummary cmd_attack(const PipelineConfig& cfg, AttackKind kind, RunManifest& manifest);
// source is "clean" or an attack kind name.
FingerprintSummary cmd_fingerprint(const PipelineConfig& cfg, const std::string& source,
                                   RunManifest& manifest);
DetectorSummary cmd_train_detector(const PipelineConfig& cfg, RunManifest& manifest);
EvaluationSummary cmd_evaluate(const PipelineConfig& cfg, RunManifest& manifest);

struct DetectSummary {
  size_t rows = 0;
  size_t flagged = 0;
};

// Scores every flow of an unscaled CSV (ingest format) with the trained
// classifier and detector; writes detect/<stem>.csv.
DetectSummary cmd_detect(const PipelineConfig& cfg, const std::filesystem::path& input,
                         RunManifest& manifest);

// All stages in order; saves the manifest. Throws InvariantError after the
// evaluation stage if any self-check failed.
EvaluationSummary cmd_run_all(const PipelineConfig& cfg, const std::filesystem::path& out_dir);

}  // namespace shapguard
