#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "shapguard/linalg.hpp"

namespace shapguard {

// Ordered, uniquely named feature columns.
class FeatureSchema {
 public:
  FeatureSchema() = default;
  explicit FeatureSchema(std::vector<std::string> names);

  // The 39 flow features of CIC-IoT2023 in their canonical column order.
  static FeatureSchema cic_iot2023();
  // "f0".."f{m-1}", used by the synthetic generator.
  static FeatureSchema generic(size_t m);

  size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  const std::string& name(size_t index) const { return names_.at(index); }
  std::optional<size_t> index_of(const std::string& name) const;

  bool operator==(const FeatureSchema& other) const { return names_ == other.names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, size_t> index_;
};

// Flow feature matrix with binary labels: 0 benign, 1 malicious.
struct FlowDataset {
  FeatureSchema schema;
  Matrix X;
  std::vector<int> y;

  size_t rows() const { return static_cast<size_t>(X.rows()); }
  size_t features() const { return static_cast<size_t>(X.cols()); }
  size_t count_label(int label) const;

  // Throws DimensionError / ContractError when row counts, column counts or
  // label values are inconsistent.
  void validate() const;

  FlowDataset select_rows(const std::vector<size_t>& indices) const;
};

struct ScalerParams {
  std::vector<double> min;
  std::vector<double> max;
};

struct SplitSpec {
  double train_frac = 0.6;
  double val_frac = 0.2;
  double test_frac = 0.2;
  uint64_t seed = 0;

  void validate() const;
};

struct DatasetSplit {
  FlowDataset train;
  FlowDataset val;
  FlowDataset test;
  // Row indices into the source dataset, in output order.
  std::vector<size_t> train_index;
  std::vector<size_t> val_index;
  std::vector<size_t> test_index;
  std::vector<std::string> warnings;
};

struct CsvOptions {
  std::string label_column = "label";
  // Label strings that map to 0; every other string maps to 1.
  std::set<std::string> benign_labels = {"BenignTraffic"};
};

struct CsvLoadResult {
  FlowDataset dataset;
  size_t rows_read = 0;
  size_t rows_dropped = 0;  // rows holding NaN or infinite values
};

CsvLoadResult load_csv(const std::filesystem::path& path, const FeatureSchema& schema,
                       const CsvOptions& options = {});

ScalerParams fit_scaler(const FlowDataset& ds);
FlowDataset apply_scaler(const FlowDataset& ds, const ScalerParams& scaler);

DatasetSplit split(const FlowDataset& ds, const SplitSpec& spec);

struct SynthSpec {
  size_t n_per_class = 1000;
  size_t m = 20;
  double class_separation = 0.45;
  double noise = 0.02;
  // Dimension of the shared latent factor space generating correlated features.
  size_t latent_factors = 3;
  double factor_scale = 0.08;
  uint64_t seed = 0;
};

// Two class clusters sharing a low-rank covariance, centroids offset along a
// seeded direction that is zero on the last ceil(m/4) features. Rows are
// interleaved benign/malicious and clamped to [0,1].
FlowDataset synth_generate(const SynthSpec& spec);

// Indices of features whose distribution does not depend on the class.
std::vector<size_t> synth_noninformative_features(size_t m);

// Plain CSV with the schema names as header plus a numeric "label" column.
std::string dataset_to_csv(const FlowDataset& ds);
void save_dataset_csv(const FlowDataset& ds, const std::filesystem::path& path);
FlowDataset load_dataset_csv(const std::filesystem::path& path);

nlohmann::json scaler_to_json(const FeatureSchema& schema, const ScalerParams& scaler);
ScalerParams scaler_from_json(const nlohmann::json& j, FeatureSchema* schema = nullptr);

}  // namespace shapguard
