#include "shapguard/data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "shapguard/error.hpp"
#include "shapguard/io.hpp"

namespace shapguard {

FeatureSchema::FeatureSchema(std::vector<std::string> names) : names_(std::move(names)) {
  if (names_.empty()) throw SchemaError("schema must contain at least one feature");
  for (size_t i = 0; i < names_.size(); ++i) {
    if (!index_.emplace(names_[i], i).second) {
      throw SchemaError("duplicate feature name in schema: " + names_[i]);
    }
  }
}

FeatureSchema FeatureSchema::cic_iot2023() {
  return FeatureSchema({"Header_Length",   "Protocol Type",   "Time_To_Live",    "Rate",
                        "fin_flag_number", "syn_flag_number", "rst_flag_number", "psh_flag_number",
                        "ack_flag_number", "ece_flag_number", "cwr_flag_number", "ack_count",
                        "syn_count",       "fin_count",       "rst_count",       "HTTP",
                        "HTTPS",           "DNS",             "Telnet",          "SMTP",
                        "SSH",             "IRC",             "TCP",             "UDP",
                        "DHCP",            "ARP",             "ICMP",            "IGMP",
                        "IPv",             "LLC",             "Tot sum",         "Min",
                        "Max",             "AVG",             "Std",             "Tot size",
                        "IAT",             "Number",          "Variance"});
}

FeatureSchema FeatureSchema::generic(size_t m) {
  std::vector<std::string> names;
  names.reserve(m);
  for (size_t j = 0; j < m; ++j) names.push_back("f" + std::to_string(j));
  return FeatureSchema(std::move(names));
}

std::optional<size_t> FeatureSchema::index_of(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

size_t FlowDataset::count_label(int label) const {
  return static_cast<size_t>(std::count(y.begin(), y.end(), label));
}

void FlowDataset::validate() const {
  if (static_cast<size_t>(X.rows()) != y.size()) {
    throw DimensionError("dataset has " + std::to_string(X.rows()) + " rows but " +
                         std::to_string(y.size()) + " labels");
  }
  if (X.rows() > 0 && static_cast<size_t>(X.cols()) != schema.size()) {
    throw DimensionError("dataset has " + std::to_string(X.cols()) + " columns, schema has " +
                         std::to_string(schema.size()));
  }
  for (int label : y) {
    if (label != 0 && label != 1) throw ContractError("labels must be 0 or 1");
  }
}

FlowDataset FlowDataset::select_rows(const std::vector<size_t>& indices) const {
  FlowDataset out;
  out.schema = schema;
  out.X.resize(static_cast<Eigen::Index>(indices.size()), X.cols());
  out.y.reserve(indices.size());
  for (size_t r = 0; r < indices.size(); ++r) {
    out.X.row(static_cast<Eigen::Index>(r)) = X.row(static_cast<Eigen::Index>(indices[r]));
    out.y.push_back(y.at(indices[r]));
  }
  return out;
}

void SplitSpec::validate() const {
  if (!(train_frac > 0 && val_frac > 0 && test_frac > 0)) {
    throw ConfigError("split fractions must all be positive");
  }
  if (std::abs(train_frac + val_frac + test_frac - 1.0) > 1e-9) {
    throw ConfigError("split fractions must sum to 1");
  }
}

CsvLoadResult load_csv(const std::filesystem::path& path, const FeatureSchema& schema,
                       const CsvOptions& options) {
  if (!std::filesystem::exists(path)) throw IoError("file not found: " + path.string());
  const std::string text = io::read_file(path);
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.empty() || line == "\r") {
    throw EmptyDatasetError("empty CSV file: " + path.string());
  }
  // Strip a UTF-8 byte-order mark if present.
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const auto header = io::split_csv_line(line);
  std::unordered_map<std::string, size_t> column;
  for (size_t c = 0; c < header.size(); ++c) column.emplace(header[c], c);

  std::vector<size_t> feature_col(schema.size());
  for (size_t j = 0; j < schema.size(); ++j) {
    auto it = column.find(schema.name(j));
    if (it == column.end()) throw SchemaError("missing column: " + schema.name(j));
    feature_col[j] = it->second;
  }
  auto label_it = column.find(options.label_column);
  if (label_it == column.end()) throw SchemaError("missing column: " + options.label_column);
  const size_t label_col = label_it->second;

  std::vector<double> values;
  std::vector<int> labels;
  CsvLoadResult result;
  size_t line_no = 1;
  std::vector<double> row(schema.size());
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto fields = io::split_csv_line(line);
    if (fields.size() != header.size()) {
      throw ParseError("row " + std::to_string(line_no) + ": expected " +
                       std::to_string(header.size()) + " fields, got " +
                       std::to_string(fields.size()));
    }
    ++result.rows_read;
    bool finite = true;
    for (size_t j = 0; j < schema.size(); ++j) {
      if (!io::parse_double(fields[feature_col[j]], row[j])) {
        throw ParseError("row " + std::to_string(line_no) + ", column '" + schema.name(j) +
                         "': non-numeric value '" + fields[feature_col[j]] + "'");
      }
      finite = finite && std::isfinite(row[j]);
    }
    if (!finite) {
      ++result.rows_dropped;
      continue;
    }
    values.insert(values.end(), row.begin(), row.end());
    std::string label = fields[label_col];
    if (!label.empty() && label.back() == '\r') label.pop_back();
    labels.push_back(options.benign_labels.count(label) ? 0 : 1);
  }
  if (labels.empty()) throw EmptyDatasetError("no data rows in " + path.string());

  result.dataset.schema = schema;
  result.dataset.X = Eigen::Map<Matrix>(values.data(), static_cast<Eigen::Index>(labels.size()),
                                        static_cast<Eigen::Index>(schema.size()));
  result.dataset.y = std::move(labels);
  return result;
}

ScalerParams fit_scaler(const FlowDataset& ds) {
  if (ds.rows() == 0) throw EmptyDatasetError("cannot fit scaler on an empty dataset");
  ScalerParams s;
  s.min.resize(ds.features());
  s.max.resize(ds.features());
  for (Eigen::Index j = 0; j < ds.X.cols(); ++j) {
    s.min[j] = ds.X.col(j).minCoeff();
    s.max[j] = ds.X.col(j).maxCoeff();
  }
  return s;
}

FlowDataset apply_scaler(const FlowDataset& ds, const ScalerParams& scaler) {
  if (scaler.min.size() != ds.features() || scaler.max.size() != ds.features()) {
    throw DimensionError("scaler has " + std::to_string(scaler.min.size()) +
                         " features, dataset has " + std::to_string(ds.features()));
  }
  FlowDataset out = ds;
  for (Eigen::Index j = 0; j < out.X.cols(); ++j) {
    const double lo = scaler.min[j];
    const double range = scaler.max[j] - lo;
    for (Eigen::Index i = 0; i < out.X.rows(); ++i) {
      double& v = out.X(i, j);
      v = range > 0 ? std::clamp((v - lo) / range, 0.0, 1.0) : 0.0;
    }
  }
  return out;
}

DatasetSplit split(const FlowDataset& ds, const SplitSpec& spec) {
  spec.validate();
  if (ds.rows() < 3) throw EmptyDatasetError("split needs at least 3 rows");
  std::mt19937_64 rng(spec.seed);
  DatasetSplit out;
  for (int label : {0, 1}) {
    std::vector<size_t> idx;
    for (size_t i = 0; i < ds.rows(); ++i) {
      if (ds.y[i] == label) idx.push_back(i);
    }
    if (idx.empty()) continue;
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto n = static_cast<double>(idx.size());
    const auto n_train = std::min(idx.size(), static_cast<size_t>(std::llround(n * spec.train_frac)));
    const auto n_val =
        std::min(idx.size() - n_train, static_cast<size_t>(std::llround(n * spec.val_frac)));
    out.train_index.insert(out.train_index.end(), idx.begin(), idx.begin() + n_train);
    out.val_index.insert(out.val_index.end(), idx.begin() + n_train, idx.begin() + n_train + n_val);
    out.test_index.insert(out.test_index.end(), idx.begin() + n_train + n_val, idx.end());
    const char* names[] = {"train", "val", "test"};
    const size_t sizes[] = {n_train, n_val, idx.size() - n_train - n_val};
    for (int s = 0; s < 3; ++s) {
      if (sizes[s] == 0) {
        out.warnings.push_back(std::string("split '") + names[s] + "' received no rows of class " +
                               std::to_string(label));
      }
    }
  }
  for (auto* index : {&out.train_index, &out.val_index, &out.test_index}) {
    std::shuffle(index->begin(), index->end(), rng);
  }
  out.train = ds.select_rows(out.train_index);
  out.val = ds.select_rows(out.val_index);
  out.test = ds.select_rows(out.test_index);
  return out;
}

std::vector<size_t> synth_noninformative_features(size_t m) {
  const size_t k = (m + 3) / 4;
  std::vector<size_t> out;
  for (size_t j = m - k; j < m; ++j) out.push_back(j);
  return out;
}

FlowDataset synth_generate(const SynthSpec& spec) {
  if (spec.n_per_class < 1) throw ConfigError("n_per_class must be >= 1");
  if (spec.m < 2) throw ConfigError("m must be >= 2");
  if (spec.noise < 0) throw ConfigError("noise must be >= 0");
  const auto m = static_cast<Eigen::Index>(spec.m);
  const auto q = static_cast<Eigen::Index>(std::max<size_t>(spec.latent_factors, 1));
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  // Class offset direction, zero on the non-informative block.
  Vector direction(m);
  for (Eigen::Index j = 0; j < m; ++j) direction(j) = normal(rng);
  for (size_t j : synth_noninformative_features(spec.m)) direction(static_cast<Eigen::Index>(j)) = 0;
  direction.normalize();

  Matrix loadings(m, q);
  for (Eigen::Index j = 0; j < m; ++j) {
    for (Eigen::Index f = 0; f < q; ++f) loadings(j, f) = normal(rng) * spec.factor_scale;
  }
  // Within-class variation stays orthogonal to the class offset.
  loadings -= direction * (direction.transpose() * loadings);

  const Vector center = Vector::Constant(m, 0.5);
  const Vector offset = direction * (spec.class_separation / 2.0);

  FlowDataset ds;
  ds.schema = FeatureSchema::generic(spec.m);
  ds.X.resize(static_cast<Eigen::Index>(2 * spec.n_per_class), m);
  ds.y.resize(2 * spec.n_per_class);
  Vector factors(q);
  for (size_t i = 0; i < 2 * spec.n_per_class; ++i) {
    const int label = static_cast<int>(i % 2);
    for (Eigen::Index f = 0; f < q; ++f) factors(f) = normal(rng);
    Vector x = center + (label == 1 ? offset : Vector(-offset)) + loadings * factors;
    for (Eigen::Index j = 0; j < m; ++j) {
      x(j) = std::clamp(x(j) + spec.noise * normal(rng), 0.0, 1.0);
    }
    ds.X.row(static_cast<Eigen::Index>(i)) = x.transpose();
    ds.y[i] = label;
  }
  return ds;
}

std::string dataset_to_csv(const FlowDataset& ds) {
  std::string out;
  for (size_t j = 0; j < ds.schema.size(); ++j) {
    out += ds.schema.name(j);
    out += ',';
  }
  out += "label\n";
  for (Eigen::Index i = 0; i < ds.X.rows(); ++i) {
    for (Eigen::Index j = 0; j < ds.X.cols(); ++j) {
      out += io::format_double(ds.X(i, j));
      out += ',';
    }
    out += std::to_string(ds.y[static_cast<size_t>(i)]);
    out += '\n';
  }
  return out;
}

void save_dataset_csv(const FlowDataset& ds, const std::filesystem::path& path) {
  io::write_file(path, dataset_to_csv(ds));
}

FlowDataset load_dataset_csv(const std::filesystem::path& path) {
  const std::string text = io::read_file(path);
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw EmptyDatasetError("empty dataset file: " + path.string());
  auto header = io::split_csv_line(line);
  if (header.empty() || header.back() != "label") {
    throw SchemaError("dataset file lacks trailing 'label' column: " + path.string());
  }
  header.pop_back();
  FlowDataset ds;
  ds.schema = FeatureSchema(header);
  std::vector<double> values;
  size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = io::split_csv_line(line);
    if (fields.size() != header.size() + 1) {
      throw ParseError("row " + std::to_string(line_no) + ": wrong field count");
    }
    for (size_t j = 0; j < header.size(); ++j) {
      double v = 0;
      if (!io::parse_double(fields[j], v)) {
        throw ParseError("row " + std::to_string(line_no) + ", column '" + header[j] +
                         "': non-numeric value");
      }
      values.push_back(v);
    }
    double label = 0;
    if (!io::parse_double(fields.back(), label) || (label != 0 && label != 1)) {
      throw ParseError("row " + std::to_string(line_no) + ": label must be 0 or 1");
    }
    ds.y.push_back(static_cast<int>(label));
  }
  ds.X = Eigen::Map<Matrix>(values.data(), static_cast<Eigen::Index>(ds.y.size()),
                            static_cast<Eigen::Index>(header.size()));
  return ds;
}

nlohmann::json scaler_to_json(const FeatureSchema& schema, const ScalerParams& scaler) {
  return {{"schema", schema.names()}, {"min", scaler.min}, {"max", scaler.max}};
}

ScalerParams scaler_from_json(const nlohmann::json& j, FeatureSchema* schema) {
  ScalerParams s;
  s.min = j.at("min").get<std::vector<double>>();
  s.max = j.at("max").get<std::vector<double>>();
  const auto names = j.at("schema").get<std::vector<std::string>>();
  if (s.min.size() != names.size() || s.max.size() != names.size()) {
    throw DimensionError("scaler JSON: min/max length differs from schema");
  }
  for (size_t k = 0; k < s.min.size(); ++k) {
    if (s.min[k] > s.max[k]) throw ConfigError("scaler JSON: min > max for " + names[k]);
  }
  if (schema) *schema = FeatureSchema(names);
  return s;
}

}  // namespace shapguard
