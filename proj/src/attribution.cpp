#include "shapguard/attribution.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "shapguard/error.hpp"
#include "shapguard/io.hpp"

namespace shapguard {

namespace {

constexpr double kRescaleMinDelta = 1e-9;

void require_explainable(const MlpModel& model) {
  if (model.spec.output_size() != 1) {
    throw ContractError("attribution requires a single-output model");
  }
}

// Input multipliers of the logit for x against each reference row, using the
// rescale rule on every relu unit. Row k of the result belongs to reference k.
Matrix rescale_multipliers(const MlpModel& model, const Vector& x, const Matrix& refs,
                           const ForwardTrace& tr) {
  const ForwardTrace tx = forward(model, x.transpose());
  const size_t L = model.spec.num_layers();
  Matrix mult = Matrix::Ones(refs.rows(), 1);  // d logit / d last pre-activation
  for (size_t l = L; l-- > 0;) {
    Matrix upstream = mult * model.weights[l];
    if (l == 0) return upstream;
    const Matrix& pre_ref = tr.pre[l - 1];
    const Matrix& pre_x = tx.pre[l - 1];
    for (Eigen::Index k = 0; k < upstream.rows(); ++k) {
      for (Eigen::Index j = 0; j < upstream.cols(); ++j) {
        const double zx = pre_x(0, j);
        const double zr = pre_ref(k, j);
        const double dz = zx - zr;
        const double ratio = std::abs(dz) > kRescaleMinDelta
                                 ? (std::max(zx, 0.0) - std::max(zr, 0.0)) / dz
                                 : (zx > 0 ? 1.0 : 0.0);
        upstream(k, j) *= ratio;
      }
    }
    mult = std::move(upstream);
  }
  return mult;
}

// Background forward pass and phi0 computed once and reused per sample.
struct Explainer {
  const MlpModel& model;
  const BackgroundSet& background;
  ForwardTrace trace;
  double phi0;

  Explainer(const MlpModel& m, const BackgroundSet& bg)
      : model(m), background(bg), trace(forward(m, bg.samples)), phi0(trace.last_pre().mean()) {}

  AttributionFingerprint operator()(const Vector& x) const {
    if (x.size() != background.samples.cols()) {
      throw DimensionError("fingerprint: input and background differ in feature count");
    }
    const Matrix mult = rescale_multipliers(model, x, background.samples, trace);
    Matrix contrib = (-background.samples).rowwise() + x.transpose();
    contrib = contrib.cwiseProduct(mult);
    AttributionFingerprint fp;
    fp.phi = contrib.colwise().mean().transpose();
    fp.phi0 = phi0;
    fp.model_output = logit(model, x);
    return fp;
  }
};

}  // namespace

void BackgroundSet::validate() const {
  if (samples.rows() == 0) throw EmptyDatasetError("background set is empty");
}

BackgroundSet sample_background(const FlowDataset& clean_train, size_t k, uint64_t seed) {
  if (clean_train.rows() == 0) throw EmptyDatasetError("cannot sample background from no rows");
  std::vector<size_t> idx(clean_train.rows());
  std::iota(idx.begin(), idx.end(), size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(std::min(k, idx.size()));
  BackgroundSet bg;
  bg.samples = clean_train.select_rows(idx).X;
  bg.seed = seed;
  bg.source = "clean train split, " + std::to_string(idx.size()) + " rows without replacement";
  return bg;
}

bool AttributionFingerprint::complete() const {
  return completeness_gap() <= 1e-5 * std::max(1.0, std::abs(model_output));
}

double expected_output(const MlpModel& model, const BackgroundSet& background) {
  require_explainable(model);
  background.validate();
  return logits(model, background.samples).mean();
}

Vector deeplift_single(const MlpModel& model, const Vector& x, const Vector& reference) {
  require_explainable(model);
  if (x.size() != reference.size()) throw DimensionError("deeplift: x and reference differ in size");
  const Matrix refs = reference.transpose();
  const Matrix mult = rescale_multipliers(model, x, refs, forward(model, refs));
  return mult.row(0).transpose().cwiseProduct(x - reference);
}

AttributionFingerprint shap_fingerprint(const MlpModel& model, const Vector& x,
                                        const BackgroundSet& background) {
  require_explainable(model);
  background.validate();
  return Explainer(model, background)(x);
}

std::vector<AttributionFingerprint> fingerprint_batch(const MlpModel& model, const Matrix& X,
                                                      const BackgroundSet& background,
                                                      const std::vector<int>* labels,
                                                      std::optional<int> class_filter,
                                                      const std::vector<int64_t>* ids) {
  if (labels && labels->size() != static_cast<size_t>(X.rows())) {
    throw DimensionError("fingerprint_batch: label count differs from row count");
  }
  if (class_filter && !labels) throw ContractError("fingerprint_batch: class filter needs labels");
  if (ids && ids->size() != static_cast<size_t>(X.rows())) {
    throw DimensionError("fingerprint_batch: id count differs from row count");
  }
  require_explainable(model);
  background.validate();
  const Explainer explain(model, background);
  std::vector<AttributionFingerprint> out;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const auto r = static_cast<size_t>(i);
    if (class_filter && (*labels)[r] != *class_filter) continue;
    AttributionFingerprint fp = explain(X.row(i).transpose());
    fp.sample_id = ids ? (*ids)[r] : static_cast<int64_t>(i);
    out.push_back(std::move(fp));
  }
  if (out.empty()) throw EmptyDatasetError("fingerprint_batch: empty selection");
  return out;
}

Matrix fingerprint_matrix(const std::vector<AttributionFingerprint>& fps) {
  if (fps.empty()) return Matrix();
  Matrix z(static_cast<Eigen::Index>(fps.size()), fps.front().phi.size());
  for (size_t i = 0; i < fps.size(); ++i) {
    if (fps[i].phi.size() != z.cols()) throw DimensionError("fingerprints differ in length");
    z.row(static_cast<Eigen::Index>(i)) = fps[i].phi.transpose();
  }
  return z;
}

std::string fingerprints_to_csv(const std::vector<AttributionFingerprint>& fps,
                                const std::string& origin) {
  const Eigen::Index m = fps.empty() ? 0 : fps.front().phi.size();
  std::string out = "sample_id,phi0";
  for (Eigen::Index j = 1; j <= m; ++j) out += ",phi_" + std::to_string(j);
  out += ",model_output,origin\n";
  for (const auto& fp : fps) {
    out += std::to_string(fp.sample_id) + "," + io::format_double(fp.phi0);
    for (Eigen::Index j = 0; j < fp.phi.size(); ++j) out += "," + io::format_double(fp.phi(j));
    out += "," + io::format_double(fp.model_output) + "," + origin + "\n";
  }
  return out;
}

void save_fingerprints(const std::vector<AttributionFingerprint>& fps, const std::string& origin,
                       const std::filesystem::path& path) {
  io::write_file(path, fingerprints_to_csv(fps, origin));
}

std::vector<AttributionFingerprint> load_fingerprints(const std::filesystem::path& path,
                                                      std::string* origin) {
  std::istringstream in(io::read_file(path));
  std::string line;
  if (!std::getline(in, line)) throw EmptyDatasetError("empty fingerprint file: " + path.string());
  const auto header = io::split_csv_line(line);
  if (header.size() < 5 || header[0] != "sample_id" || header.back() != "origin") {
    throw SchemaError("fingerprint CSV: malformed header in " + path.string());
  }
  const size_t m = header.size() - 4;
  std::vector<AttributionFingerprint> out;
  auto num = [&](const std::string& f) {
    double v = 0;
    if (!io::parse_double(f, v)) throw ParseError("fingerprint CSV: bad number '" + f + "'");
    return v;
  };
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = io::split_csv_line(line);
    if (f.size() != header.size()) throw ParseError("fingerprint CSV: wrong field count");
    AttributionFingerprint fp;
    fp.sample_id = static_cast<int64_t>(num(f[0]));
    fp.phi0 = num(f[1]);
    fp.phi.resize(static_cast<Eigen::Index>(m));
    for (size_t j = 0; j < m; ++j) fp.phi(static_cast<Eigen::Index>(j)) = num(f[2 + j]);
    fp.model_output = num(f[2 + m]);
    if (origin) *origin = f.back();
    out.push_back(std::move(fp));
  }
  return out;
}

}  // namespace shapguard
