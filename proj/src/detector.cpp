#include "shapguard/detector.hpp"

#include <algorithm>
#include <cmath>

#include "shapguard/error.hpp"
#include "shapguard/io.hpp"

namespace shapguard {

std::string to_string(CalibrationKind k) {
  return k == CalibrationKind::kPercentile ? "percentile" : "sigma";
}

CalibrationKind calibration_kind_from_string(const std::string& s) {
  if (s == "percentile") return CalibrationKind::kPercentile;
  if (s == "sigma") return CalibrationKind::kSigma;
  throw ConfigError("unknown calibration method: " + s);
}

void CalibrationMethod::validate() const {
  if (kind == CalibrationKind::kPercentile && !(parameter > 0 && parameter < 100)) {
    throw ConfigError("percentile must lie in (0, 100)");
  }
  if (kind == CalibrationKind::kSigma && parameter != 2.0 && parameter != 3.0) {
    throw ConfigError("sigma multiplier must be 2 or 3");
  }
}

TrainResult train_autoencoder(const Matrix& fingerprints, const TrainConfig& cfg,
                              const AutoencoderShape& shape, uint64_t init_seed) {
  const auto m = static_cast<size_t>(fingerprints.cols());
  if (fingerprints.rows() < 2) throw EmptyDatasetError("autoencoder needs at least 2 rows");
  if (shape.latent >= m) {
    throw ConfigError("latent size " + std::to_string(shape.latent) +
                      " must be smaller than the fingerprint length " + std::to_string(m));
  }
  MlpSpec spec;
  spec.layer_sizes.push_back(m);
  for (size_t h : shape.hidden) spec.layer_sizes.push_back(h);
  spec.layer_sizes.push_back(shape.latent);
  for (auto it = shape.hidden.rbegin(); it != shape.hidden.rend(); ++it) {
    spec.layer_sizes.push_back(*it);
  }
  spec.layer_sizes.push_back(m);
  spec.hidden_activation = Activation::kRelu;
  spec.output_activation = Activation::kLinear;
  spec.seed = init_seed;
  TrainConfig ae_cfg = cfg;
  ae_cfg.loss = LossKind::kMse;
  return train(init(spec), fingerprints, fingerprints, ae_cfg);
}

double reconstruction_error(const MlpModel& autoencoder, const Vector& z) {
  if (static_cast<size_t>(z.size()) != autoencoder.spec.input_size() ||
      autoencoder.spec.input_size() != autoencoder.spec.output_size()) {
    throw DimensionError("reconstruction_error: fingerprint length mismatch");
  }
  const Matrix recon = outputs(autoencoder, z.transpose());
  return (z.transpose() - recon.row(0)).squaredNorm();
}

std::vector<double> reconstruction_errors(const MlpModel& autoencoder, const Matrix& Z) {
  std::vector<double> errors;
  errors.reserve(static_cast<size_t>(Z.rows()));
  for (Eigen::Index i = 0; i < Z.rows(); ++i) {
    errors.push_back(reconstruction_error(autoencoder, Z.row(i).transpose()));
  }
  return errors;
}

double calibrate_threshold(const std::vector<double>& errors, const CalibrationMethod& method,
                           CalibrationRecord* record) {
  method.validate();
  if (errors.size() < 10) {
    throw CalibrationError("calibration needs at least 10 clean validation errors, got " +
                           std::to_string(errors.size()));
  }
  for (double e : errors) {
    if (!std::isfinite(e) || e < 0) throw CalibrationError("calibration errors must be finite and >= 0");
  }
  const auto n = static_cast<double>(errors.size());
  // Moments of the errors shifted by their minimum: constant input gives
  // exactly zero spread and a mean equal to the constant.
  const double lo = *std::min_element(errors.begin(), errors.end());
  double shifted_sum = 0;
  for (double e : errors) shifted_sum += e - lo;
  const double shifted_mean = shifted_sum / n;
  const double mean = lo + shifted_mean;
  double var = 0;
  for (double e : errors) var += (e - lo - shifted_mean) * (e - lo - shifted_mean);
  const double stddev = std::sqrt(var / n);

  double tau = 0;
  if (method.kind == CalibrationKind::kPercentile) {
    std::vector<double> sorted = errors;
    std::sort(sorted.begin(), sorted.end());
    const double rank = method.parameter / 100.0 * (n - 1);
    const auto lo = static_cast<size_t>(std::floor(rank));
    const size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = rank - static_cast<double>(lo);
    tau = sorted[lo] + frac * (sorted[hi] - sorted[lo]);
  } else {
    tau = mean + method.parameter * stddev;
  }
  if (record) {
    record->method = method;
    record->samples = errors.size();
    record->error_mean = mean;
    record->error_stddev = stddev;
    record->error_min = *std::min_element(errors.begin(), errors.end());
    record->error_max = *std::max_element(errors.begin(), errors.end());
  }
  return tau;
}

Detection decide(const DetectorModel& det, double score) {
  if (!det.calibrated()) throw StateError("detector has no calibrated threshold");
  return {score > *det.tau ? Verdict::kAdversarial : Verdict::kClean, score};
}

Detection detect(const DetectorModel& det, const Vector& fingerprint) {
  if (!det.calibrated()) throw StateError("detector has no calibrated threshold");
  return decide(det, reconstruction_error(det.autoencoder, fingerprint));
}

PipelineDetection detect_pipeline(const MlpModel& nids, const DetectorModel& det,
                                  const BackgroundSet& background, const Vector& x) {
  if (nids.spec.input_size() != det.autoencoder.spec.input_size()) {
    throw DimensionError("classifier and detector disagree on the feature count");
  }
  PipelineDetection out;
  out.fingerprint = shap_fingerprint(nids, x, background);
  out.detection = detect(det, out.fingerprint.phi);
  return out;
}

nlohmann::json detector_to_json(const DetectorModel& det) {
  nlohmann::json j;
  j["autoencoder"] = model_to_json(det.autoencoder);
  j["tau"] = det.tau ? nlohmann::json(*det.tau) : nlohmann::json(nullptr);
  j["calibration"] = {{"method", to_string(det.calibration.method.kind)},
                      {"parameter", det.calibration.method.parameter},
                      {"samples", det.calibration.samples},
                      {"error_mean", det.calibration.error_mean},
                      {"error_stddev", det.calibration.error_stddev},
                      {"error_min", det.calibration.error_min},
                      {"error_max", det.calibration.error_max}};
  j["background_ref"] = det.background_ref;
  return j;
}

DetectorModel detector_from_json(const nlohmann::json& j) {
  DetectorModel det;
  det.autoencoder = model_from_json(j.at("autoencoder"));
  if (det.autoencoder.spec.input_size() != det.autoencoder.spec.output_size()) {
    throw DimensionError("detector JSON: autoencoder input and output sizes differ");
  }
  if (!j.at("tau").is_null()) det.tau = j.at("tau").get<double>();
  const auto& c = j.at("calibration");
  det.calibration.method.kind = calibration_kind_from_string(c.at("method"));
  det.calibration.method.parameter = c.at("parameter");
  det.calibration.samples = c.value("samples", size_t{0});
  det.calibration.error_mean = c.value("error_mean", 0.0);
  det.calibration.error_stddev = c.value("error_stddev", 0.0);
  det.calibration.error_min = c.value("error_min", 0.0);
  det.calibration.error_max = c.value("error_max", 0.0);
  det.background_ref = j.value("background_ref", "");
  return det;
}

void save_detector(const DetectorModel& det, const std::filesystem::path& path) {
  io::write_file(path, detector_to_json(det).dump(1) + "\n");
}

DetectorModel load_detector(const std::filesystem::path& path) {
  return detector_from_json(nlohmann::json::parse(io::read_file(path)));
}

}  // namespace shapguard
