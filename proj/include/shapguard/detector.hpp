#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "shapguard/attribution.hpp"
#include "shapguard/neural.hpp"

namespace shapguard {

enum class CalibrationKind { kPercentile, kSigma };

struct CalibrationMethod {
  CalibrationKind kind = CalibrationKind::kPercentile;
  double parameter = 99.0;  // percentile in (0,100), or sigma multiplier 2 or 3

  void validate() const;
};

std::string to_string(CalibrationKind k);
CalibrationKind calibration_kind_from_string(const std::string& s);

struct CalibrationRecord {
  CalibrationMethod method;
  size_t samples = 0;
  double error_mean = 0;
  double error_stddev = 0;
  double error_min = 0;
  double error_max = 0;
};

struct DetectorModel {
  MlpModel autoencoder;
  std::optional<double> tau;
  CalibrationRecord calibration;
  std::string background_ref;
  std::vector<double> loss_history;

  bool calibrated() const { return tau.has_value(); }
};

enum class Verdict { kClean, kAdversarial };

struct Detection {
  Verdict verdict = Verdict::kClean;
  double score = 0.0;  // reconstruction error

  bool adversarial() const { return verdict == Verdict::kAdversarial; }
};

struct AutoencoderShape {
  std::vector<size_t> hidden = {32, 16};
  size_t latent = 8;
};

// Encoder [M, hidden..., latent] mirrored into the decoder, relu hidden units,
// linear output, trained on mse with targets equal to the inputs.
TrainResult train_autoencoder(const Matrix& fingerprints, const TrainConfig& cfg,
                              const AutoencoderShape& shape, uint64_t init_seed);

// Squared l2 norm of z - A(z).
double reconstruction_error(const MlpModel& autoencoder, const Vector& z);
std::vector<double> reconstruction_errors(const MlpModel& autoencoder, const Matrix& Z);

// Percentile: linear interpolation between order statistics at rank
// p/100 * (n-1). Sigma: mean + k * population stddev. Needs >= 10 values.
double calibrate_threshold(const std::vector<double>& clean_val_errors,
                           const CalibrationMethod& method, CalibrationRecord* record = nullptr);

// Adversarial iff score > tau.
Detection detect(const DetectorModel& det, const Vector& fingerprint);
Detection decide(const DetectorModel& det, double score);

struct PipelineDetection {
  AttributionFingerprint fingerprint;
  Detection detection;
};

PipelineDetection detect_pipeline(const MlpModel& nids, const DetectorModel& det,
                                  const BackgroundSet& background, const Vector& x);

nlohmann::json detector_to_json(const DetectorModel& det);
DetectorModel detector_from_json(const nlohmann::json& j);
void save_detector(const DetectorModel& det, const std::filesystem::path& path);
DetectorModel load_detector(const std::filesystem::path& path);

}  // namespace shapguard
