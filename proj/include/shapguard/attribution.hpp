#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "shapguard/data.hpp"
#include "shapguard/neural.hpp"

namespace shapguard {

// Reference inputs against which attributions are averaged.
struct BackgroundSet {
  Matrix samples;  // K_b x M, clean and preprocessed
  uint64_t seed = 0;
  std::string source;

  size_t size() const { return static_cast<size_t>(samples.rows()); }
  void validate() const;
};

// Draws k rows uniformly without replacement (all rows when k >= N).
BackgroundSet sample_background(const FlowDataset& clean_train, size_t k, uint64_t seed);

struct AttributionFingerprint {
  Vector phi;
  double phi0 = 0.0;          // expected logit over the background
  double model_output = 0.0;  // logit g(x)
  int64_t sample_id = -1;

  // |phi0 + sum(phi) - g(x)|
  double completeness_gap() const { return std::abs(phi0 + phi.sum() - model_output); }
  bool complete() const;
};

// Mean logit over the background rows.
double expected_output(const MlpModel& model, const BackgroundSet& background);

// DeepLIFT rescale-rule contributions of x relative to one reference input.
// The explained scalar is the logit; sum(result) == g(x) - g(reference) up to
// rounding (exactly, apart from relu units whose input delta is below 1e-9).
Vector deeplift_single(const MlpModel& model, const Vector& x, const Vector& reference);

// Per-reference DeepLIFT averaged over the background, all references at once.
AttributionFingerprint shap_fingerprint(const MlpModel& model, const Vector& x,
                                        const BackgroundSet& background);

// One fingerprint per selected row in input order. With labels and a
// malicious filter only rows labelled 1 are explained.
std::vector<AttributionFingerprint> fingerprint_batch(const MlpModel& model, const Matrix& X,
                                                      const BackgroundSet& background,
                                                      const std::vector<int>* labels = nullptr,
                                                      std::optional<int> class_filter = std::nullopt,
                                                      const std::vector<int64_t>* ids = nullptr);

Matrix fingerprint_matrix(const std::vector<AttributionFingerprint>& fps);

// CSV: sample_id, phi0, phi_1..phi_M, model_output, origin
std::string fingerprints_to_csv(const std::vector<AttributionFingerprint>& fps,
                                const std::string& origin);
void save_fingerprints(const std::vector<AttributionFingerprint>& fps, const std::string& origin,
                       const std::filesystem::path& path);
std::vector<AttributionFingerprint> load_fingerprints(const std::filesystem::path& path,
                                                      std::string* origin = nullptr);

}  // namespace shapguard
