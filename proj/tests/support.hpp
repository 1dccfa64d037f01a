#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "shapguard/neural.hpp"

namespace shapguard::testkit {

// Random relu net with the given layer sizes and biases drawn like weights.
inline MlpModel random_net(std::vector<size_t> sizes, uint64_t seed,
                           Activation out = Activation::kSigmoid) {
  MlpSpec spec;
  spec.layer_sizes = std::move(sizes);
  spec.output_activation = out;
  spec.seed = seed;
  MlpModel model = init(spec);
  std::mt19937_64 rng(seed ^ 0x5bd1e995ULL);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (auto& b : model.biases) {
    for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = u(rng);
  }
  return model;
}

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng,
                            double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = u(rng);
  }
  return m;
}

inline Vector random_vector(Eigen::Index n, std::mt19937_64& rng, double lo = 0.0, double hi = 1.0) {
  return random_matrix(n, 1, rng, lo, hi).col(0);
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("shapguard_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// Relative error with an absolute floor so near-zero values compare sanely.
inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1e-4, std::abs(a), std::abs(b)});
}

}  // namespace shapguard::testkit
