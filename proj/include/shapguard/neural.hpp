#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "shapguard/linalg.hpp"

namespace shapguard {

enum class Activation { kRelu, kSigmoid, kLinear };
enum class LossKind { kBce, kMse };
enum class Optimizer { kAdam };

std::string to_string(Activation a);
std::string to_string(LossKind l);
Activation activation_from_string(const std::string& s);
LossKind loss_from_string(const std::string& s);

struct MlpSpec {
  std::vector<size_t> layer_sizes;  // input size first
  Activation hidden_activation = Activation::kRelu;
  Activation output_activation = Activation::kSigmoid;
  uint64_t seed = 0;

  void validate() const;
  size_t input_size() const { return layer_sizes.front(); }
  size_t output_size() const { return layer_sizes.back(); }
  size_t num_layers() const { return layer_sizes.size() - 1; }
};

// Dense feed-forward network. weights[l] has shape (layer_sizes[l+1], layer_sizes[l]).
struct MlpModel {
  MlpSpec spec;
  std::vector<Matrix> weights;
  std::vector<Vector> biases;

  Activation activation(size_t layer) const {
    return layer + 1 == spec.num_layers() ? spec.output_activation : spec.hidden_activation;
  }
  size_t parameter_count() const;
};

struct TrainConfig {
  size_t epochs = 50;
  size_t batch_size = 256;
  double learning_rate = 1e-3;
  Optimizer optimizer = Optimizer::kAdam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  LossKind loss = LossKind::kBce;
  uint64_t seed = 0;
  bool shuffle = true;

  void validate() const;
};

// Per-layer pre-activations (W h + b) and post-activations for one batch.
// post[0] is the input batch, so post has one more entry than pre.
struct ForwardTrace {
  std::vector<Matrix> pre;
  std::vector<Matrix> post;

  const Matrix& output() const { return post.back(); }
  // Pre-activation of the last layer; the logit for sigmoid-output models.
  const Matrix& last_pre() const { return pre.back(); }
};

struct ParamGradients {
  std::vector<Matrix> weights;
  std::vector<Vector> biases;
};

struct TrainResult {
  MlpModel model;
  std::vector<double> loss_history;
};

struct Prediction {
  std::vector<double> probabilities;
  std::vector<int> labels;
};

MlpModel init(const MlpSpec& spec);

ForwardTrace forward(const MlpModel& model, const Matrix& X);
Matrix outputs(const MlpModel& model, const Matrix& X);

// Pre-output-activation score of a single-output model (the logit g(x)).
double logit(const MlpModel& model, const Vector& x);
Vector logits(const MlpModel& model, const Matrix& X);

double sigmoid(double z);

// Mean loss. For bce, outputs are probabilities clipped to [1e-7, 1-1e-7];
// for mse, the mean over samples of the squared l2 row distance.
double loss_value(const Matrix& outputs, const Matrix& targets, LossKind loss);

// Exact reverse-mode gradients of the mean batch loss. For bce on a sigmoid
// output the gradient is taken through the logit (d/dz = p - y).
ParamGradients grad_params(const MlpModel& model, const Matrix& X, const Matrix& targets,
                           LossKind loss);

// Gradient of the single-sample loss with respect to the input coordinates.
Vector grad_input(const MlpModel& model, const Vector& x, const Vector& target, LossKind loss);
Vector grad_input(const MlpModel& model, const Vector& x, int label);  // bce, one output

// Gradient of logit(model, x) with respect to x.
Vector grad_logit(const MlpModel& model, const Vector& x);

TrainResult train(const MlpModel& model, const Matrix& X, const Matrix& targets,
                  const TrainConfig& cfg);
TrainResult train(const MlpModel& model, const Matrix& X, const std::vector<int>& labels,
                  const TrainConfig& cfg);

// Labels use a strict 0.5 cutoff: label 1 iff probability > 0.5.
Prediction predict(const MlpModel& model, const Matrix& X);
int predict_label(const MlpModel& model, const Vector& x);

nlohmann::json model_to_json(const MlpModel& model);
MlpModel model_from_json(const nlohmann::json& j);
void save_model(const MlpModel& model, const std::filesystem::path& path);
MlpModel load_model(const std::filesystem::path& path);

}  // namespace shapguard
