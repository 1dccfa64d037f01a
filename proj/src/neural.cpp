#include "shapguard/neural.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "shapguard/error.hpp"
#include "shapguard/io.hpp"

namespace shapguard {

namespace {

constexpr double kProbClip = 1e-7;

void apply_activation(Activation a, Matrix& m) {
  switch (a) {
    case Activation::kRelu:
      m = m.cwiseMax(0.0);
      break;
    case Activation::kSigmoid:
      m = m.unaryExpr([](double z) { return sigmoid(z); });
      break;
    case Activation::kLinear:
      break;
  }
}

// d post / d pre, evaluated elementwise. relu'(0) = 0.
Matrix activation_derivative(Activation a, const Matrix& pre, const Matrix& post) {
  switch (a) {
    case Activation::kRelu:
      return pre.unaryExpr([](double z) { return z > 0 ? 1.0 : 0.0; });
    case Activation::kSigmoid:
      return post.array() * (1.0 - post.array());
    case Activation::kLinear:
      break;
  }
  return Matrix::Ones(pre.rows(), pre.cols());
}

// dL/d(last pre-activation) for the mean batch loss.
Matrix output_delta(const MlpModel& model, const ForwardTrace& trace, const Matrix& targets,
                    LossKind loss) {
  const Matrix& out = trace.output();
  const auto n = static_cast<double>(out.rows());
  const Activation out_act = model.spec.output_activation;
  if (loss == LossKind::kBce) {
    if (out_act == Activation::kSigmoid) {
      // p - y computed without cancellation: for y=1 it is -sigmoid(-z).
      Matrix delta(out.rows(), out.cols());
      for (Eigen::Index i = 0; i < out.rows(); ++i) {
        for (Eigen::Index k = 0; k < out.cols(); ++k) {
          const double z = trace.last_pre()(i, k);
          const double y = targets(i, k);
          delta(i, k) = (1.0 - y) * sigmoid(z) - y * sigmoid(-z);
        }
      }
      return delta / n;
    }
    // bce on a non-sigmoid output: differentiate the clipped formula directly.
    Matrix dout(out.rows(), out.cols());
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
      for (Eigen::Index k = 0; k < out.cols(); ++k) {
        const double p = out(i, k);
        const double y = targets(i, k);
        const bool clipped = p < kProbClip || p > 1.0 - kProbClip;
        dout(i, k) = clipped ? 0.0 : (-y / p + (1.0 - y) / (1.0 - p)) / n;
      }
    }
    return dout.cwiseProduct(activation_derivative(out_act, trace.last_pre(), out));
  }
  const Matrix dout = 2.0 * (out - targets) / n;
  return dout.cwiseProduct(activation_derivative(out_act, trace.last_pre(), out));
}

// Backpropagates an output delta to all layers; fills param grads and
// returns dL/dinput.
Matrix backward(const MlpModel& model, const ForwardTrace& trace, Matrix delta,
                ParamGradients* grads) {
  const size_t L = model.spec.num_layers();
  if (grads) {
    grads->weights.resize(L);
    grads->biases.resize(L);
  }
  for (size_t l = L; l-- > 0;) {
    if (grads) {
      grads->weights[l] = delta.transpose() * trace.post[l];
      grads->biases[l] = delta.colwise().sum().transpose();
    }
    Matrix dprev = delta * model.weights[l];
    if (l > 0) {
      delta = dprev.cwiseProduct(
          activation_derivative(model.activation(l - 1), trace.pre[l - 1], trace.post[l]));
    } else {
      return dprev;
    }
  }
  return delta;
}

void check_input(const MlpModel& model, Eigen::Index cols) {
  if (static_cast<size_t>(cols) != model.spec.input_size()) {
    throw DimensionError("input has " + std::to_string(cols) + " features, model expects " +
                         std::to_string(model.spec.input_size()));
  }
}

}  // namespace

std::string to_string(Activation a) {
  switch (a) {
    case Activation::kRelu:
      return "relu";
    case Activation::kSigmoid:
      return "sigmoid";
    case Activation::kLinear:
      return "linear";
  }
  return "?";
}

std::string to_string(LossKind l) { return l == LossKind::kBce ? "bce" : "mse"; }

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::kRelu;
  if (s == "sigmoid") return Activation::kSigmoid;
  if (s == "linear") return Activation::kLinear;
  throw ConfigError("unknown activation: " + s);
}

LossKind loss_from_string(const std::string& s) {
  if (s == "bce") return LossKind::kBce;
  if (s == "mse") return LossKind::kMse;
  throw ConfigError("unknown loss: " + s);
}

void MlpSpec::validate() const {
  if (layer_sizes.size() < 2) throw ConfigError("an MLP needs at least 2 layer sizes");
  for (size_t s : layer_sizes) {
    if (s == 0) throw ConfigError("layer sizes must be positive");
  }
  if (hidden_activation != Activation::kRelu) throw ConfigError("hidden activation must be relu");
  if (output_activation == Activation::kRelu) {
    throw ConfigError("output activation must be sigmoid or linear");
  }
}

size_t MlpModel::parameter_count() const {
  size_t n = 0;
  for (size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
  return n;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(learning_rate > 0)) throw ConfigError("learning_rate must be > 0");
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

MlpModel init(const MlpSpec& spec) {
  spec.validate();
  MlpModel model;
  model.spec = spec;
  std::mt19937_64 rng(spec.seed);
  for (size_t l = 0; l < spec.num_layers(); ++l) {
    const auto fan_in = static_cast<Eigen::Index>(spec.layer_sizes[l]);
    const auto fan_out = static_cast<Eigen::Index>(spec.layer_sizes[l + 1]);
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Matrix w(fan_out, fan_in);
    for (Eigen::Index i = 0; i < fan_out; ++i) {
      for (Eigen::Index j = 0; j < fan_in; ++j) w(i, j) = dist(rng);
    }
    model.weights.push_back(std::move(w));
    model.biases.push_back(Vector::Zero(fan_out));
  }
  return model;
}

ForwardTrace forward(const MlpModel& model, const Matrix& X) {
  check_input(model, X.cols());
  ForwardTrace trace;
  trace.post.push_back(X);
  for (size_t l = 0; l < model.spec.num_layers(); ++l) {
    Matrix z = trace.post.back() * model.weights[l].transpose();
    z.rowwise() += model.biases[l].transpose();
    Matrix h = z;
    apply_activation(model.activation(l), h);
    trace.pre.push_back(std::move(z));
    trace.post.push_back(std::move(h));
  }
  return trace;
}

Matrix outputs(const MlpModel& model, const Matrix& X) { return forward(model, X).output(); }

Vector logits(const MlpModel& model, const Matrix& X) {
  if (model.spec.output_size() != 1) throw ContractError("logits requires a single-output model");
  return forward(model, X).last_pre().col(0);
}

double logit(const MlpModel& model, const Vector& x) {
  check_input(model, x.size());
  Vector h = x;
  for (size_t l = 0; l < model.spec.num_layers(); ++l) {
    Vector z = model.weights[l] * h + model.biases[l];
    if (l + 1 == model.spec.num_layers()) {
      if (z.size() != 1) throw ContractError("logit requires a single-output model");
      return z(0);
    }
    h = z.cwiseMax(0.0);
  }
  return 0.0;
}

double loss_value(const Matrix& out, const Matrix& targets, LossKind loss) {
  if (out.rows() != targets.rows() || out.cols() != targets.cols()) {
    throw DimensionError("loss_value: outputs and targets differ in shape");
  }
  if (out.rows() == 0) throw EmptyDatasetError("loss_value: empty batch");
  const auto n = static_cast<double>(out.rows());
  if (loss == LossKind::kMse) return (out - targets).squaredNorm() / n;
  double total = 0;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    for (Eigen::Index k = 0; k < out.cols(); ++k) {
      const double p = std::clamp(out(i, k), kProbClip, 1.0 - kProbClip);
      const double y = targets(i, k);
      total -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
    }
  }
  return total / n;
}

ParamGradients grad_params(const MlpModel& model, const Matrix& X, const Matrix& targets,
                           LossKind loss) {
  const ForwardTrace trace = forward(model, X);
  if (targets.rows() != X.rows() || static_cast<size_t>(targets.cols()) != model.spec.output_size()) {
    throw DimensionError("grad_params: target shape mismatch");
  }
  ParamGradients grads;
  backward(model, trace, output_delta(model, trace, targets, loss), &grads);
  return grads;
}

Vector grad_input(const MlpModel& model, const Vector& x, const Vector& target, LossKind loss) {
  const Matrix X = x.transpose();
  const Matrix T = target.transpose();
  const ForwardTrace trace = forward(model, X);
  if (static_cast<size_t>(T.cols()) != model.spec.output_size()) {
    throw DimensionError("grad_input: target length mismatch");
  }
  return backward(model, trace, output_delta(model, trace, T, loss), nullptr).row(0).transpose();
}

Vector grad_input(const MlpModel& model, const Vector& x, int label) {
  return grad_input(model, x, Vector::Constant(1, static_cast<double>(label)), LossKind::kBce);
}

Vector grad_logit(const MlpModel& model, const Vector& x) {
  if (model.spec.output_size() != 1) throw ContractError("grad_logit requires a single output");
  const ForwardTrace trace = forward(model, x.transpose());
  return backward(model, trace, Matrix::Ones(1, 1), nullptr).row(0).transpose();
}

TrainResult train(const MlpModel& model, const Matrix& X, const Matrix& targets,
                  const TrainConfig& cfg) {
  cfg.validate();
  if (X.rows() == 0) throw EmptyDatasetError("train: dataset is empty");
  check_input(model, X.cols());
  if (targets.rows() != X.rows() || static_cast<size_t>(targets.cols()) != model.spec.output_size()) {
    throw DimensionError("train: target shape mismatch");
  }
  TrainResult result{model, {}};
  MlpModel& m = result.model;
  const size_t L = m.spec.num_layers();
  std::vector<Matrix> mw(L), vw(L);
  std::vector<Vector> mb(L), vb(L);
  for (size_t l = 0; l < L; ++l) {
    mw[l] = Matrix::Zero(m.weights[l].rows(), m.weights[l].cols());
    vw[l] = mw[l];
    mb[l] = Vector::Zero(m.biases[l].size());
    vb[l] = mb[l];
  }
  std::mt19937_64 rng(cfg.seed);
  const auto n = static_cast<size_t>(X.rows());
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  uint64_t step = 0;
  Matrix xb, tb;
  for (size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.shuffle) std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0;
    for (size_t start = 0; start < n; start += cfg.batch_size) {
      const size_t count = std::min(cfg.batch_size, n - start);
      xb.resize(static_cast<Eigen::Index>(count), X.cols());
      tb.resize(static_cast<Eigen::Index>(count), targets.cols());
      for (size_t r = 0; r < count; ++r) {
        xb.row(static_cast<Eigen::Index>(r)) = X.row(static_cast<Eigen::Index>(order[start + r]));
        tb.row(static_cast<Eigen::Index>(r)) =
            targets.row(static_cast<Eigen::Index>(order[start + r]));
      }
      const ForwardTrace trace = forward(m, xb);
      epoch_loss += loss_value(trace.output(), tb, cfg.loss) * static_cast<double>(count);
      ParamGradients g;
      backward(m, trace, output_delta(m, trace, tb, cfg.loss), &g);

      ++step;
      const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
      auto adam = [&](auto& param, auto& mom, auto& vel, const auto& grad) {
        mom = cfg.beta1 * mom + (1.0 - cfg.beta1) * grad;
        vel = cfg.beta2 * vel + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
        param.array() -= cfg.learning_rate * (mom.array() / c1) /
                         ((vel.array() / c2).sqrt() + cfg.epsilon);
      };
      for (size_t l = 0; l < L; ++l) {
        adam(m.weights[l], mw[l], vw[l], g.weights[l]);
        adam(m.biases[l], mb[l], vb[l], g.biases[l]);
      }
    }
    epoch_loss /= static_cast<double>(n);
    if (!std::isfinite(epoch_loss)) {
      throw DivergenceError("training diverged: non-finite loss at epoch " +
                            std::to_string(epoch + 1));
    }
    result.loss_history.push_back(epoch_loss);
  }
  return result;
}

TrainResult train(const MlpModel& model, const Matrix& X, const std::vector<int>& labels,
                  const TrainConfig& cfg) {
  if (labels.size() != static_cast<size_t>(X.rows())) {
    throw DimensionError("train: label count differs from row count");
  }
  Matrix targets(X.rows(), 1);
  for (size_t i = 0; i < labels.size(); ++i) targets(static_cast<Eigen::Index>(i), 0) = labels[i];
  return train(model, X, targets, cfg);
}

Prediction predict(const MlpModel& model, const Matrix& X) {
  if (model.spec.output_activation != Activation::kSigmoid || model.spec.output_size() != 1) {
    throw ContractError("predict requires a single sigmoid-output model");
  }
  const Matrix out = outputs(model, X);
  Prediction p;
  p.probabilities.resize(static_cast<size_t>(out.rows()));
  p.labels.resize(p.probabilities.size());
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    p.probabilities[static_cast<size_t>(i)] = out(i, 0);
    p.labels[static_cast<size_t>(i)] = out(i, 0) > 0.5 ? 1 : 0;
  }
  return p;
}

int predict_label(const MlpModel& model, const Vector& x) {
  return predict(model, x.transpose()).labels.front();
}

nlohmann::json model_to_json(const MlpModel& model) {
  nlohmann::json layers = nlohmann::json::array();
  for (size_t l = 0; l < model.weights.size(); ++l) {
    const Matrix& w = model.weights[l];
    std::vector<double> flat(w.data(), w.data() + w.size());  // row-major
    std::vector<double> bias(model.biases[l].data(), model.biases[l].data() + model.biases[l].size());
    layers.push_back({{"rows", w.rows()}, {"cols", w.cols()}, {"weights", flat}, {"biases", bias}});
  }
  return {{"spec",
           {{"layer_sizes", model.spec.layer_sizes},
            {"hidden_activation", to_string(model.spec.hidden_activation)},
            {"output_activation", to_string(model.spec.output_activation)},
            {"seed", model.spec.seed}}},
          {"layers", layers}};
}

MlpModel model_from_json(const nlohmann::json& j) {
  MlpModel model;
  const auto& s = j.at("spec");
  model.spec.layer_sizes = s.at("layer_sizes").get<std::vector<size_t>>();
  model.spec.hidden_activation = activation_from_string(s.at("hidden_activation"));
  model.spec.output_activation = activation_from_string(s.at("output_activation"));
  model.spec.seed = s.at("seed").get<uint64_t>();
  model.spec.validate();
  const auto& layers = j.at("layers");
  if (layers.size() != model.spec.num_layers()) throw DimensionError("model JSON: layer count");
  for (size_t l = 0; l < layers.size(); ++l) {
    const auto rows = static_cast<Eigen::Index>(model.spec.layer_sizes[l + 1]);
    const auto cols = static_cast<Eigen::Index>(model.spec.layer_sizes[l]);
    auto flat = layers[l].at("weights").get<std::vector<double>>();
    auto bias = layers[l].at("biases").get<std::vector<double>>();
    if (flat.size() != static_cast<size_t>(rows * cols) || bias.size() != static_cast<size_t>(rows)) {
      throw DimensionError("model JSON: layer " + std::to_string(l) + " has wrong shape");
    }
    for (double v : flat) {
      if (!std::isfinite(v)) throw ContractError("model JSON: non-finite weight");
    }
    model.weights.emplace_back(Eigen::Map<Matrix>(flat.data(), rows, cols));
    model.biases.emplace_back(Eigen::Map<Vector>(bias.data(), rows));
  }
  return model;
}

void save_model(const MlpModel& model, const std::filesystem::path& path) {
  io::write_file(path, model_to_json(model).dump(1) + "\n");
}

MlpModel load_model(const std::filesystem::path& path) {
  return model_from_json(nlohmann::json::parse(io::read_file(path)));
}

}  // namespace shapguard
