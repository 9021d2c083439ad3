#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "safari/errors.hpp"
#include "safari/numkit/rng.hpp"

namespace safari::numkit {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class Activation { tanh, relu, identity };

inline std::string_view to_string(Activation a) {
  switch (a) {
  case Activation::tanh: return "tanh";
  case Activation::relu: return "relu";
  case Activation::identity: return "identity";
  }
  return "identity";
}

inline Activation activation_from_string(std::string_view s) {
  if (s == "tanh") return Activation::tanh;
  if (s == "relu") return Activation::relu;
  if (s == "identity") return Activation::identity;
  throw ConfigError("unknown activation '" + std::string(s) + "'");
}

struct LayerSpec {
  int input_dim = 0;
  int output_dim = 0;
  Activation activation = Activation::identity;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Dense feed-forward network. weights[k] is output_dim x input_dim of layers[k].
/// Also used as the gradient container, which always has the shape of the parameters it differentiates.
struct MlpParams {
  std::vector<LayerSpec> layers;
  std::vector<Matrix> weights;
  std::vector<Vector> biases;

  [[nodiscard]] int input_dim() const { return layers.empty() ? 0 : layers.front().input_dim; }
  [[nodiscard]] int output_dim() const { return layers.empty() ? 0 : layers.back().output_dim; }

  [[nodiscard]] std::size_t parameter_count() const {
    std::size_t n = 0;
    for (std::size_t k = 0; k < weights.size(); ++k) n += weights[k].size() + biases[k].size();
    return n;
  }

  /// Checks the chaining and shape invariants; throws ShapeError on violation.
  void validate() const {
    if (layers.empty()) throw ShapeError("network has no layers");
    if (weights.size() != layers.size() || biases.size() != layers.size())
      throw ShapeError("layer/weight/bias counts differ");
    for (std::size_t k = 0; k < layers.size(); ++k) {
      const auto& l = layers[k];
      if (l.input_dim <= 0 || l.output_dim <= 0) throw ShapeError("layer dimensions must be positive");
      if (k + 1 < layers.size() && l.output_dim != layers[k + 1].input_dim)
        throw ShapeError("layer " + std::to_string(k) + " output does not chain into layer " + std::to_string(k + 1));
      if (weights[k].rows() != l.output_dim || weights[k].cols() != l.input_dim)
        throw ShapeError("weight matrix " + std::to_string(k) + " has wrong shape");
      if (biases[k].size() != l.output_dim) throw ShapeError("bias " + std::to_string(k) + " has wrong size");
    }
    if (layers.back().activation != Activation::identity)
      throw ShapeError("final layer must use identity activation");
  }

  [[nodiscard]] bool all_finite() const {
    for (std::size_t k = 0; k < weights.size(); ++k)
      if (!weights[k].allFinite() || !biases[k].allFinite()) return false;
    return true;
  }

  [[nodiscard]] MlpParams zeros_like() const {
    MlpParams z;
    z.layers = layers;
    for (std::size_t k = 0; k < layers.size(); ++k) {
      z.weights.push_back(Matrix::Zero(weights[k].rows(), weights[k].cols()));
      z.biases.push_back(Vector::Zero(biases[k].size()));
    }
    return z;
  }

  /// Visits every scalar parameter in a fixed order (layer, weights row-major, then bias).
  template <typename F>
  void for_each_parameter(F&& f) {
    for (std::size_t k = 0; k < layers.size(); ++k) {
      for (Eigen::Index r = 0; r < weights[k].rows(); ++r)
        for (Eigen::Index c = 0; c < weights[k].cols(); ++c) f(weights[k](r, c));
      for (Eigen::Index r = 0; r < biases[k].size(); ++r) f(biases[k](r));
    }
  }

  template <typename F>
  void for_each_parameter(F&& f) const {
    const_cast<MlpParams*>(this)->for_each_parameter([&](double& v) { f(static_cast<const double&>(v)); });
  }

  friend bool operator==(const MlpParams& a, const MlpParams& b) {
    if (a.layers != b.layers) return false;
    for (std::size_t k = 0; k < a.layers.size(); ++k)
      if (a.weights[k] != b.weights[k] || a.biases[k] != b.biases[k]) return false;
    return true;
  }
};

/// Layer list for in -> hidden... -> out with the given hidden activation and an identity head.
inline std::vector<LayerSpec> make_layers(int input_dim, std::span<const int> hidden, int output_dim,
                                          Activation hidden_activation = Activation::tanh) {
  std::vector<LayerSpec> layers;
  int prev = input_dim;
  for (int h : hidden) {
    layers.push_back({prev, h, hidden_activation});
    prev = h;
  }
  layers.push_back({prev, output_dim, Activation::identity});
  return layers;
}

inline std::vector<LayerSpec> make_layers(int input_dim, std::initializer_list<int> hidden, int output_dim,
                                          Activation hidden_activation = Activation::tanh) {
  return make_layers(input_dim, std::span<const int>(hidden.begin(), hidden.size()), output_dim, hidden_activation);
}

/// All-zero parameters for the given layers.
inline MlpParams zero_mlp(std::vector<LayerSpec> layers) {
  MlpParams p;
  p.layers = std::move(layers);
  for (const auto& l : p.layers) {
    p.weights.push_back(Matrix::Zero(l.output_dim, l.input_dim));
    p.biases.push_back(Vector::Zero(l.output_dim));
  }
  p.validate();
  return p;
}

/// Glorot-uniform weights in +-sqrt(6/(fan_in+fan_out)), zero biases.
inline MlpParams init_mlp(std::vector<LayerSpec> layers, Rng& rng) {
  MlpParams p = zero_mlp(std::move(layers));
  for (std::size_t k = 0; k < p.layers.size(); ++k) {
    const double limit = std::sqrt(6.0 / (p.layers[k].input_dim + p.layers[k].output_dim));
    auto& w = p.weights[k];
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = rng.uniform(-limit, limit);
  }
  return p;
}

namespace detail {

inline double activate(Activation a, double z) {
  switch (a) {
  case Activation::tanh: return std::tanh(z);
  case Activation::relu: return z > 0.0 ? z : 0.0;
  case Activation::identity: return z;
  }
  return z;
}

/// Derivative expressed through the pre-activation z and the activation value y.
inline double activate_grad(Activation a, double z, double y) {
  switch (a) {
  case Activation::tanh: return 1.0 - y * y;
  case Activation::relu: return z > 0.0 ? 1.0 : 0.0;
  case Activation::identity: return 1.0;
  }
  return 1.0;
}

template <typename Derived>
void apply_activation(Activation a, Eigen::MatrixBase<Derived>& m) {
  if (a == Activation::identity) return;
  m = m.unaryExpr([a](double z) { return activate(a, z); });
}

} // namespace detail

/// Single-sample forward pass.
inline Vector mlp_forward(const MlpParams& params, const Vector& input) {
  if (params.layers.empty()) throw ShapeError("network has no layers");
  if (input.size() != params.input_dim())
    throw ShapeError("input length " + std::to_string(input.size()) + " != network input dim " +
                     std::to_string(params.input_dim()));
  Vector a = input;
  for (std::size_t k = 0; k < params.layers.size(); ++k) {
    Vector z = params.weights[k] * a + params.biases[k];
    detail::apply_activation(params.layers[k].activation, z);
    a = std::move(z);
  }
  return a;
}

/// Batched forward pass; rows of `inputs` are samples. May differ from mlp_forward in the last bits
/// because matrix-matrix products accumulate in a different order.
inline Matrix mlp_forward_batch(const MlpParams& params, const Matrix& inputs) {
  if (params.layers.empty()) throw ShapeError("network has no layers");
  if (inputs.cols() != params.input_dim())
    throw ShapeError("batch input width " + std::to_string(inputs.cols()) + " != network input dim " +
                     std::to_string(params.input_dim()));
  Matrix a = inputs;
  for (std::size_t k = 0; k < params.layers.size(); ++k) {
    Matrix z = a * params.weights[k].transpose();
    z.rowwise() += params.biases[k].transpose();
    detail::apply_activation(params.layers[k].activation, z);
    a = std::move(z);
  }
  return a;
}

/// Rows are samples: inputs is batch_size x input_dim, targets is batch_size x target_dim.
struct Batch {
  Matrix inputs;
  Matrix targets;

  [[nodiscard]] Eigen::Index size() const { return inputs.rows(); }
};

struct LossAndGradient {
  double loss = 0.0;
  MlpParams gradient;
};

/// Loss head for backprop: given network outputs, returns the loss and dLoss/dOutputs.
using OutputLoss = std::function<std::pair<double, Matrix>(const Matrix& outputs)>;

/// Reverse-mode pass through the network for an arbitrary loss on the outputs.
inline LossAndGradient backprop(const MlpParams& params, const Matrix& inputs, const OutputLoss& loss_head) {
  params.validate();
  if (inputs.rows() < 1) throw ShapeError("batch must contain at least one sample");
  if (inputs.cols() != params.input_dim()) throw ShapeError("batch input width does not match network");

  const std::size_t n_layers = params.layers.size();
  std::vector<Matrix> pre(n_layers);
  std::vector<Matrix> post(n_layers + 1);
  post[0] = inputs;
  for (std::size_t k = 0; k < n_layers; ++k) {
    pre[k] = post[k] * params.weights[k].transpose();
    pre[k].rowwise() += params.biases[k].transpose();
    post[k + 1] = pre[k];
    detail::apply_activation(params.layers[k].activation, post[k + 1]);
  }

  auto [loss, upstream] = loss_head(post[n_layers]);
  if (!std::isfinite(loss)) throw NumericError("non-finite loss in backward pass");
  if (upstream.rows() != inputs.rows() || upstream.cols() != params.output_dim())
    throw ShapeError("loss gradient has wrong shape");

  LossAndGradient out{loss, params.zeros_like()};
  for (std::size_t k = n_layers; k-- > 0;) {
    const Activation act = params.layers[k].activation;
    if (act != Activation::identity) {
      for (Eigen::Index c = 0; c < upstream.cols(); ++c)
        for (Eigen::Index r = 0; r < upstream.rows(); ++r)
          upstream(r, c) *= detail::activate_grad(act, pre[k](r, c), post[k + 1](r, c));
    }
    out.gradient.weights[k].noalias() = upstream.transpose() * post[k];
    out.gradient.biases[k] = upstream.colwise().sum().transpose();
    if (k > 0) upstream = upstream * params.weights[k];
  }
  if (!out.gradient.all_finite()) throw NumericError("non-finite gradient in backward pass");
  return out;
}

/// Mean-squared-error head: loss = (1/B) * sum over samples of ||output - target||^2.
inline OutputLoss mse_loss(const Matrix& targets) {
  return [&targets](const Matrix& outputs) {
    if (outputs.rows() != targets.rows() || outputs.cols() != targets.cols())
      throw ShapeError("targets do not match network outputs");
    const double inv_b = 1.0 / static_cast<double>(outputs.rows());
    Matrix diff = outputs - targets;
    const double loss = diff.squaredNorm() * inv_b;
    return std::pair<double, Matrix>{loss, (2.0 * inv_b) * diff};
  };
}

inline LossAndGradient mlp_backward(const MlpParams& params, const Batch& batch) {
  if (batch.inputs.rows() != batch.targets.rows()) throw ShapeError("input and target row counts differ");
  if (batch.targets.cols() != params.output_dim()) throw ShapeError("target width does not match network output");
  return backprop(params, batch.inputs, mse_loss(batch.targets));
}

inline double mse(const MlpParams& params, const Batch& batch) {
  const Matrix out = mlp_forward_batch(params, batch.inputs);
  if (out.rows() != batch.targets.rows() || out.cols() != batch.targets.cols())
    throw ShapeError("targets do not match network outputs");
  return (out - batch.targets).squaredNorm() / static_cast<double>(out.rows());
}

} // namespace safari::numkit
