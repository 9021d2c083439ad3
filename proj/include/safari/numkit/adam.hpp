#pragma once

#include <cmath>
#include <cstdint>

#include "safari/errors.hpp"
#include "safari/numkit/mlp.hpp"

namespace safari::numkit {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  MlpParams first_moment;
  MlpParams second_moment;
  std::int64_t step_count = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState fresh(const MlpParams& params, const AdamConfig& cfg = {}) {
    if (cfg.learning_rate <= 0 || cfg.beta1 <= 0 || cfg.beta2 <= 0 || cfg.epsilon <= 0)
      throw ConfigError("Adam hyperparameters must be positive");
    return {params.zeros_like(), params.zeros_like(), 0, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon};
  }
};

namespace detail {
inline void require_same_shape(const MlpParams& a, const MlpParams& b, const char* what) {
  if (a.layers != b.layers) throw ShapeError(std::string(what) + " shape does not match parameters");
  for (std::size_t k = 0; k < a.layers.size(); ++k)
    if (a.weights[k].rows() != b.weights[k].rows() || a.weights[k].cols() != b.weights[k].cols() ||
        a.biases[k].size() != b.biases[k].size())
      throw ShapeError(std::string(what) + " shape does not match parameters");
}
} // namespace detail

/// One bias-corrected Adam update, in place on both params and state.
inline void adam_step(MlpParams& params, const MlpParams& grad, AdamState& state) {
  detail::require_same_shape(params, grad, "gradient");
  detail::require_same_shape(params, state.first_moment, "first moment");
  detail::require_same_shape(params, state.second_moment, "second moment");

  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  const double b1 = state.beta1, b2 = state.beta2, lr = state.learning_rate, eps = state.epsilon;

  auto update = [&](auto& p, const auto& g, auto& m, auto& v) {
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
    p.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  };
  for (std::size_t k = 0; k < params.layers.size(); ++k) {
    update(params.weights[k], grad.weights[k], state.first_moment.weights[k], state.second_moment.weights[k]);
    update(params.biases[k], grad.biases[k], state.first_moment.biases[k], state.second_moment.biases[k]);
  }
}

} // namespace safari::numkit
