#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "safari/errors.hpp"
#include "safari/numkit/mlp.hpp"

namespace safari::numkit {

namespace detail {

/// Sign of every ReLU pre-activation over the batch; empty for networks without ReLU layers.
inline std::vector<bool> relu_pattern(const MlpParams& params, const Matrix& inputs) {
  std::vector<bool> out;
  Matrix a = inputs;
  for (std::size_t k = 0; k < params.layers.size(); ++k) {
    Matrix z = a * params.weights[k].transpose();
    z.rowwise() += params.biases[k].transpose();
    if (params.layers[k].activation == Activation::relu)
      for (Eigen::Index i = 0; i < z.size(); ++i) out.push_back(z.data()[i] > 0.0);
    apply_activation(params.layers[k].activation, z);
    a = std::move(z);
  }
  return out;
}

} // namespace detail

/**
 * Worst discrepancy between the analytic MSE gradient and central finite
 * differences, taken over every parameter.
 *
 * Per parameter the error is |a - n| / max(|a|, |n|); when both magnitudes
 * fall below 1e-6 the absolute difference is used instead, so a vanishing
 * gradient does not divide by zero.
 *
 * A difference whose +/- step moves a ReLU pre-activation across zero spans a
 * kink and says nothing about the derivative; the step is shrunk tenfold up to
 * three times, and a parameter that still crosses is left out and counted in
 * `kink_skips`.
 */
inline double gradcheck(const MlpParams& params, const Batch& batch, double epsilon = 1e-5, int* kink_skips = nullptr) {
  if (!(epsilon > 0.0 && epsilon <= 1e-2)) throw ConfigError("gradcheck epsilon must lie in (0, 1e-2]");
  const MlpParams analytic = mlp_backward(params, batch).gradient;

  std::vector<double> grads;
  grads.reserve(analytic.parameter_count());
  analytic.for_each_parameter([&](double g) { grads.push_back(g); });

  const std::vector<bool> base = detail::relu_pattern(params, batch.inputs);
  const bool has_relu = !base.empty();
  MlpParams probe = params;
  std::size_t idx = 0;
  double worst = 0.0;
  int skips = 0;
  probe.for_each_parameter([&](double& w) {
    const double saved = w;
    const double a = grads[idx++];
    double eps = epsilon;
    for (int attempt = 0; attempt < 4; ++attempt, eps /= 10.0) {
      w = saved + eps;
      const double up = mse(probe, batch);
      const bool up_smooth = !has_relu || detail::relu_pattern(probe, batch.inputs) == base;
      w = saved - eps;
      const double down = mse(probe, batch);
      const bool down_smooth = !has_relu || detail::relu_pattern(probe, batch.inputs) == base;
      w = saved;
      if (!up_smooth || !down_smooth) {
        if (attempt == 3) ++skips;
        continue;
      }
      const double numeric = (up - down) / (2.0 * eps);
      const double scale = std::max(std::abs(a), std::abs(numeric));
      const double err = scale < 1e-6 ? std::abs(a - numeric) : std::abs(a - numeric) / scale;
      worst = std::max(worst, err);
      break;
    }
  });
  if (kink_skips) *kink_skips = skips;
  return worst;
}

} // namespace safari::numkit
