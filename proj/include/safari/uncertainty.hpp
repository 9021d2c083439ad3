#pragma once

#include <cmath>
#include <iostream>
#include <limits>
#include <vector>

#include "safari/dataset.hpp"
#include "safari/errors.hpp"
#include "safari/models.hpp"

namespace safari::uncertainty {

using models::Vector;

struct UncertaintyEstimate {
  double value = 0.0;
  int steps_used = 0;
  std::vector<double> per_step_errors;
  /// Set when an imagined state or its energy went non-finite; value is then +infinity.
  bool diverged = false;
};

/**
 * Imagination rollout. Starting from the real state, alternately score the
 * state with the autoencoder, ask the policy for an action and advance with
 * the learned dynamics; the result is the mean energy over `steps` states,
 * the current one included. Imagined states are not clamped to the arena.
 */
inline UncertaintyEstimate unc_rollout(const Vector& state, const models::PolicyModel& policy,
                                       const models::DynamicsModel& dynamics, const models::DaeModel& dae, int steps) {
  if (steps < 1) throw ConfigError("unc_rollout needs steps >= 1");
  UncertaintyEstimate est;
  est.per_step_errors.reserve(static_cast<std::size_t>(steps));
  Vector s = state;
  // Running mean: a rollout whose states all score e averages to exactly e.
  double mean = 0.0;
  for (int i = 0; i < steps; ++i) {
    const double e = s.allFinite() ? dae.error(s) : std::numeric_limits<double>::infinity();
    est.per_step_errors.push_back(e);
    est.steps_used = i + 1;
    if (!std::isfinite(e)) {
      est.diverged = true;
      est.value = std::numeric_limits<double>::infinity();
      return est;
    }
    mean += (e - mean) / (i + 1);
    if (i + 1 == steps) break;
    s = dynamics.predict_next(s, policy.act(s));
  }
  est.value = mean;
  return est;
}

struct CalibratedThreshold {
  double err_train = 0.0;
  double u_thr_mult = 1.5;
  double threshold = 0.0;

  static CalibratedThreshold make(double err_train, double u_thr_mult) {
    if (!(u_thr_mult > 1.0)) throw ConfigError("u_thr_mult must exceed 1");
    if (!(err_train >= 0.0)) throw ConfigError("err_train must be non-negative");
    return {err_train, u_thr_mult, u_thr_mult * err_train};
  }

  /// Never triggers.
  static CalibratedThreshold disabled() {
    return {std::numeric_limits<double>::infinity(), 2.0, std::numeric_limits<double>::infinity()};
  }

  [[nodiscard]] bool exceeded_by(double value) const { return value > threshold; }
};

/// err_train is the mean single-state energy over every training observation.
inline CalibratedThreshold calibrate_threshold(const models::DaeModel& dae, const DemoDataset& dataset,
                                               double u_thr_mult) {
  if (!(u_thr_mult > 1.0)) throw ConfigError("u_thr_mult must exceed 1");
  const models::TransitionTable t = models::flatten(dataset);
  double total = 0.0;
  for (Eigen::Index r = 0; r < t.observations.rows(); ++r) total += dae.error(t.observations.row(r).transpose());
  const double err_train = total / static_cast<double>(t.observations.rows());
  if (err_train == 0.0) std::clog << "warning: autoencoder has zero training energy; threshold is degenerate\n";
  return CalibratedThreshold::make(err_train, u_thr_mult);
}

} // namespace safari::uncertainty
