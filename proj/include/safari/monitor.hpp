#pragma once

#include <optional>

#include "safari/errors.hpp"
#include "safari/models.hpp"
#include "safari/uncertainty.hpp"

namespace safari::failure {

struct FailureMonitorConfig {
  uncertainty::CalibratedThreshold threshold = uncertainty::CalibratedThreshold::disabled();
  /// 0 scores the current state alone, which is the same as a one-step rollout.
  int rollout_steps = 10;
  bool enabled = true;

  void validate() const {
    if (rollout_steps < 0) throw ConfigError("rollout_steps must be non-negative");
  }
};

struct MonitorDecision {
  bool stop = false;
  double uncertainty = 0.0;
};

inline MonitorDecision monitor_step(const models::Vector& state, const models::TrainedModels& m,
                                    const FailureMonitorConfig& cfg) {
  cfg.validate();
  if (!cfg.enabled) return {};
  double u = 0.0;
  if (cfg.rollout_steps == 0) {
    u = state.allFinite() ? m.dae.error(state) : std::numeric_limits<double>::infinity();
  } else {
    u = uncertainty::unc_rollout(state, m.policy, m.dynamics, m.dae, cfg.rollout_steps).value;
  }
  // A NaN energy is treated as unbounded uncertainty.
  if (std::isnan(u)) u = std::numeric_limits<double>::infinity();
  return {cfg.threshold.exceeded_by(u), u};
}

} // namespace safari::failure
