#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "safari/envs.hpp"
#include "safari/errors.hpp"
#include "safari/models.hpp"
#include "safari/monitor.hpp"
#include "safari/numkit/rng.hpp"

namespace safari::control {

using models::Matrix;
using models::Vector;

enum class Optimizer { random_shooting, cem };

inline std::string_view to_string(Optimizer o) { return o == Optimizer::cem ? "cem" : "random_shooting"; }
inline Optimizer optimizer_from_string(std::string_view s) {
  if (s == "random_shooting") return Optimizer::random_shooting;
  if (s == "cem") return Optimizer::cem;
  throw ConfigError("unknown optimizer: " + std::string(s));
}

struct PlannerConfig {
  int horizon = 5;
  int n_candidates = 64;
  Optimizer optimizer = Optimizer::random_shooting;
  int cem_iters = 3;
  double cem_elite_frac = 0.1;
  double action_sample_std = 0.05;
  std::uint64_t seed = 0;

  [[nodiscard]] int elite_count() const {
    return std::max(1, static_cast<int>(std::lround(cem_elite_frac * n_candidates)));
  }

  void validate() const {
    if (horizon < 1) throw ConfigError("planner horizon must be positive");
    if (n_candidates < 1) throw ConfigError("planner needs at least one candidate");
    if (!(action_sample_std > 0.0)) throw ConfigError("action_sample_std must be positive");
    if (optimizer == Optimizer::cem) {
      if (cem_iters < 1) throw ConfigError("cem_iters must be positive");
      if (!(cem_elite_frac > 0.0 && cem_elite_frac <= 1.0)) throw ConfigError("cem_elite_frac must lie in (0, 1]");
    }
  }
};

struct ControllerConfig {
  double beta = 0.2;
  PlannerConfig planner;
  /// States scored from the predicted terminal state; 1 scores the terminal state alone.
  int terminal_rollout_steps = 1;

  void validate() const {
    if (!(beta >= 0.0)) throw ConfigError("beta must be non-negative");
    if (terminal_rollout_steps < 1) throw ConfigError("terminal_rollout_steps must be positive");
    planner.validate();
  }
};

struct PlanResult {
  std::vector<envs::Action> actions;
  Vector predicted_terminal_state;
  double terminal_uncertainty = 0.0;
  /// Objective of every candidate evaluated, in evaluation order.
  std::vector<double> candidate_objectives;
  /// Best objective seen after each optimizer iteration (one entry for random shooting).
  std::vector<double> iteration_best;
};

namespace detail {

/// Mean energy along a chained policy/dynamics rollout of `steps` states, one row per start state.
/// Non-finite rows score +infinity.
inline Vector batch_uncertainty(const Matrix& states, const models::TrainedModels& m, int steps) {
  Matrix s = states;
  // Running mean, same arithmetic as unc_rollout.
  Vector total = Vector::Zero(states.rows());
  for (int i = 0; i < steps; ++i) {
    total += (m.dae.error_batch(s) - total) / static_cast<double>(i + 1);
    if (i + 1 == steps) break;
    s = m.dynamics.predict_next_batch(s, m.policy.act_batch(s));
  }
  for (Eigen::Index r = 0; r < total.size(); ++r)
    if (!std::isfinite(total(r))) total(r) = std::numeric_limits<double>::infinity();
  return total;
}

/// Rolls each candidate (row of 2*horizon action components) through the dynamics; returns terminal states.
inline Matrix terminal_states(const Vector& state, const Matrix& candidates, const models::DynamicsModel& dyn,
                              int horizon) {
  Matrix s = state.transpose().replicate(candidates.rows(), 1);
  for (int t = 0; t < horizon; ++t) s = dyn.predict_next_batch(s, candidates.middleCols(2 * t, 2));
  return s;
}

inline void clamp_actions(Matrix& candidates) {
  candidates = candidates.cwiseMax(-envs::kMaxAction).cwiseMin(envs::kMaxAction);
}

} // namespace detail

/**
 * Sampling-based search for the action sequence whose predicted terminal
 * state has the lowest uncertainty. Ties go to the earliest candidate.
 */
inline PlanResult plan_min_uncertainty(const Vector& state, const models::TrainedModels& m, const PlannerConfig& cfg,
                                       int terminal_rollout_steps = 1) {
  cfg.validate();
  if (terminal_rollout_steps < 1) throw ConfigError("terminal_rollout_steps must be positive");
  if (state.size() != m.dynamics.params.output_dim()) throw ShapeError("state width does not match dynamics model");
  numkit::Rng rng(cfg.seed);
  const int width = 2 * cfg.horizon;
  const int iters = cfg.optimizer == Optimizer::cem ? cfg.cem_iters : 1;

  Vector mean = Vector::Zero(width);
  Vector stddev = Vector::Constant(width, cfg.action_sample_std);
  PlanResult res;
  double best = std::numeric_limits<double>::infinity();
  Vector best_seq;
  Vector best_terminal;

  for (int it = 0; it < iters; ++it) {
    Matrix cand(cfg.n_candidates, width);
    for (int r = 0; r < cand.rows(); ++r)
      for (int c = 0; c < width; ++c) cand(r, c) = mean(c) + stddev(c) * rng.normal();
    detail::clamp_actions(cand);
    // Carrying the incumbent into the next population keeps per-iteration bests non-increasing.
    if (it > 0 && best_seq.size() == width) cand.row(0) = best_seq.transpose();

    const Matrix terminal = detail::terminal_states(state, cand, m.dynamics, cfg.horizon);
    const Vector obj = detail::batch_uncertainty(terminal, m, terminal_rollout_steps);
    for (Eigen::Index r = 0; r < obj.size(); ++r) {
      res.candidate_objectives.push_back(obj(r));
      if (obj(r) < best) {
        best = obj(r);
        best_seq = cand.row(r).transpose();
        best_terminal = terminal.row(r).transpose();
      }
    }
    res.iteration_best.push_back(best);

    if (cfg.optimizer == Optimizer::cem && it + 1 < iters) {
      std::vector<int> order(static_cast<std::size_t>(obj.size()));
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return obj(a) < obj(b); });
      const int k = std::min(cfg.elite_count(), static_cast<int>(obj.size()));
      Vector mu = Vector::Zero(width);
      for (int i = 0; i < k; ++i) mu += cand.row(order[static_cast<std::size_t>(i)]).transpose();
      mu /= k;
      Vector var = Vector::Zero(width);
      for (int i = 0; i < k; ++i) var += (cand.row(order[static_cast<std::size_t>(i)]).transpose() - mu).cwiseAbs2();
      mean = mu;
      stddev = (var / k).cwiseSqrt().cwiseMax(1e-6);
    }
  }

  if (!std::isfinite(best)) throw NumericError("every planner candidate diverged");
  res.terminal_uncertainty = best;
  res.predicted_terminal_state = best_terminal;
  for (int t = 0; t < cfg.horizon; ++t) res.actions.emplace_back(best_seq(2 * t), best_seq(2 * t + 1));
  return res;
}

/// Policy action plus beta times the first planned action, clamped to the action box.
inline envs::Action combine(const envs::Action& policy_action, const envs::Action& plan_first, double beta) {
  return envs::clamp_action(policy_action + beta * plan_first);
}

inline envs::Action hybrid_action(const Vector& state, const models::TrainedModels& m, const ControllerConfig& cfg) {
  cfg.validate();
  const envs::Action a = m.policy.act(state);
  if (cfg.beta == 0.0) return envs::clamp_action(a);
  const PlanResult plan = plan_min_uncertainty(state, m, cfg.planner, cfg.terminal_rollout_steps);
  return combine(a, plan.actions.front(), cfg.beta);
}

enum class ControllerKind { bc_only, hybrid, expert };

inline std::string_view to_string(ControllerKind k) {
  switch (k) {
    case ControllerKind::bc_only: return "bc_only";
    case ControllerKind::hybrid: return "hybrid";
    case ControllerKind::expert: return "expert";
  }
  return "?";
}

inline ControllerKind controller_from_string(std::string_view s) {
  if (s == "bc_only" || s == "bc") return ControllerKind::bc_only;
  if (s == "hybrid") return ControllerKind::hybrid;
  if (s == "expert") return ControllerKind::expert;
  throw ConfigError("unknown controller: " + std::string(s));
}

enum class StopReason { success, step_limit, failure_stop };

inline std::string_view to_string(StopReason r) {
  switch (r) {
    case StopReason::success: return "success";
    case StopReason::step_limit: return "step_limit";
    case StopReason::failure_stop: return "failure_stop";
  }
  return "?";
}

struct EpisodeResult {
  bool success = false;
  int steps = 0;
  StopReason stop_reason = StopReason::step_limit;
  std::optional<int> trigger_step;
  /// Autoencoder energy of each visited state where an action was chosen (empty without models).
  std::vector<double> energy_trace;
  /// Monitor uncertainty per decision step, including the one that stopped the episode.
  std::vector<double> monitor_trace;
  std::vector<envs::Action> actions;
  envs::EnvState final_state;

  bool operator==(const EpisodeResult&) const = default;
};

/**
 * Closed-loop episode. `m` may be null only for the expert controller without
 * a monitor. The planner is reseeded every step from cfg.planner.seed and the
 * step index, so episodes are reproducible.
 */
inline EpisodeResult run_episode(envs::EnvKind kind, const envs::TaskInstance& inst, ControllerKind controller,
                                 const models::TrainedModels* m, const ControllerConfig& cfg,
                                 const failure::FailureMonitorConfig* monitor = nullptr,
                                 int max_steps = envs::kDefaultMaxSteps) {
  cfg.validate();
  const bool monitored = monitor != nullptr && monitor->enabled;
  if (m == nullptr && (controller != ControllerKind::expert || monitored))
    throw ConfigError("run_episode needs trained models for this controller");
  envs::EnvState s = envs::reset(kind, inst, max_steps).state;
  EpisodeResult res;
  while (true) {
    if (envs::is_success(s)) {
      res.success = true;
      res.stop_reason = StopReason::success;
      break;
    }
    if (s.step_count >= s.max_steps) {
      res.stop_reason = StopReason::step_limit;
      break;
    }
    const Vector obs = envs::observe(s);
    if (m != nullptr) res.energy_trace.push_back(obs.allFinite() ? m->dae.error(obs) : std::numeric_limits<double>::infinity());
    if (monitored) {
      const auto d = failure::monitor_step(obs, *m, *monitor);
      res.monitor_trace.push_back(d.uncertainty);
      if (d.stop) {
        res.stop_reason = StopReason::failure_stop;
        res.trigger_step = s.step_count;
        break;
      }
    }
    envs::Action a;
    switch (controller) {
      case ControllerKind::expert: a = envs::expert_action(s); break;
      case ControllerKind::bc_only: a = envs::clamp_action(m->policy.act(obs)); break;
      case ControllerKind::hybrid: {
        ControllerConfig step_cfg = cfg;
        step_cfg.planner.seed = numkit::Rng::derive_seed(cfg.planner.seed, "plan", static_cast<std::uint64_t>(s.step_count));
        a = hybrid_action(obs, *m, step_cfg);
        break;
      }
    }
    res.actions.push_back(a);
    s = envs::step(s, a).state;
  }
  res.steps = s.step_count;
  res.final_state = s;
  return res;
}

} // namespace safari::control
