#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "safari/control.hpp"
#include "safari/dataset.hpp"
#include "safari/errors.hpp"
#include "safari/models.hpp"
#include "safari/monitor.hpp"

namespace safari::failure {

using models::Matrix;
using models::Vector;

struct PredictionOutcome {
  bool predicted_failure = false;
  std::optional<int> trigger_step;
  /// From the unmonitored twin run.
  bool actual_failure = false;
  int episode_steps = 0;
};

struct FailureReport {
  int rollout_steps = 0;
  double threshold = 0.0;
  int true_positives = 0;
  int false_positives = 0;
  int false_negatives = 0;
  int true_negatives = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  /// Mean trigger step over true positives; NaN when there are none.
  double mean_steps_to_predict = std::numeric_limits<double>::quiet_NaN();
  std::vector<PredictionOutcome> outcomes;
};

/// Confusion counts, precision, recall and F1 from per-episode outcomes.
inline FailureReport summarize(std::vector<PredictionOutcome> outcomes) {
  FailureReport r;
  double steps = 0.0;
  for (const auto& o : outcomes) {
    if (o.predicted_failure && o.actual_failure) {
      ++r.true_positives;
      steps += *o.trigger_step;
    } else if (o.predicted_failure) {
      ++r.false_positives;
    } else if (o.actual_failure) {
      ++r.false_negatives;
    } else {
      ++r.true_negatives;
    }
  }
  const int predicted = r.true_positives + r.false_positives;
  const int actual = r.true_positives + r.false_negatives;
  r.precision = predicted > 0 ? static_cast<double>(r.true_positives) / predicted : 0.0;
  r.recall = actual > 0 ? static_cast<double>(r.true_positives) / actual : 0.0;
  r.f1 = r.precision + r.recall > 0.0 ? 2.0 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
  if (r.true_positives > 0) r.mean_steps_to_predict = steps / r.true_positives;
  r.outcomes = std::move(outcomes);
  return r;
}

/**
 * Runs every test instance once unmonitored (ground truth: failure means the
 * step limit was reached without success) and once per monitor config, and
 * scores the monitor's stops against the ground truth.
 */
inline std::vector<FailureReport> evaluate_failure_prediction(
    envs::EnvKind kind, const std::vector<envs::TaskInstance>& test_instances, const models::TrainedModels& m,
    const std::vector<FailureMonitorConfig>& sweep, control::ControllerKind controller = control::ControllerKind::bc_only,
    const control::ControllerConfig& ctrl = {}, int max_steps = envs::kDefaultMaxSteps) {
  if (test_instances.empty()) throw ConfigError("failure evaluation needs a non-empty test set");
  for (const auto& c : sweep) c.validate();

  std::vector<control::EpisodeResult> truth;
  truth.reserve(test_instances.size());
  for (const auto& inst : test_instances)
    truth.push_back(control::run_episode(kind, inst, controller, &m, ctrl, nullptr, max_steps));

  std::vector<FailureReport> reports;
  for (const auto& cfg : sweep) {
    std::vector<PredictionOutcome> outcomes;
    for (std::size_t i = 0; i < test_instances.size(); ++i) {
      const auto monitored = control::run_episode(kind, test_instances[i], controller, &m, ctrl, &cfg, max_steps);
      PredictionOutcome o;
      o.predicted_failure = monitored.stop_reason == control::StopReason::failure_stop;
      o.trigger_step = monitored.trigger_step;
      o.actual_failure = !truth[i].success;
      o.episode_steps = truth[i].steps;
      outcomes.push_back(o);
    }
    FailureReport r = summarize(std::move(outcomes));
    r.rollout_steps = cfg.rollout_steps;
    r.threshold = cfg.threshold.threshold;
    reports.push_back(std::move(r));
  }
  return reports;
}

// ---- supervised baseline ----

/// Per-state classifier giving the probability that the episode through this state fails.
struct SupervisedClassifier {
  numkit::MlpParams params;
  models::Standardizer norm;

  [[nodiscard]] double logit(const Vector& state) const {
    if (state.size() != params.input_dim()) throw ShapeError("state width does not match classifier");
    return numkit::mlp_forward(params, norm.normalize(state))(0);
  }

  [[nodiscard]] double failure_probability(const Vector& state) const { return 1.0 / (1.0 + std::exp(-logit(state))); }
};

/// Binary cross-entropy on logits; targets are 0/1. Mean over the batch.
inline numkit::OutputLoss bce_with_logits(const Matrix& targets) {
  return [&targets](const Matrix& z) {
    if (z.rows() != targets.rows() || z.cols() != targets.cols()) throw ShapeError("targets do not match network outputs");
    const double n = static_cast<double>(z.rows());
    double loss = 0.0;
    Matrix grad(z.rows(), z.cols());
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      const double x = z.data()[i], y = targets.data()[i];
      // softplus(x) - y*x, written to stay finite for large |x|
      loss += std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))) - y * x;
      grad.data()[i] = (1.0 / (1.0 + std::exp(-x)) - y) / n;
    }
    return std::pair<double, Matrix>{loss / n, grad};
  };
}

/// Every state of a trajectory is labeled with that trajectory's outcome (1 = failure).
using LabeledRollout = std::pair<Trajectory, bool>; // second: episode succeeded

inline SupervisedClassifier train_supervised_baseline(const std::vector<LabeledRollout>& rollouts,
                                                      const models::TrainConfig& cfg,
                                                      models::TrainingDiagnostics* diag = nullptr) {
  bool any_success = false, any_failure = false;
  Eigen::Index rows = 0;
  for (const auto& [t, ok] : rollouts) {
    (ok ? any_success : any_failure) = true;
    rows += static_cast<Eigen::Index>(t.steps.size());
  }
  if (!any_success || !any_failure) throw ConfigError("supervised baseline needs both successful and failed rollouts");
  if (rows == 0) throw ConfigError("labeled rollouts contain no states");
  const Eigen::Index dim = rollouts.front().first.steps.front().observation.size();
  Matrix x(rows, dim);
  Matrix y(rows, 1);
  Eigen::Index r = 0;
  for (const auto& [t, ok] : rollouts)
    for (const auto& s : t.steps) {
      if (s.observation.size() != dim) throw ShapeError("observation widths differ across rollouts");
      x.row(r) = s.observation.transpose();
      y(r++, 0) = ok ? 0.0 : 1.0;
    }
  SupervisedClassifier c;
  c.norm = models::Standardizer::fit(x);
  c.params = models::fit_network(c.norm.normalize_rows(x), y, cfg, 0.0,
                                 [](const Matrix& t) { return bce_with_logits(t); }, diag);
  return c;
}

/// Same stop protocol as the unsupervised monitor: stop at the first state whose failure probability exceeds
/// `probability_threshold`. Ground truth comes from the unmonitored episode.
inline FailureReport evaluate_supervised_baseline(envs::EnvKind kind, const std::vector<envs::TaskInstance>& test_instances,
                                                  const models::TrainedModels& m, const SupervisedClassifier& clf,
                                                  double probability_threshold = 0.5,
                                                  int max_steps = envs::kDefaultMaxSteps) {
  if (test_instances.empty()) throw ConfigError("failure evaluation needs a non-empty test set");
  std::vector<PredictionOutcome> outcomes;
  for (const auto& inst : test_instances) {
    // The classifier has no side effects, so the unmonitored run also yields the first crossing.
    envs::EnvState s = envs::reset(kind, inst, max_steps).state;
    PredictionOutcome o;
    while (true) {
      if (envs::is_success(s) || s.step_count >= s.max_steps) break;
      const Vector obs = envs::observe(s);
      if (!o.predicted_failure && clf.failure_probability(obs) > probability_threshold) {
        o.predicted_failure = true;
        o.trigger_step = s.step_count;
      }
      s = envs::step(s, envs::clamp_action(m.policy.act(obs))).state;
    }
    o.actual_failure = !envs::is_success(s);
    o.episode_steps = s.step_count;
    outcomes.push_back(o);
  }
  FailureReport r = summarize(std::move(outcomes));
  r.threshold = probability_threshold;
  return r;
}

} // namespace safari::failure
