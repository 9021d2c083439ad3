#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "safari/dataset.hpp"
#include "safari/envs.hpp"
#include "safari/errors.hpp"
#include "safari/models.hpp"
#include "safari/numkit/rng.hpp"
#include "safari/uncertainty.hpp"

namespace safari::active {

struct ActiveLearningConfig {
  int n_total = 40;
  double active_ratio = 0.5;
  int retrain_every = 5;
  double u_thr_mult = 1.5;
  int rollout_steps = 10;
  std::uint64_t seed = 0;
  int max_steps = envs::kDefaultMaxSteps;
  /// Rollout attempts allowed per retraining round, as a multiple of retrain_every.
  int attempt_cap_factor = 10;
  models::ModelsConfig models;

  [[nodiscard]] int active_count() const { return static_cast<int>(std::lround(active_ratio * n_total)); }
  [[nodiscard]] int passive_count() const { return n_total - active_count(); }
  [[nodiscard]] int rounds() const { return active_count() / retrain_every; }

  void validate() const {
    if (n_total < 1) throw ConfigError("n_total must be positive");
    if (!(active_ratio > 0.0 && active_ratio < 1.0)) throw ConfigError("active_ratio must lie in (0, 1)");
    if (retrain_every < 1) throw ConfigError("retrain_every must be positive");
    if (std::abs(active_ratio * n_total - active_count()) > 1e-9)
      throw ConfigError("active_ratio * n_total must be an integer");
    if (passive_count() < 1) throw ConfigError("at least one passive demonstration is required");
    if (active_count() % retrain_every != 0)
      throw ConfigError("active demo count must be divisible by retrain_every");
    if (!(u_thr_mult > 1.0)) throw ConfigError("u_thr_mult must exceed 1");
    if (rollout_steps < 1) throw ConfigError("rollout_steps must be positive");
    if (max_steps < 1) throw ConfigError("max_steps must be positive");
    if (attempt_cap_factor < 1) throw ConfigError("attempt_cap_factor must be positive");
  }
};

struct CollectionRecord {
  int demo_index = 0;   ///< position in the final dataset
  int round = 0;        ///< retraining round that collected it
  int trigger_step = 0; ///< policy steps executed before the expert took over
  double uncertainty = 0.0;
  double threshold = 0.0;
  int demo_length = 0;
};

struct CollectionLog {
  std::vector<CollectionRecord> records;
  int attempts = 0;
  int attempts_without_trigger = 0;
  /// Expert completions that did not reach the goal; dropped from the dataset.
  int discarded_completions = 0;
  /// Passive demos used to fill rounds whose attempt cap ran out.
  int fallback_demos = 0;
  std::vector<double> thresholds; ///< threshold in force during each round, then the final one
};

struct CollectionResult {
  models::TrainedModels models;
  DemoDataset dataset;
  CollectionLog log;
  uncertainty::CalibratedThreshold threshold;
};

/// n expert demonstrations on freshly sampled instances.
inline DemoDataset collect_passive(envs::EnvKind kind, int n, numkit::Rng& rng, int max_steps = envs::kDefaultMaxSteps) {
  if (n < 1) throw ConfigError("collect_passive needs n >= 1");
  DemoDataset d;
  d.kind = kind;
  for (const auto& inst : envs::sample_instances(rng, n, kind)) {
    auto t = expert_rollout(envs::reset(kind, inst, max_steps).state, Provenance::passive, inst);
    if (!t.success) throw NumericError("scripted expert failed a sampled instance");
    d.trajectories.push_back(std::move(t));
  }
  return d;
}

/// Outcome of handing control from the policy to the expert partway through an episode.
struct Takeover {
  bool stopped = false; ///< false when the episode ended before any stop
  int stop_step = 0;
  double uncertainty = 0.0;
  envs::EnvState state;
};

/// Decides whether to stop at the current state; returns the uncertainty that justified it.
using StopRule = std::function<std::optional<double>(const envs::EnvState&, int step)>;

inline Takeover roll_policy_until_stop(envs::EnvKind kind, const envs::TaskInstance& inst,
                                       const models::PolicyModel& policy, int max_steps, const StopRule& stop) {
  envs::EnvState s = envs::reset(kind, inst, max_steps).state;
  for (int t = 0;; ++t) {
    if (auto u = stop(s, t)) return {true, t, *u, s};
    auto out = envs::step(s, envs::clamp_action(policy.act(envs::observe(s))));
    s = out.state;
    if (out.result.done) return {false, t + 1, 0.0, s};
  }
}

/// Expert demo from the state where a policy rollout of `stop_step` steps ends. stop_step 0 gives a full demo.
inline Trajectory demo_after_policy_steps(envs::EnvKind kind, const envs::TaskInstance& inst,
                                          const models::PolicyModel& policy, int stop_step, Provenance tag,
                                          int max_steps = envs::kDefaultMaxSteps) {
  auto take = roll_policy_until_stop(kind, inst, policy, max_steps,
                                     [stop_step](const envs::EnvState&, int t) -> std::optional<double> {
                                       if (t >= stop_step) return 0.0;
                                       return std::nullopt;
                                     });
  return expert_rollout(take.state, tag, inst);
}

namespace detail {

/**
 * Shared skeleton of the active and random-stop collectors: passive warm-up,
 * then rounds of `retrain_every` policy rollouts, each stopped by `make_rule`
 * and completed by the expert, retraining after every round.
 */
inline CollectionResult collect_on_policy(envs::EnvKind kind, const ActiveLearningConfig& cfg, Provenance tag,
                                          const std::function<StopRule(const models::TrainedModels&,
                                                                       const uncertainty::CalibratedThreshold&,
                                                                       numkit::Rng&)>& make_rule) {
  cfg.validate();
  const numkit::Rng root(cfg.seed);
  numkit::Rng demo_rng = root.derive("demos");
  numkit::Rng instance_rng = root.derive("on-policy-instances");
  numkit::Rng stop_rng = root.derive("stop-steps");

  CollectionResult res;
  res.dataset = collect_passive(kind, cfg.passive_count(), demo_rng, cfg.max_steps);
  res.models = models::train_all(res.dataset, cfg.models, numkit::Rng::derive_seed(cfg.seed, "train", 0));
  res.threshold = uncertainty::calibrate_threshold(res.models.dae, res.dataset, cfg.u_thr_mult);

  for (int round = 0; round < cfg.rounds(); ++round) {
    res.log.thresholds.push_back(res.threshold.threshold);
    const StopRule rule = make_rule(res.models, res.threshold, stop_rng);
    int collected = 0;
    int attempts = 0;
    while (collected < cfg.retrain_every && attempts < cfg.attempt_cap_factor * cfg.retrain_every) {
      ++attempts;
      ++res.log.attempts;
      const auto inst = envs::sample_instances(instance_rng, 1, kind).front();
      const Takeover take = roll_policy_until_stop(kind, inst, res.models.policy, cfg.max_steps, rule);
      if (!take.stopped) {
        ++res.log.attempts_without_trigger;
        continue;
      }
      Trajectory demo = expert_rollout(take.state, tag, inst);
      if (!demo.success) {
        ++res.log.discarded_completions;
        continue;
      }
      res.log.records.push_back({static_cast<int>(res.dataset.size()), round, take.stop_step, take.uncertainty,
                                 res.threshold.threshold, static_cast<int>(demo.steps.size())});
      res.dataset.trajectories.push_back(std::move(demo));
      ++collected;
    }
    if (collected < cfg.retrain_every) {
      const int missing = cfg.retrain_every - collected;
      DemoDataset fill = collect_passive(kind, missing, demo_rng, cfg.max_steps);
      for (auto& t : fill.trajectories) res.dataset.trajectories.push_back(std::move(t));
      res.log.fallback_demos += missing;
    }
    res.models =
        models::train_all(res.dataset, cfg.models, numkit::Rng::derive_seed(cfg.seed, "train", static_cast<std::uint64_t>(round) + 1));
    res.threshold = uncertainty::calibrate_threshold(res.models.dae, res.dataset, cfg.u_thr_mult);
  }
  res.log.thresholds.push_back(res.threshold.threshold);
  return res;
}

} // namespace detail

/// Uncertainty-triggered demonstration requests: a rollout stops as soon as the imagination-rollout
/// uncertainty of the current state exceeds the calibrated threshold.
inline CollectionResult run_active_learning(envs::EnvKind kind, const ActiveLearningConfig& cfg) {
  return detail::collect_on_policy(
      kind, cfg, Provenance::active,
      [&cfg](const models::TrainedModels& m, const uncertainty::CalibratedThreshold& thr, numkit::Rng&) -> StopRule {
        return [&m, thr, steps = cfg.rollout_steps](const envs::EnvState& s, int) -> std::optional<double> {
          const auto u = uncertainty::unc_rollout(envs::observe(s), m.policy, m.dynamics, m.dae, steps);
          if (thr.exceeded_by(u.value)) return u.value;
          return std::nullopt;
        };
      });
}

/// Same skeleton as run_active_learning but each rollout stops at a step drawn uniformly from [1, max_steps].
inline CollectionResult collect_rand_on_policy(envs::EnvKind kind, const ActiveLearningConfig& cfg) {
  return detail::collect_on_policy(
      kind, cfg, Provenance::rand_on_policy,
      [&cfg](const models::TrainedModels&, const uncertainty::CalibratedThreshold&, numkit::Rng& rng) -> StopRule {
        // One draw per rollout: the rule is re-armed whenever a new episode starts (step 0).
        return [&rng, max_steps = cfg.max_steps, target = 0](const envs::EnvState&, int t) mutable -> std::optional<double> {
          if (t == 0) target = static_cast<int>(rng.uniform_int(1, max_steps));
          if (t >= target) return 0.0;
          return std::nullopt;
        };
      });
}

/**
 * Noise-injected demonstrations. The executed action is the expert action plus
 * isotropic Gaussian noise; the recorded label is the clean expert action at
 * the state actually visited. Failed demos are discarded and resampled, up to
 * 10 * n attempts.
 */
inline DemoDataset collect_dart(envs::EnvKind kind, int n, double noise_std, numkit::Rng& rng,
                                int max_steps = envs::kDefaultMaxSteps) {
  if (n < 1) throw ConfigError("collect_dart needs n >= 1");
  if (!(noise_std >= 0.0)) throw ConfigError("noise std must be non-negative");
  numkit::Rng noise_rng = rng.derive("dart-noise");
  DemoDataset d;
  d.kind = kind;
  int attempts = 0;
  while (static_cast<int>(d.size()) < n) {
    if (attempts++ >= 10 * n) throw NumericError("DART resample budget exhausted");
    const auto inst = envs::sample_instances(rng, 1, kind).front();
    envs::EnvState s = envs::reset(kind, inst, max_steps).state;
    Trajectory t;
    t.instance = inst;
    t.provenance = Provenance::dart;
    while (true) {
      const envs::Action label = envs::expert_action(s);
      t.steps.push_back({envs::observe(s), label});
      const envs::Action executed = label + envs::Action(noise_std * noise_rng.normal(), noise_std * noise_rng.normal());
      auto out = envs::step(s, executed);
      s = out.state;
      if (out.result.done) {
        t.success = out.result.success;
        break;
      }
    }
    t.final_observation = envs::observe(s);
    if (t.success) d.trajectories.push_back(std::move(t));
  }
  return d;
}

} // namespace safari::active
