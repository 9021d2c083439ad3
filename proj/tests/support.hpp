#pragma once

// Shared fixtures for the unit tests. Expensive objects are built once per test binary.

#include "safari/active.hpp"
#include "safari/dataset.hpp"
#include "safari/envs.hpp"
#include "safari/models.hpp"

namespace testsupport {

using namespace safari;

inline const DemoDataset& reach_demos() {
  static const DemoDataset d = [] {
    numkit::Rng rng(11);
    return active::collect_passive(envs::EnvKind::point_reach, 40, rng);
  }();
  return d;
}

inline const models::TrainedModels& reach_models() {
  static const models::TrainedModels m = models::train_all(reach_demos(), models::ModelsConfig{}, 11);
  return m;
}

/// Weak PushBlock models: few demos, so rollouts fail often.
inline const DemoDataset& push_demos() {
  static const DemoDataset d = [] {
    numkit::Rng rng(23);
    return active::collect_passive(envs::EnvKind::push_block, 20, rng);
  }();
  return d;
}

inline const models::TrainedModels& push_models() {
  static const models::TrainedModels m = models::train_all(push_demos(), models::ModelsConfig{}, 23);
  return m;
}

/// Zero-output dynamics: every predicted delta is exactly zero.
inline models::DynamicsModel frozen_dynamics(const models::DynamicsModel& like) {
  models::DynamicsModel d = like;
  for (auto& w : d.params.weights) w.setZero();
  for (auto& b : d.params.biases) b.setZero();
  // A zero network output still denormalizes to the mean delta; pin that to zero too.
  d.norm.delta.mean.setZero();
  return d;
}

/// Autoencoder that reproduces its input exactly, so every energy is zero.
inline models::DaeModel identity_dae(int dim) {
  models::DaeModel d;
  d.params = numkit::zero_mlp(numkit::make_layers(dim, {dim}, dim, numkit::Activation::identity));
  d.params.weights[0].setIdentity();
  d.params.weights[1].setIdentity();
  d.norm.observation = {models::Vector::Zero(dim), models::Vector::Ones(dim)};
  d.norm.action = {models::Vector::Zero(2), models::Vector::Ones(2)};
  d.norm.delta = {models::Vector::Zero(dim), models::Vector::Ones(dim)};
  return d;
}

inline int policy_successes(envs::EnvKind kind, const models::PolicyModel& p, const std::vector<envs::TaskInstance>& xs) {
  int ok = 0;
  for (const auto& inst : xs) {
    envs::EnvState s = envs::reset(kind, inst).state;
    while (true) {
      const auto out = envs::step(s, envs::clamp_action(p.act(envs::observe(s))));
      s = out.state;
      if (out.result.done) {
        ok += out.result.success ? 1 : 0;
        break;
      }
    }
  }
  return ok;
}

} // namespace testsupport
