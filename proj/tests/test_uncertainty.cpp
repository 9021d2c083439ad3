#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "support.hpp"

using namespace safari;
using namespace safari::uncertainty;
using models::Vector;
using testsupport::push_demos;
using testsupport::push_models;

namespace {

std::vector<Vector> probe_states() {
  std::vector<Vector> out;
  numkit::Rng rng(61);
  for (const auto& inst : envs::sample_instances(rng, 10, envs::EnvKind::push_block))
    out.push_back(envs::observe(envs::reset(envs::EnvKind::push_block, inst).state));
  for (std::size_t i = 0; i < 10; ++i) out.push_back(push_demos().trajectories[i].steps.back().observation);
  return out;
}

} // namespace

TEST(UncRollout, OneStepEqualsEnergyExactly) {
  const auto& m = push_models();
  for (const auto& s : probe_states()) {
    const auto est = unc_rollout(s, m.policy, m.dynamics, m.dae, 1);
    ASSERT_EQ(est.value, models::dae_error(m.dae, s));
    ASSERT_EQ(est.steps_used, 1);
  }
}

TEST(UncRollout, FrozenImaginationEqualsEnergyForAnySteps) {
  const auto& m = push_models();
  const auto frozen = testsupport::frozen_dynamics(m.dynamics);
  for (const auto& s : probe_states()) {
    for (int k : {2, 5, 10, 17}) {
      const auto est = unc_rollout(s, m.policy, frozen, m.dae, k);
      ASSERT_EQ(est.value, models::dae_error(m.dae, s)) << "steps " << k;
    }
  }
}

TEST(UncRollout, MatchesManualChaining) {
  const auto& m = push_models();
  for (const auto& s0 : probe_states()) {
    Vector s = s0;
    double total = 0.0;
    for (int i = 0; i < 5; ++i) {
      total += models::dae_error(m.dae, s);
      s = models::predict_next(m.dynamics, s, m.policy.act(s));
    }
    const auto est = unc_rollout(s0, m.policy, m.dynamics, m.dae, 5);
    ASSERT_NEAR(est.value, total / 5.0, 1e-12 * (1.0 + total));
    ASSERT_EQ(est.per_step_errors.size(), 5u);
  }
}

TEST(UncRollout, AverageLiesBetweenStepExtremes) {
  const auto& m = push_models();
  for (const auto& s : probe_states()) {
    const auto est = unc_rollout(s, m.policy, m.dynamics, m.dae, 10);
    const auto [lo, hi] = std::minmax_element(est.per_step_errors.begin(), est.per_step_errors.end());
    ASSERT_LE(*lo, est.value * (1 + 1e-12));
    ASSERT_GE(*hi, est.value * (1 - 1e-12));
  }
}

TEST(UncRollout, RejectsBadArguments) {
  const auto& m = push_models();
  const Vector s = probe_states().front();
  EXPECT_THROW(unc_rollout(s, m.policy, m.dynamics, m.dae, 0), ConfigError);
  EXPECT_THROW(unc_rollout(Vector::Zero(4), m.policy, m.dynamics, m.dae, 3), ShapeError);
}

TEST(UncRollout, NonFiniteStateSaturates) {
  const auto& m = push_models();
  Vector s = probe_states().front();
  s(0) = std::numeric_limits<double>::quiet_NaN();
  const auto est = unc_rollout(s, m.policy, m.dynamics, m.dae, 10);
  EXPECT_TRUE(est.diverged);
  EXPECT_TRUE(std::isinf(est.value));
  EXPECT_GT(est.value, 0.0);
}

TEST(UncRollout, DeterministicAcrossCalls) {
  const auto& m = push_models();
  const Vector s = probe_states()[3];
  EXPECT_EQ(unc_rollout(s, m.policy, m.dynamics, m.dae, 10).value, unc_rollout(s, m.policy, m.dynamics, m.dae, 10).value);
}

TEST(Threshold, IdentityAutoencoderGivesZeroThreshold) {
  const auto dae = testsupport::identity_dae(6);
  const auto thr = calibrate_threshold(dae, push_demos(), 1.5);
  EXPECT_EQ(thr.err_train, 0.0);
  EXPECT_EQ(thr.threshold, 0.0);
}

TEST(Threshold, TwoStateHandArithmetic) {
  // One-dimensional observations are not an environment shape, so build the autoencoder on
  // PointReach width and place the two states so that their energies are 2 and 4.
  auto dae = testsupport::identity_dae(4);
  dae.params.weights[1].setZero(); // output is the bias, zero: energy is the squared norm
  DemoDataset d;
  d.kind = envs::EnvKind::point_reach;
  Trajectory t;
  Vector a(4), b(4);
  a << std::sqrt(2.0), 0, 0, 0;
  b << 2.0, 0, 0, 0;
  t.steps = {{a, envs::Action::Zero()}, {b, envs::Action::Zero()}};
  t.final_observation = b;
  d.trajectories.push_back(t);
  EXPECT_NEAR(models::dae_error(dae, a), 2.0, 1e-12);
  EXPECT_NEAR(models::dae_error(dae, b), 4.0, 1e-12);
  const auto thr = calibrate_threshold(dae, d, 1.5);
  EXPECT_NEAR(thr.err_train, 3.0, 1e-12);
  EXPECT_NEAR(thr.threshold, 4.5, 1e-12);
}

TEST(Threshold, LinearInMultiplier) {
  const auto& m = push_models();
  const auto a = calibrate_threshold(m.dae, push_demos(), 1.5);
  const auto b = calibrate_threshold(m.dae, push_demos(), 3.0);
  EXPECT_EQ(b.threshold, 2.0 * a.threshold);
  EXPECT_GT(a.threshold, a.err_train);
}

TEST(Threshold, MeanOfSingleStateEnergies) {
  const auto& m = push_models();
  const auto t = models::flatten(push_demos());
  const auto thr = calibrate_threshold(m.dae, push_demos(), 1.5);
  EXPECT_NEAR(thr.err_train, m.dae.error_batch(t.observations).mean(), 1e-12);
}

TEST(Threshold, RejectsBadInputs) {
  const auto& m = push_models();
  EXPECT_THROW(calibrate_threshold(m.dae, push_demos(), 1.0), ConfigError);
  EXPECT_THROW(calibrate_threshold(m.dae, DemoDataset{}, 1.5), ConfigError);
  EXPECT_THROW(CalibratedThreshold::make(0.2, 0.9), ConfigError);
  EXPECT_FALSE(CalibratedThreshold::disabled().exceeded_by(1e300));
}
