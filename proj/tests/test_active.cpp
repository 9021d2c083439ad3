#include <gtest/gtest.h>

#include <cmath>

#include "safari/active.hpp"
#include "support.hpp"

using namespace safari;
using namespace safari::active;
using models::Vector;

namespace {

models::ModelsConfig small_models() {
  models::ModelsConfig m;
  m.policy = {60, 64, 2e-3, {32, 32}};
  m.dynamics = {30, 64, 1e-3, {32, 32}};
  m.dae = {30, 64, 1e-3, {8, 8}};
  return m;
}

ActiveLearningConfig small_config(std::uint64_t seed) {
  ActiveLearningConfig c;
  c.n_total = 40;
  c.active_ratio = 0.5;
  c.retrain_every = 5;
  c.seed = seed;
  c.models = small_models();
  return c;
}

const CollectionResult& al_run() {
  static const CollectionResult r = run_active_learning(envs::EnvKind::push_block, small_config(4));
  return r;
}

int count(const DemoDataset& d, Provenance p) {
  int n = 0;
  for (const auto& t : d.trajectories) n += t.provenance == p ? 1 : 0;
  return n;
}

} // namespace

TEST(Passive, CollectsSuccessfulExpertDemos) {
  numkit::Rng rng(3);
  const auto d = collect_passive(envs::EnvKind::push_block, 12, rng);
  ASSERT_EQ(d.size(), 12u);
  for (const auto& t : d.trajectories) {
    EXPECT_TRUE(t.success);
    EXPECT_EQ(t.provenance, Provenance::passive);
    EXPECT_FALSE(t.steps.empty());
    EXPECT_EQ(t.steps.front().observation, envs::observe(envs::reset(envs::EnvKind::push_block, t.instance).state));
  }
  numkit::Rng again(3);
  const auto e = collect_passive(envs::EnvKind::push_block, 12, again);
  EXPECT_EQ(e.trajectories.front().instance, d.trajectories.front().instance);
  EXPECT_THROW(collect_passive(envs::EnvKind::push_block, 0, rng), ConfigError);
}

TEST(ActiveConfig, Bookkeeping) {
  const auto c = small_config(0);
  EXPECT_EQ(c.active_count(), 20);
  EXPECT_EQ(c.passive_count(), 20);
  EXPECT_EQ(c.rounds(), 4);
  auto bad = c;
  bad.retrain_every = 3;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = c;
  bad.active_ratio = 0.33;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = c;
  bad.u_thr_mult = 1.0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = c;
  bad.active_ratio = 1.0;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(ActiveLearning, BudgetIsExact) {
  const auto& r = al_run();
  EXPECT_EQ(r.dataset.size(), 40u);
  EXPECT_EQ(count(r.dataset, Provenance::passive), 20 + r.log.fallback_demos);
  EXPECT_EQ(count(r.dataset, Provenance::active), 20 - r.log.fallback_demos);
  EXPECT_EQ(static_cast<int>(r.log.records.size()), 20 - r.log.fallback_demos);
  // One threshold per round plus the final one.
  EXPECT_EQ(r.log.thresholds.size(), 5u);
  for (const auto& t : r.dataset.trajectories) EXPECT_TRUE(t.success);
}

TEST(ActiveLearning, TriggersAreSound) {
  const auto& r = al_run();
  for (const auto& rec : r.log.records) {
    const auto& demo = r.dataset.trajectories[static_cast<std::size_t>(rec.demo_index)];
    ASSERT_EQ(demo.provenance, Provenance::active);
    ASSERT_GT(rec.uncertainty, rec.threshold);
    ASSERT_EQ(rec.threshold, r.log.thresholds[static_cast<std::size_t>(rec.round)]);
    ASSERT_EQ(rec.demo_length, static_cast<int>(demo.steps.size()));
    ASSERT_GE(rec.trigger_step, 0);
  }
  EXPECT_EQ(r.log.attempts, static_cast<int>(r.log.records.size()) + r.log.attempts_without_trigger +
                                r.log.discarded_completions);
}

TEST(ActiveLearning, DemoStartsWhereThePolicyStopped) {
  const auto& r = al_run();
  ASSERT_FALSE(r.log.records.empty());
  const auto& rec = r.log.records.front();
  const auto& demo = r.dataset.trajectories[static_cast<std::size_t>(rec.demo_index)];
  // Round 0 runs the models trained on the passive half alone.
  auto cfg = small_config(4);
  numkit::Rng demo_rng = numkit::Rng(cfg.seed).derive("demos");
  const auto warm = collect_passive(envs::EnvKind::push_block, cfg.passive_count(), demo_rng);
  const auto m = models::train_all(warm, cfg.models, numkit::Rng::derive_seed(cfg.seed, "train", 0));
  const auto replay = demo_after_policy_steps(envs::EnvKind::push_block, demo.instance, m.policy, rec.trigger_step,
                                              Provenance::active);
  EXPECT_EQ(replay.steps.front().observation, demo.steps.front().observation);
}

TEST(ActiveLearning, DeterministicForSeed) {
  auto cfg = small_config(4);
  const auto again = run_active_learning(envs::EnvKind::push_block, cfg);
  const auto& first = al_run();
  ASSERT_EQ(again.dataset.size(), first.dataset.size());
  for (std::size_t i = 0; i < again.dataset.size(); ++i) {
    ASSERT_EQ(again.dataset.trajectories[i].instance, first.dataset.trajectories[i].instance);
    ASSERT_EQ(again.dataset.trajectories[i].steps.size(), first.dataset.trajectories[i].steps.size());
  }
  EXPECT_EQ(again.log.thresholds, first.log.thresholds);
}

TEST(RandOnPolicy, StopsInsideTheEpisode) {
  auto cfg = small_config(6);
  cfg.n_total = 20;
  const auto r = collect_rand_on_policy(envs::EnvKind::push_block, cfg);
  EXPECT_EQ(r.dataset.size(), 20u);
  EXPECT_EQ(count(r.dataset, Provenance::rand_on_policy) + count(r.dataset, Provenance::passive), 20);
  for (const auto& rec : r.log.records) {
    EXPECT_GE(rec.trigger_step, 1);
    EXPECT_LE(rec.trigger_step, cfg.max_steps);
  }
}

TEST(Dart, ZeroNoiseEqualsPassive) {
  numkit::Rng a(9), b(9);
  const auto dart = collect_dart(envs::EnvKind::push_block, 8, 0.0, a);
  const auto pass = collect_passive(envs::EnvKind::push_block, 8, b);
  ASSERT_EQ(dart.size(), pass.size());
  for (std::size_t i = 0; i < dart.size(); ++i) {
    const auto& x = dart.trajectories[i];
    const auto& y = pass.trajectories[i];
    ASSERT_EQ(x.instance, y.instance);
    ASSERT_EQ(x.steps.size(), y.steps.size());
    for (std::size_t k = 0; k < x.steps.size(); ++k) {
      ASSERT_EQ(x.steps[k].observation, y.steps[k].observation);
      ASSERT_EQ(x.steps[k].action, y.steps[k].action);
    }
  }
}

TEST(Dart, NoiseWidensVisitedStates) {
  auto spread = [](const DemoDataset& d) {
    // Mean distance from the agent to the block along each demo.
    double total = 0.0;
    int n = 0;
    for (const auto& t : d.trajectories)
      for (const auto& s : t.steps) {
        total += (s.observation.head<2>() - s.observation.segment<2>(2)).norm();
        ++n;
      }
    return total / n;
  };
  numkit::Rng a(12), b(12);
  const auto clean = collect_dart(envs::EnvKind::push_block, 20, 0.0, a);
  const auto noisy = collect_dart(envs::EnvKind::push_block, 20, 0.02, b);
  EXPECT_NE(spread(clean), spread(noisy));
  for (const auto& t : noisy.trajectories) {
    EXPECT_TRUE(t.success);
    EXPECT_EQ(t.provenance, Provenance::dart);
    // Labels are clean expert actions at the visited states.
    envs::EnvState s = envs::reset(envs::EnvKind::push_block, t.instance).state;
    EXPECT_EQ(t.steps.front().action, envs::expert_action(s));
  }
  numkit::Rng c(1);
  EXPECT_THROW(collect_dart(envs::EnvKind::push_block, 5, -0.1, c), ConfigError);
}
