// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.
// Usage: acceptance [--out DIR] [--only 1,2,7]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "safari/harness.hpp"
#include "safari/numkit/gradcheck.hpp"

namespace fs = std::filesystem;
using namespace safari;
using namespace safari::harness;
using models::Vector;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string f3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

fs::path g_out = "acceptance_out";

// Shared runs, built on first use.
std::optional<ExperimentReport> g_al, g_pl;
double g_al_seconds = 0.0, g_pl_seconds = 0.0;

ExperimentConfig criterion7_config(Method m) {
  ExperimentConfig c;
  c.env = envs::EnvKind::push_block;
  c.method = m;
  c.active.n_total = 40;
  c.active.active_ratio = 0.5;
  c.active.retrain_every = 5;
  c.active.u_thr_mult = 1.5;
  c.test_set_size = 50;
  c.n_seeds = 10;
  c.master_seed = 7;
  return c;
}

const ExperimentReport& al_report() {
  if (!g_al) {
    const auto t0 = Clock::now();
    auto c = criterion7_config(Method::al);
    c.output_path = (g_out / "c7_al").string();
    g_al = run_experiment(c);
    g_al_seconds = seconds_since(t0);
  }
  return *g_al;
}

const ExperimentReport& pl_report() {
  if (!g_pl) {
    const auto t0 = Clock::now();
    auto c = criterion7_config(Method::pl);
    c.output_path = (g_out / "c7_pl").string();
    g_pl = run_experiment(c);
    g_pl_seconds = seconds_since(t0);
  }
  return *g_pl;
}

std::optional<std::vector<FailureSeedResult>> g_failure;

const std::vector<FailureSeedResult>& failure_results() {
  if (!g_failure) {
    FailureSweepConfig f;
    f.n_demos = 20;
    f.rollout_steps = {1, 5, 10};
    f.n_seeds = 5;
    f.test_set_size = 50;
    f.master_seed = 9;
    g_failure = sweep_imagination(f);
    write_text(g_out / "c9_failure.csv", failure_csv(*g_failure).str());
  }
  return *g_failure;
}

// ---- criteria ----

Verdict c1_gradcheck() {
  const auto t0 = Clock::now();
  numkit::Rng rng(101);
  double worst = 0.0;
  for (int t = 0; t < 20; ++t) {
    const int in = static_cast<int>(rng.uniform_int(1, 6));
    const int out = static_cast<int>(rng.uniform_int(1, 4));
    std::vector<int> hidden(static_cast<std::size_t>(rng.uniform_int(1, 3)));
    for (auto& h : hidden) h = static_cast<int>(rng.uniform_int(2, 32));
    const auto act = t % 2 ? numkit::Activation::relu : numkit::Activation::tanh;
    auto p = numkit::init_mlp(numkit::make_layers(in, hidden, out, act), rng);
    for (auto& b : p.biases)
      for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = 0.1 * rng.normal();
    const int n = static_cast<int>(rng.uniform_int(1, 16));
    numkit::Batch b{numkit::Matrix(n, in), numkit::Matrix(n, out)};
    for (Eigen::Index i = 0; i < b.inputs.size(); ++i) b.inputs.data()[i] = rng.normal();
    for (Eigen::Index i = 0; i < b.targets.size(); ++i) b.targets.data()[i] = rng.normal();
    worst = std::max(worst, numkit::gradcheck(p, b));
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-4 && secs < 10.0, "worst relative error " + fmt(worst) + ", " + f3(secs) + " s"};
}

Verdict c2_dynamics() {
  numkit::Rng rng(202);
  const auto train = active::collect_passive(envs::EnvKind::point_reach, 40, rng);
  const auto held = active::collect_passive(envs::EnvKind::point_reach, 20, rng);
  const auto t0 = Clock::now();
  auto cfg = models::ModelsConfig{}.dynamics;
  cfg.seed = 202;
  const auto dyn = models::train_dynamics(train, cfg);
  const double secs = seconds_since(t0);
  double se = 0.0;
  std::size_t n = 0;
  for (const auto& t : held.trajectories) {
    envs::EnvState s = envs::reset(envs::EnvKind::point_reach, t.instance).state;
    for (const auto& step : t.steps) {
      const auto next = envs::step(s, step.action).state;
      const Vector pred = dyn.predict_next(envs::observe(s), step.action);
      se += (pred - envs::observe(next)).squaredNorm() / static_cast<double>(pred.size());
      ++n;
      s = next;
    }
  }
  const double mse = se / static_cast<double>(n);
  return {mse < 1e-4 && secs < 120.0, "held-out one-step MSE " + fmt(mse) + " over " + std::to_string(n) +
                                          " transitions, training " + f3(secs) + " s"};
}

models::TrainedModels push_models(std::uint64_t seed, int n_demos, DemoDataset* out = nullptr) {
  numkit::Rng rng = numkit::Rng(seed).derive("demos");
  auto d = active::collect_passive(envs::EnvKind::push_block, n_demos, rng);
  auto m = models::train_all(d, models::ModelsConfig{}, seed);
  if (out) *out = std::move(d);
  return m;
}

Verdict c3_rollout_identity() {
  const auto m = push_models(303, 20);
  auto frozen = m.dynamics;
  for (auto& w : frozen.params.weights) w.setZero();
  for (auto& b : frozen.params.biases) b.setZero();
  frozen.norm.delta.mean.setZero();
  const auto tests = test_instances(envs::EnvKind::push_block, 303, 50);
  int checked = 0, mismatches = 0;
  for (const auto& inst : tests) {
    envs::EnvState s = envs::reset(envs::EnvKind::push_block, inst).state;
    for (int t = 0; t < 5; ++t) {
      const Vector obs = envs::observe(s);
      const double e = m.dae.error(obs);
      mismatches += uncertainty::unc_rollout(obs, m.policy, m.dynamics, m.dae, 1).value == e ? 0 : 1;
      for (int k : {2, 5, 10})
        mismatches += uncertainty::unc_rollout(obs, m.policy, frozen, m.dae, k).value == e ? 0 : 1;
      ++checked;
      s = envs::step(s, envs::clamp_action(m.policy.act(obs))).state;
    }
  }
  return {mismatches == 0, std::to_string(checked) + " states x 4 rollout lengths, " + std::to_string(mismatches) +
                               " mismatches"};
}

Verdict c4_ood() {
  int passed = 0;
  std::string ratios;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    DemoDataset demos;
    const auto m = push_models(400 + seed, 40, &demos);
    numkit::Rng held_rng = numkit::Rng(400 + seed).derive("held-out");
    const auto held = models::flatten(active::collect_passive(envs::EnvKind::push_block, 20, held_rng));
    double in_sum = 0.0, off_sum = 0.0;
    int in_n = 0, off_n = 0;
    for (Eigen::Index r = 0; r < held.observations.rows(); ++r) {
      const Vector s = held.observations.row(r).transpose();
      in_sum += m.dae.error(s);
      ++in_n;
      const envs::Vec2 agent = s.head<2>(), block = s.segment<2>(2), goal = s.tail<2>();
      const envs::Vec2 u = (goal - block).normalized();
      const envs::Vec2 side(-u.y(), u.x());
      for (double sign : {1.0, -1.0}) {
        const envs::Vec2 moved = agent + sign * 0.3 * side;
        if (!envs::in_arena(moved)) continue;
        Vector off = s;
        off.head<2>() = moved;
        off_sum += m.dae.error(off);
        ++off_n;
        break;
      }
    }
    const double ratio = (off_sum / off_n) / (in_sum / in_n);
    passed += ratio > 2.0 ? 1 : 0;
    ratios += (ratios.empty() ? "" : " ") + f3(ratio);
  }
  return {passed == 5, "off/in energy ratio per seed: " + ratios + " (" + std::to_string(passed) + "/5 above 2)"};
}

Verdict c5_planner() {
  const auto t0 = Clock::now();
  const auto m = push_models(505, 20);
  const auto tests = test_instances(envs::EnvKind::push_block, 505, 10);
  bool argmin = true;
  double worst_gap = 0.0;
  for (std::size_t i = 0; i < tests.size(); ++i) {
    const Vector s0 = envs::observe(envs::reset(envs::EnvKind::push_block, tests[i]).state);
    control::PlannerConfig p;
    p.seed = i;
    const auto plan = control::plan_min_uncertainty(s0, m, p);
    for (double o : plan.candidate_objectives) argmin = argmin && plan.terminal_uncertainty <= o;

    control::PlannerConfig one;
    one.horizon = 1;
    one.n_candidates = 2000;
    one.action_sample_std = 0.1;
    one.seed = 1000 + i;
    const auto h1 = control::plan_min_uncertainty(s0, m, one);
    for (double o : h1.candidate_objectives) argmin = argmin && h1.terminal_uncertainty <= o;
    double grid = std::numeric_limits<double>::infinity();
    const int g = 101;
    for (int a = 0; a < g; ++a)
      for (int b = 0; b < g; ++b) {
        const envs::Action act(-envs::kMaxAction + 2 * envs::kMaxAction * a / (g - 1),
                               -envs::kMaxAction + 2 * envs::kMaxAction * b / (g - 1));
        grid = std::min(grid, m.dae.error(m.dynamics.predict_next(s0, act)));
      }
    worst_gap = std::max(worst_gap, (h1.terminal_uncertainty - grid) / grid);
  }
  const double secs = seconds_since(t0);
  return {argmin && worst_gap <= 0.05 && secs < 60.0,
          std::string("argmin ") + (argmin ? "exact" : "VIOLATED") + ", worst gap to 101x101 grid " +
              f3(100.0 * worst_gap) + "%, " + f3(secs) + " s"};
}

Verdict c6_beta_zero() {
  const auto m = push_models(606, 20);
  control::ControllerConfig cfg;
  cfg.beta = 0.0;
  int identical = 0;
  const auto tests = test_instances(envs::EnvKind::push_block, 606, 50);
  for (const auto& inst : tests)
    identical += control::run_episode(envs::EnvKind::push_block, inst, control::ControllerKind::bc_only, &m, cfg) ==
                         control::run_episode(envs::EnvKind::push_block, inst, control::ControllerKind::hybrid, &m, cfg)
                     ? 1
                     : 0;
  return {identical == 50, std::to_string(identical) + "/50 episodes bit-identical"};
}

std::string seed_counts(const ExperimentReport& r) {
  std::string s;
  for (const auto& x : r.seeds) s += (s.empty() ? "" : " ") + (x.ok ? std::to_string(x.successes) : std::string("x"));
  return s;
}

Verdict c7_al_vs_pl() {
  const auto& al = al_report();
  const auto& pl = pl_report();
  const auto t = compare(al, pl);
  write_text(g_out / "c7_compare.csv", comparison_csv(t).str());
  const double frac = t.win_fraction_a();
  const double secs = g_al_seconds + g_pl_seconds;
  return {!std::isnan(frac) && frac >= 0.7 && secs < 1800.0,
          "AL wins " + std::to_string(t.wins_a) + ", PL wins " + std::to_string(t.wins_b) + ", ties " +
              std::to_string(t.ties) + " (AL share " + fmt(frac) + "); AL [" + seed_counts(al) + "] PL [" +
              seed_counts(pl) + "]; " + f3(secs) + " s"};
}

Verdict c8_hybrid_vs_bc() {
  const auto& bc = pl_report();
  const auto t0 = Clock::now();
  auto c = criterion7_config(Method::pl);
  c.controller = control::ControllerKind::hybrid;
  c.control.beta = 0.2;
  c.output_path = (g_out / "c8_hybrid").string();
  const auto hy = run_experiment(c);
  const double secs = seconds_since(t0) + g_pl_seconds;
  int lower_energy = 0;
  for (std::size_t i = 0; i < hy.seeds.size(); ++i)
    lower_energy += hy.seeds[i].ok && bc.seeds[i].ok && hy.seeds[i].mean_energy < bc.seeds[i].mean_energy ? 1 : 0;
  const bool pass = hy.mean_successes() >= bc.mean_successes() && lower_energy >= 7 && secs < 1800.0;
  return {pass, "mean successes hybrid " + f3(hy.mean_successes()) + " vs BC " + f3(bc.mean_successes()) +
                    "; hybrid energy lower in " + std::to_string(lower_energy) + "/10 seeds; hybrid [" +
                    seed_counts(hy) + "] BC [" + seed_counts(bc) + "]; " + f3(secs) + " s"};
}

Verdict c9_failure_prediction() {
  const auto& res = failure_results();
  int good = 0;
  double f1_default = 0.0;
  std::string per_seed;
  for (const auto& s : res) {
    const auto& k1 = s.monitor[0];
    const auto& k10 = s.monitor[2];
    double lo = 1.0, hi = 0.0;
    for (const auto& r : s.monitor) {
      lo = std::min(lo, r.f1);
      hi = std::max(hi, r.f1);
    }
    const bool spread_ok = hi - lo <= 0.05;
    const bool earlier = !std::isnan(k1.mean_steps_to_predict) && !std::isnan(k10.mean_steps_to_predict) &&
                         k10.mean_steps_to_predict <= 0.7 * k1.mean_steps_to_predict;
    good += spread_ok && earlier ? 1 : 0;
    f1_default += k10.f1;
    per_seed += (per_seed.empty() ? "" : "; ") + std::string("F1 ") + f3(k1.f1) + "/" + f3(s.monitor[1].f1) + "/" +
                f3(k10.f1) + " steps " + f3(k1.mean_steps_to_predict) + "->" + f3(k10.mean_steps_to_predict);
  }
  f1_default /= static_cast<double>(res.size());
  return {good >= 3 && f1_default >= 0.7, std::to_string(good) + "/5 seeds meet spread<=0.05 and steps ratio<=0.7; mean F1 at 10 steps " +
                                              f3(f1_default) + " [" + per_seed + "]"};
}

Verdict c10_supervised_parity() {
  const auto& res = failure_results();
  int within = 0;
  std::string per_seed;
  for (const auto& s : res) {
    const double mon = s.monitor[2].f1;
    const std::optional<double> sup = s.supervised ? std::optional<double>(s.supervised->f1) : std::nullopt;
    within += sup && std::abs(mon - *sup) <= 0.1 ? 1 : 0;
    per_seed += (per_seed.empty() ? "" : " ") + f3(mon) + "/" + (sup ? f3(*sup) : std::string("n/a"));
  }
  return {within == 5, std::to_string(within) + "/5 seeds within 0.1 (monitor/supervised F1: " + per_seed + ")"};
}

Verdict c11_uthr() {
  const auto& pl = pl_report();
  const auto& al15 = al_report();
  std::map<double, int> totals{{1.5, al15.total_successes()}};
  for (double mult : {1.1, 2.0, 3.0}) {
    auto c = criterion7_config(Method::al);
    c.active.u_thr_mult = mult;
    c.output_path = (g_out / ("c11_al_" + fmt(mult))).string();
    totals[mult] = run_experiment(c).total_successes();
  }
  CsvTable t({"method", "u_thr_mult", "total_successes"});
  t.add({"PL", "", fmt(pl.total_successes())});
  bool all = true;
  std::string cells;
  for (const auto& [mult, total] : totals) {
    t.add({"AL", fmt(mult), fmt(total)});
    all = all && total > pl.total_successes();
    cells += (cells.empty() ? "" : " ") + fmt(mult) + ":" + std::to_string(total);
  }
  write_text(g_out / "c11_uthr.csv", t.str());
  return {all, "PL total " + std::to_string(pl.total_successes()) + "; AL totals " + cells};
}

Verdict c12_reproducibility() {
  const std::string al_first = read_text(g_out / "c7_al" / "metrics.csv");
  const std::string pl_first = read_text(g_out / "c7_pl" / "metrics.csv");
  auto al = criterion7_config(Method::al);
  al.output_path = (g_out / "c12_al").string();
  auto pl = criterion7_config(Method::pl);
  pl.output_path = (g_out / "c12_pl").string();
  run_experiment(al);
  run_experiment(pl);
  const bool same_al = read_text(g_out / "c12_al" / "metrics.csv") == al_first;
  const bool same_pl = read_text(g_out / "c12_pl" / "metrics.csv") == pl_first;
  return {same_al && same_pl, std::string("AL metrics ") + (same_al ? "identical" : "DIFFER") + ", PL metrics " +
                                  (same_pl ? "identical" : "DIFFER")};
}

} // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--out" && i + 1 < argc) {
      g_out = argv[++i];
    } else if (a == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      std::string item;
      while (std::getline(ss, item, ',')) only.insert(std::stoi(item));
    } else {
      std::cerr << "usage: acceptance [--out DIR] [--only 1,2,...]\n";
      return 2;
    }
  }
  fs::create_directories(g_out);

  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"gradient correctness", c1_gradcheck},
      {"dynamics fidelity", c2_dynamics},
      {"imagination rollout identity", c3_rollout_identity},
      {"out-of-distribution separation", c4_ood},
      {"planner argmin soundness", c5_planner},
      {"beta=0 reduces to behavior cloning", c6_beta_zero},
      {"active vs passive learning", c7_al_vs_pl},
      {"hybrid vs behavior cloning", c8_hybrid_vs_bc},
      {"failure prediction", c9_failure_prediction},
      {"supervised baseline parity", c10_supervised_parity},
      {"threshold robustness", c11_uthr},
      {"reproducibility", c12_reproducibility},
  };

  CsvTable summary({"criterion", "name", "result", "seconds"});
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    const auto t0 = Clock::now();
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    const double secs = seconds_since(t0);
    failed += v.pass ? 0 : 1;
    std::cout << (v.pass ? "[PASS] " : "[FAIL] ") << id << ". " << criteria[i].first << ": " << v.detail << std::endl;
    summary.add({fmt(id), criteria[i].first, v.pass ? "PASS" : "FAIL", f3(secs)});
  }
  write_text(g_out / "summary.csv", summary.str());
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << std::endl;
  return failed == 0 ? 0 : 1;
}
