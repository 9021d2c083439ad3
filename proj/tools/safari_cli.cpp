// Command-line front end for collection, training, evaluation and the experiment sweeps.
// Outputs go under $SAFARI_OUTPUT_ROOT (default ./safari_out) unless a path is absolute.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "safari/harness.hpp"
#include "safari/numkit/gradcheck.hpp"

namespace fs = std::filesystem;
using namespace safari;
using namespace safari::harness;

namespace {

fs::path output_root() {
  const char* env = std::getenv("SAFARI_OUTPUT_ROOT");
  return env && *env ? fs::path(env) : fs::path("safari_out");
}

fs::path resolve(const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : output_root() / path;
}

json load_json(const std::string& p) {
  // Inputs are looked up as given first, then under the output root.
  const fs::path direct(p);
  return json::parse(read_text(fs::exists(direct) ? direct : resolve(p)));
}

/// Flags shared by every subcommand that builds an ExperimentConfig.
struct ConfigFlags {
  std::string config_path;
  std::string env, method, controller, optimizer;
  int n_total = -1, mu = -1, seeds = -1, tests = -1, horizon = -1, candidates = -1, monitor_steps = -1;
  double gamma = -1, u_thr_mult = -1, beta = -1, dart_noise = -1;
  long long master_seed = -1;
  bool monitor = false;

  void add_to(CLI::App* app) {
    app->add_option("--config", config_path, "experiment config (JSON)");
    app->add_option("--env", env, "point_reach or push_block");
    app->add_option("--method", method, "PL, AL, rand_on_policy or DART");
    app->add_option("--controller", controller, "bc_only or hybrid");
    app->add_option("--n-total", n_total, "demonstration budget N");
    app->add_option("--gamma", gamma, "active ratio");
    app->add_option("--mu", mu, "demos per retraining round");
    app->add_option("--u-thr-mult", u_thr_mult, "threshold multiplier");
    app->add_option("--dart-noise", dart_noise, "DART action noise std");
    app->add_option("--beta", beta, "planner weight in the hybrid action");
    app->add_option("--horizon", horizon, "planner horizon");
    app->add_option("--candidates", candidates, "planner candidates");
    app->add_option("--optimizer", optimizer, "random_shooting or cem");
    app->add_flag("--monitor", monitor, "score the failure monitor on the test set");
    app->add_option("--monitor-steps", monitor_steps, "monitor imagination steps");
    app->add_option("--seeds", seeds, "number of seeds");
    app->add_option("--tests", tests, "test set size M");
    app->add_option("--master-seed", master_seed, "master seed");
  }

  /// File fields first, then flags on top.
  [[nodiscard]] ExperimentConfig build() const {
    ExperimentConfig c = config_path.empty() ? ExperimentConfig{} : config_from_json(load_json(config_path));
    if (!env.empty()) c.env = envs::env_kind_from_string(env);
    if (!method.empty()) c.method = method_from_string(method);
    if (!controller.empty()) c.controller = control::controller_from_string(controller);
    if (!optimizer.empty()) c.control.planner.optimizer = control::optimizer_from_string(optimizer);
    if (n_total >= 0) c.active.n_total = n_total;
    if (gamma >= 0) c.active.active_ratio = gamma;
    if (mu >= 0) c.active.retrain_every = mu;
    if (u_thr_mult >= 0) c.active.u_thr_mult = u_thr_mult;
    if (dart_noise >= 0) c.dart_noise = dart_noise;
    if (beta >= 0) c.control.beta = beta;
    if (horizon >= 0) c.control.planner.horizon = horizon;
    if (candidates >= 0) c.control.planner.n_candidates = candidates;
    if (monitor) c.monitor_enabled = true;
    if (monitor_steps >= 0) c.monitor_rollout_steps = monitor_steps;
    if (seeds >= 0) c.n_seeds = seeds;
    if (tests >= 0) c.test_set_size = tests;
    if (master_seed >= 0) c.master_seed = static_cast<std::uint64_t>(master_seed);
    c.validate();
    return c;
  }
};

void print_summary(const ExperimentReport& rep) {
  std::cout << to_string(rep.config.method) << "/" << control::to_string(rep.config.controller)
            << " mean successes " << fmt(rep.mean_successes()) << " of " << rep.config.test_set_size << " over "
            << rep.seeds.size() << " seeds\n";
  for (const auto& s : rep.seeds)
    if (!s.ok) std::cout << "  seed " << s.seed_index << " failed: " << s.diagnostic << "\n";
}

int cmd_gradcheck(int trials, std::uint64_t seed, double tol) {
  numkit::Rng rng(seed);
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    const int in = static_cast<int>(rng.uniform_int(1, 6));
    const int out = static_cast<int>(rng.uniform_int(1, 4));
    std::vector<int> hidden(static_cast<std::size_t>(rng.uniform_int(1, 3)));
    for (auto& h : hidden) h = static_cast<int>(rng.uniform_int(2, 12));
    const auto act = rng.uniform(0, 1) < 0.5 ? numkit::Activation::tanh : numkit::Activation::relu;
    auto params = numkit::init_mlp(numkit::make_layers(in, hidden, out, act), rng);
    // Zero biases behind a dead ReLU unit put pre-activations exactly on the kink, where no derivative exists.
    for (auto& bias : params.biases)
      for (Eigen::Index i = 0; i < bias.size(); ++i) bias(i) = 0.1 * rng.normal();
    const int n = static_cast<int>(rng.uniform_int(1, 16));
    numkit::Batch b{numkit::Matrix(n, in), numkit::Matrix(n, out)};
    for (Eigen::Index i = 0; i < b.inputs.size(); ++i) b.inputs.data()[i] = rng.normal();
    for (Eigen::Index i = 0; i < b.targets.size(); ++i) b.targets.data()[i] = rng.normal();
    const double e = numkit::gradcheck(params, b);
    worst = std::max(worst, e);
    std::cout << "trial " << t << " error " << fmt(e) << "\n";
  }
  std::cout << "worst " << fmt(worst) << (worst < tol ? " PASS" : " FAIL") << "\n";
  return worst < tol ? 0 : 1;
}

/// Quick property checks; nonzero exit if any fails.
int cmd_self_test() {
  int failed = 0;
  auto check = [&failed](const std::string& name, bool ok) {
    std::cout << (ok ? "PASS " : "FAIL ") << name << "\n";
    failed += ok ? 0 : 1;
  };
  check("gradcheck", cmd_gradcheck(5, 1, 1e-4) == 0);

  numkit::Rng rng(3);
  const auto demos = active::collect_passive(envs::EnvKind::push_block, 8, rng);
  models::ModelsConfig mc;
  mc.policy = {40, 64, 2e-3, {32, 32}};
  mc.dynamics = {20, 64, 1e-3, {32, 32}};
  mc.dae = {20, 64, 1e-3, {8, 8}};
  const auto m = models::train_all(demos, mc, 3);
  const auto tests = test_instances(envs::EnvKind::push_block, 3, 5);

  bool identity = true;
  for (const auto& inst : tests) {
    const auto s = envs::observe(envs::reset(envs::EnvKind::push_block, inst).state);
    identity = identity && uncertainty::unc_rollout(s, m.policy, m.dynamics, m.dae, 1).value == m.dae.error(s);
  }
  check("one-step rollout equals energy", identity);

  control::ControllerConfig zero;
  zero.beta = 0.0;
  bool same = true;
  for (const auto& inst : tests)
    same = same && control::run_episode(envs::EnvKind::push_block, inst, control::ControllerKind::bc_only, &m, zero) ==
                       control::run_episode(envs::EnvKind::push_block, inst, control::ControllerKind::hybrid, &m, zero);
  check("beta 0 hybrid equals BC", same);

  const auto s0 = envs::observe(envs::reset(envs::EnvKind::push_block, tests[0]).state);
  const auto plan = control::plan_min_uncertainty(s0, m, control::PlannerConfig{});
  bool argmin = true;
  for (double o : plan.candidate_objectives) argmin = argmin && plan.terminal_uncertainty <= o;
  check("planner returns argmin", argmin);

  ExperimentConfig tiny;
  tiny.active.n_total = 4;
  tiny.active.retrain_every = 2;
  tiny.active.models = mc;
  tiny.test_set_size = 3;
  tiny.n_seeds = 1;
  check("experiment rerun identical",
        metrics_csv(run_experiment(tiny)).str() == metrics_csv(run_experiment(tiny)).str());
  return failed == 0 ? 0 : 1;
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(std::stod(item));
  return out;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"safari: uncertainty-aware imitation learning experiments"};
  app.require_subcommand(1);

  // collect
  auto* collect = app.add_subcommand("collect", "collect demonstrations with one method");
  ConfigFlags collect_flags;
  collect_flags.add_to(collect);
  long long collect_seed = 0;
  std::string collect_out = "dataset.json";
  collect->add_option("--seed", collect_seed, "collection seed");
  collect->add_option("--out", collect_out, "dataset file");

  // train
  auto* train = app.add_subcommand("train", "train policy, dynamics and autoencoder on a dataset");
  std::string train_data, train_out = "models.json";
  long long train_seed = 0;
  ConfigFlags train_flags;
  train->add_option("--data", train_data, "dataset file")->required();
  train->add_option("--out", train_out, "checkpoint file");
  train->add_option("--seed", train_seed, "training seed");
  train->add_option("--config", train_flags.config_path, "experiment config (model settings)");

  // eval
  auto* eval = app.add_subcommand("eval", "run a controller from a checkpoint on sampled test instances");
  std::string eval_models, eval_data, eval_controller = "bc_only", eval_out = "eval.json";
  int eval_tests = 50, eval_monitor_steps = -1;
  long long eval_seed = 0;
  double eval_beta = 0.2, eval_mult = 1.5;
  eval->add_option("--models", eval_models, "checkpoint file")->required();
  eval->add_option("--data", eval_data, "training dataset, needed to calibrate the monitor threshold");
  eval->add_option("--controller", eval_controller, "bc_only, hybrid or expert");
  eval->add_option("--beta", eval_beta, "planner weight");
  eval->add_option("--tests", eval_tests, "number of test instances");
  eval->add_option("--seed", eval_seed, "test-set seed");
  eval->add_option("--monitor-steps", eval_monitor_steps, "enable the failure monitor with this many imagined steps");
  eval->add_option("--u-thr-mult", eval_mult, "monitor threshold multiplier");
  eval->add_option("--out", eval_out, "episode results file");

  // run
  auto* run = app.add_subcommand("run", "full experiment: collect, train and evaluate for every seed");
  ConfigFlags run_flags;
  run_flags.add_to(run);
  std::string run_out = "experiment";
  run->add_option("--out", run_out, "report directory");

  // compare
  auto* cmp = app.add_subcommand("compare", "per-seed win/loss/tie table of two reports");
  std::string cmp_a, cmp_b, cmp_out;
  cmp->add_option("a", cmp_a, "report.json of method A")->required();
  cmp->add_option("b", cmp_b, "report.json of method B")->required();
  cmp->add_option("--out", cmp_out, "CSV file");

  // sweep-gamma
  auto* sg = app.add_subcommand("sweep-gamma", "AL experiments over active ratios");
  ConfigFlags sg_flags;
  sg_flags.add_to(sg);
  std::string sg_values = "0.5,0.75,0.8", sg_out = "sweep_gamma.csv";
  sg->add_option("--values", sg_values, "comma-separated ratios");
  sg->add_option("--out", sg_out, "CSV file");

  // sweep-uthr
  auto* su = app.add_subcommand("sweep-uthr", "AL experiments over threshold multipliers plus a PL control");
  ConfigFlags su_flags;
  su_flags.add_to(su);
  std::string su_values = "1.1,1.5,2,3", su_out = "sweep_uthr.csv";
  su->add_option("--values", su_values, "comma-separated multipliers");
  su->add_option("--out", su_out, "CSV file");

  // sweep-imagination
  auto* si = app.add_subcommand("sweep-imagination", "failure-prediction F1 and steps-to-predict over imagined steps");
  FailureSweepConfig fs_cfg;
  std::string si_steps = "0,1,5,10", si_env = "push_block", si_out = "sweep_imagination.csv";
  long long si_seed = 0;
  bool si_no_supervised = false;
  si->add_option("--env", si_env, "environment");
  si->add_option("--n-demos", fs_cfg.n_demos, "demos for the under-trained policy");
  si->add_option("--steps", si_steps, "comma-separated rollout_steps values");
  si->add_option("--u-thr-mult", fs_cfg.u_thr_mult, "threshold multiplier");
  si->add_option("--tests", fs_cfg.test_set_size, "test set size");
  si->add_option("--seeds", fs_cfg.n_seeds, "number of seeds");
  si->add_option("--master-seed", si_seed, "master seed");
  si->add_flag("--no-supervised", si_no_supervised, "skip the supervised baseline");
  si->add_option("--out", si_out, "CSV file");

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of backprop on random networks");
  int gc_trials = 20;
  long long gc_seed = 0;
  double gc_tol = 1e-4;
  gc->add_option("--trials", gc_trials, "random architectures");
  gc->add_option("--seed", gc_seed, "seed");
  gc->add_option("--tol", gc_tol, "largest accepted relative error");

  auto* st = app.add_subcommand("self-test", "quick property checks; nonzero exit on any failure");

  CLI11_PARSE(app, argc, argv);

  try {
    if (collect->parsed()) {
      const auto cfg = collect_flags.build();
      const auto collected = collect_and_train(cfg, static_cast<std::uint64_t>(collect_seed), false);
      const auto path = resolve(collect_out);
      write_text(path, dataset_to_json(collected.dataset).dump() + "\n");
      if (collected.log) write_text(fs::path(path).replace_extension(".log.json"),
                                    collection_log_to_json(*collected.log).dump(2) + "\n");
      std::cout << "wrote " << collected.dataset.size() << " demos to " << path.string() << "\n";
    } else if (train->parsed()) {
      const auto data = dataset_from_json(load_json(train_data));
      const auto cfg = train_flags.config_path.empty() ? ExperimentConfig{} : config_from_json(load_json(train_flags.config_path));
      const auto m = models::train_all(data, cfg.active.models, static_cast<std::uint64_t>(train_seed));
      const auto path = resolve(train_out);
      write_text(path, models::models_to_json(m).dump() + "\n");
      std::cout << "wrote checkpoint " << path.string() << "\n";
    } else if (eval->parsed()) {
      const auto m = models::models_from_json(load_json(eval_models));
      const auto kind = m.dynamics.params.output_dim() == envs::observation_dim(envs::EnvKind::point_reach)
                            ? envs::EnvKind::point_reach
                            : envs::EnvKind::push_block;
      const auto tests = test_instances(kind, static_cast<std::uint64_t>(eval_seed), eval_tests);
      control::ControllerConfig ctrl;
      ctrl.beta = eval_beta;
      std::optional<failure::FailureMonitorConfig> mon;
      if (eval_monitor_steps >= 0) {
        if (eval_data.empty()) throw ConfigError("--monitor-steps needs --data to calibrate the threshold");
        const auto data = dataset_from_json(load_json(eval_data));
        mon = failure::FailureMonitorConfig{uncertainty::calibrate_threshold(m.dae, data, eval_mult),
                                            eval_monitor_steps, true};
      }
      const auto controller = control::controller_from_string(eval_controller);
      json eps = json::array();
      int ok = 0;
      for (std::size_t i = 0; i < tests.size(); ++i) {
        ctrl.planner.seed = numkit::Rng::derive_seed(static_cast<std::uint64_t>(eval_seed), "planner", i);
        const auto ep = control::run_episode(kind, tests[i], controller, &m, ctrl, mon ? &*mon : nullptr);
        ok += ep.success ? 1 : 0;
        eps.push_back(episode_to_json(ep));
      }
      write_text(resolve(eval_out), json{{"controller", eval_controller}, {"successes", ok}, {"episodes", eps}}.dump(2) + "\n");
      std::cout << eval_controller << ": " << ok << "/" << tests.size() << " successes\n";
    } else if (run->parsed()) {
      auto cfg = run_flags.build();
      cfg.output_path = resolve(run_out).string();
      const auto rep = run_experiment(cfg);
      print_summary(rep);
      std::cout << "report in " << cfg.output_path << "\n";
    } else if (cmp->parsed()) {
      const auto a = report_from_json(load_json(cmp_a));
      const auto b = report_from_json(load_json(cmp_b));
      const auto t = compare(a, b);
      const auto csv = comparison_csv(t).str();
      if (!cmp_out.empty()) write_text(resolve(cmp_out), csv);
      std::cout << csv << t.label_a << " wins " << t.wins_a << ", " << t.label_b << " wins " << t.wins_b << ", ties "
                << t.ties << ", skipped " << t.skipped << "; " << t.label_a << " share of decided seeds "
                << fmt(t.win_fraction_a()) << "\n";
    } else if (sg->parsed()) {
      const auto s = sweep_gamma(sg_flags.build(), parse_list(sg_values));
      const auto csv = sweep_csv(s).str();
      write_text(resolve(sg_out), csv);
      std::cout << csv;
    } else if (su->parsed()) {
      const auto s = sweep_uthr(su_flags.build(), parse_list(su_values));
      const auto csv = sweep_csv(s).str();
      write_text(resolve(su_out), csv);
      std::cout << csv;
    } else if (si->parsed()) {
      fs_cfg.env = envs::env_kind_from_string(si_env);
      fs_cfg.master_seed = static_cast<std::uint64_t>(si_seed);
      fs_cfg.supervised = !si_no_supervised;
      fs_cfg.rollout_steps.clear();
      for (double v : parse_list(si_steps)) fs_cfg.rollout_steps.push_back(static_cast<int>(v));
      const auto csv = failure_csv(sweep_imagination(fs_cfg)).str();
      write_text(resolve(si_out), csv);
      std::cout << csv;
    } else if (gc->parsed()) {
      return cmd_gradcheck(gc_trials, static_cast<std::uint64_t>(gc_seed), gc_tol);
    } else if (st->parsed()) {
      return cmd_self_test();
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
