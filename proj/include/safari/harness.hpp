#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "safari/active.hpp"
#include "safari/control.hpp"
#include "safari/dataset.hpp"
#include "safari/envs.hpp"
#include "safari/errors.hpp"
#include "safari/failure.hpp"
#include "safari/models.hpp"
#include "safari/monitor.hpp"
#include "safari/uncertainty.hpp"

namespace safari::harness {

using nlohmann::json;

inline constexpr std::string_view kToolVersion = "0.1.0";
inline constexpr int kConfigSchemaVersion = 1;

enum class Method { pl, al, rand_on_policy, dart };

inline std::string_view to_string(Method m) {
  switch (m) {
    case Method::pl: return "PL";
    case Method::al: return "AL";
    case Method::rand_on_policy: return "rand_on_policy";
    case Method::dart: return "DART";
  }
  return "?";
}

inline Method method_from_string(std::string_view s) {
  if (s == "PL" || s == "pl" || s == "passive") return Method::pl;
  if (s == "AL" || s == "al" || s == "active") return Method::al;
  if (s == "rand_on_policy" || s == "rand-on-policy") return Method::rand_on_policy;
  if (s == "DART" || s == "dart") return Method::dart;
  throw ConfigError("unknown method: " + std::string(s));
}

// ---- number formatting ----

/// Shortest round-trip decimal form; independent of the C++ and C locales.
inline std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline std::string fmt(std::int64_t v) { return std::to_string(v); }
inline std::string fmt(int v) { return std::to_string(v); }
inline std::string fmt(std::uint64_t v) { return std::to_string(v); }

/// Comma-separated rows with a fixed header. Cells are written as given.
class CsvTable {
public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  void add(std::vector<std::string> row) {
    if (row.size() != header_.size()) throw ShapeError("CSV row width does not match the header");
    rows_.push_back(std::move(row));
  }

  [[nodiscard]] std::size_t size() const { return rows_.size(); }

  [[nodiscard]] std::string str() const {
    std::string out;
    auto line = [&out](const std::vector<std::string>& cells) {
      for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) out += ',';
        out += cells[i];
      }
      out += '\n';
    };
    line(header_);
    for (const auto& r : rows_) line(r);
    return out;
  }

private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write " + path.string());
  f << text;
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot read " + path.string());
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

// ---- config ----

struct ExperimentConfig {
  envs::EnvKind env = envs::EnvKind::push_block;
  Method method = Method::al;
  control::ControllerKind controller = control::ControllerKind::bc_only;
  /// Budget (n_total), gamma, mu, threshold multiplier and model settings; PL and DART use n_total and models only.
  active::ActiveLearningConfig active;
  double dart_noise = 0.01;
  control::ControllerConfig control;
  /// Test-time failure monitor, scored in separate twin runs so it never changes the success counts.
  /// Its threshold is calibrated on each seed's final dataset.
  bool monitor_enabled = false;
  int monitor_rollout_steps = 10;
  int test_set_size = 50;
  int n_seeds = 10;
  std::uint64_t master_seed = 0;
  std::string output_path;

  void validate() const {
    if (n_seeds < 1) throw ConfigError("n_seeds must be positive");
    if (test_set_size < 1) throw ConfigError("test_set_size must be positive");
    if (!(dart_noise >= 0.0)) throw ConfigError("dart_noise must be non-negative");
    if (monitor_rollout_steps < 0) throw ConfigError("monitor rollout_steps must be non-negative");
    if (controller == control::ControllerKind::expert) throw ConfigError("experiments evaluate learned controllers");
    if (method == Method::al || method == Method::rand_on_policy) {
      active.validate();
    } else {
      if (active.n_total < 1) throw ConfigError("n_total must be positive");
      if (!(active.u_thr_mult > 1.0)) throw ConfigError("u_thr_mult must exceed 1");
    }
    control.validate();
  }

  /// Seed of experiment `index`; methods sharing a master seed see the same streams.
  [[nodiscard]] std::uint64_t seed_for(int index) const {
    return numkit::Rng::derive_seed(master_seed, "experiment", static_cast<std::uint64_t>(index));
  }
};

inline json train_config_to_json(const models::TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"hidden", c.hidden},
          {"activation", std::string(numkit::to_string(c.activation))},
          {"noise_sigma", c.noise_sigma}};
}

inline models::TrainConfig train_config_from_json(const json& j, models::TrainConfig c) {
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.hidden = j.value("hidden", c.hidden);
  if (j.contains("activation")) c.activation = numkit::activation_from_string(j.at("activation").get<std::string>());
  c.noise_sigma = j.value("noise_sigma", c.noise_sigma);
  return c;
}

inline json config_to_json(const ExperimentConfig& c) {
  const auto& a = c.active;
  const auto& p = c.control.planner;
  return {{"schema_version", kConfigSchemaVersion},
          {"env", std::string(envs::to_string(c.env))},
          {"method", std::string(to_string(c.method))},
          {"controller", std::string(control::to_string(c.controller))},
          {"active",
           {{"n_total", a.n_total},
            {"active_ratio", a.active_ratio},
            {"retrain_every", a.retrain_every},
            {"u_thr_mult", a.u_thr_mult},
            {"rollout_steps", a.rollout_steps},
            {"max_steps", a.max_steps},
            {"attempt_cap_factor", a.attempt_cap_factor}}},
          {"models",
           {{"policy", train_config_to_json(a.models.policy)},
            {"dynamics", train_config_to_json(a.models.dynamics)},
            {"dae", train_config_to_json(a.models.dae)}}},
          {"dart_noise", c.dart_noise},
          {"control",
           {{"beta", c.control.beta},
            {"terminal_rollout_steps", c.control.terminal_rollout_steps},
            {"horizon", p.horizon},
            {"n_candidates", p.n_candidates},
            {"optimizer", std::string(control::to_string(p.optimizer))},
            {"cem_iters", p.cem_iters},
            {"cem_elite_frac", p.cem_elite_frac},
            {"action_sample_std", p.action_sample_std}}},
          {"monitor", {{"enabled", c.monitor_enabled}, {"rollout_steps", c.monitor_rollout_steps}}},
          {"test_set_size", c.test_set_size},
          {"n_seeds", c.n_seeds},
          {"master_seed", c.master_seed},
          {"output_path", c.output_path}};
}

/// Missing fields keep their defaults.
inline ExperimentConfig config_from_json(const json& j) {
  const int version = j.value("schema_version", 0);
  if (version != kConfigSchemaVersion)
    throw ConfigError("unsupported config schema_version " + std::to_string(version));
  ExperimentConfig c;
  if (j.contains("env")) c.env = envs::env_kind_from_string(j.at("env").get<std::string>());
  if (j.contains("method")) c.method = method_from_string(j.at("method").get<std::string>());
  if (j.contains("controller")) c.controller = control::controller_from_string(j.at("controller").get<std::string>());
  if (j.contains("active")) {
    const auto& a = j.at("active");
    c.active.n_total = a.value("n_total", c.active.n_total);
    c.active.active_ratio = a.value("active_ratio", c.active.active_ratio);
    c.active.retrain_every = a.value("retrain_every", c.active.retrain_every);
    c.active.u_thr_mult = a.value("u_thr_mult", c.active.u_thr_mult);
    c.active.rollout_steps = a.value("rollout_steps", c.active.rollout_steps);
    c.active.max_steps = a.value("max_steps", c.active.max_steps);
    c.active.attempt_cap_factor = a.value("attempt_cap_factor", c.active.attempt_cap_factor);
  }
  if (j.contains("models")) {
    const auto& m = j.at("models");
    auto& mc = c.active.models;
    if (m.contains("policy")) mc.policy = train_config_from_json(m.at("policy"), mc.policy);
    if (m.contains("dynamics")) mc.dynamics = train_config_from_json(m.at("dynamics"), mc.dynamics);
    if (m.contains("dae")) mc.dae = train_config_from_json(m.at("dae"), mc.dae);
  }
  c.dart_noise = j.value("dart_noise", c.dart_noise);
  if (j.contains("control")) {
    const auto& k = j.at("control");
    auto& p = c.control.planner;
    c.control.beta = k.value("beta", c.control.beta);
    c.control.terminal_rollout_steps = k.value("terminal_rollout_steps", c.control.terminal_rollout_steps);
    p.horizon = k.value("horizon", p.horizon);
    p.n_candidates = k.value("n_candidates", p.n_candidates);
    if (k.contains("optimizer")) p.optimizer = control::optimizer_from_string(k.at("optimizer").get<std::string>());
    p.cem_iters = k.value("cem_iters", p.cem_iters);
    p.cem_elite_frac = k.value("cem_elite_frac", p.cem_elite_frac);
    p.action_sample_std = k.value("action_sample_std", p.action_sample_std);
  }
  if (j.contains("monitor")) {
    c.monitor_enabled = j.at("monitor").value("enabled", c.monitor_enabled);
    c.monitor_rollout_steps = j.at("monitor").value("rollout_steps", c.monitor_rollout_steps);
  }
  c.test_set_size = j.value("test_set_size", c.test_set_size);
  c.n_seeds = j.value("n_seeds", c.n_seeds);
  c.master_seed = j.value("master_seed", c.master_seed);
  c.output_path = j.value("output_path", c.output_path);
  c.validate();
  return c;
}

// ---- experiments ----

/// Test instances come from their own stream, disjoint from every collection and training stream.
inline std::vector<envs::TaskInstance> test_instances(envs::EnvKind kind, std::uint64_t seed, int n) {
  numkit::Rng rng = numkit::Rng(seed).derive("test");
  return envs::sample_instances(rng, n, kind);
}

struct SeedResult {
  int seed_index = 0;
  std::uint64_t seed = 0;
  bool ok = true;
  std::string diagnostic;
  int successes = 0;
  /// Mean autoencoder energy per executed step, over every test episode.
  double mean_energy = 0.0;
  std::vector<control::EpisodeResult> episodes;
  std::optional<active::CollectionLog> collection_log;
  std::optional<failure::FailureReport> failure_report;
};

struct ExperimentReport {
  ExperimentConfig config;
  std::string tool_version = std::string(kToolVersion);
  std::vector<SeedResult> seeds;

  [[nodiscard]] double mean_successes() const {
    double total = 0.0;
    int n = 0;
    for (const auto& s : seeds)
      if (s.ok) {
        total += s.successes;
        ++n;
      }
    return n > 0 ? total / n : std::numeric_limits<double>::quiet_NaN();
  }

  [[nodiscard]] int total_successes() const {
    int total = 0;
    for (const auto& s : seeds) total += s.ok ? s.successes : 0;
    return total;
  }
};

struct Collected {
  DemoDataset dataset;
  models::TrainedModels models;
  std::optional<active::CollectionLog> log;
};

/// Data collection and training for one seed. With train=false, PL and DART stop after collecting
/// (the on-policy collectors train as part of collection).
inline Collected collect_and_train(const ExperimentConfig& cfg, std::uint64_t seed, bool train = true) {
  Collected out;
  auto al = cfg.active;
  al.seed = seed;
  const numkit::Rng root(seed);
  switch (cfg.method) {
    case Method::al:
    case Method::rand_on_policy: {
      auto r = cfg.method == Method::al ? active::run_active_learning(cfg.env, al)
                                        : active::collect_rand_on_policy(cfg.env, al);
      out.dataset = std::move(r.dataset);
      out.models = std::move(r.models);
      out.log = std::move(r.log);
      return out;
    }
    case Method::pl: {
      // Same stream as the active collectors' passive warm-up, so PL and AL share their first demos.
      numkit::Rng rng = root.derive("demos");
      out.dataset = active::collect_passive(cfg.env, al.n_total, rng, al.max_steps);
      break;
    }
    case Method::dart: {
      numkit::Rng rng = root.derive("demos");
      out.dataset = active::collect_dart(cfg.env, al.n_total, cfg.dart_noise, rng, al.max_steps);
      break;
    }
  }
  if (train) out.models = models::train_all(out.dataset, al.models, numkit::Rng::derive_seed(seed, "train", 0));
  return out;
}

inline SeedResult evaluate_seed(const ExperimentConfig& cfg, const Collected& c, int index, std::uint64_t seed) {
  SeedResult r;
  r.seed_index = index;
  r.seed = seed;
  r.collection_log = c.log;
  const auto tests = test_instances(cfg.env, seed, cfg.test_set_size);
  failure::FailureMonitorConfig mon;
  if (cfg.monitor_enabled) {
    mon.threshold = uncertainty::calibrate_threshold(c.models.dae, c.dataset, cfg.active.u_thr_mult);
    mon.rollout_steps = cfg.monitor_rollout_steps;
  }
  double energy = 0.0;
  std::size_t steps = 0;
  for (std::size_t i = 0; i < tests.size(); ++i) {
    control::ControllerConfig ctrl = cfg.control;
    ctrl.planner.seed = numkit::Rng::derive_seed(seed, "planner", i);
    auto ep = control::run_episode(cfg.env, tests[i], cfg.controller, &c.models, ctrl, nullptr, cfg.active.max_steps);
    r.successes += ep.success ? 1 : 0;
    for (double e : ep.energy_trace) energy += e;
    steps += ep.energy_trace.size();
    r.episodes.push_back(std::move(ep));
  }
  r.mean_energy = steps > 0 ? energy / static_cast<double>(steps) : 0.0;
  if (cfg.monitor_enabled) {
    control::ControllerConfig ctrl = cfg.control;
    ctrl.planner.seed = numkit::Rng::derive_seed(seed, "planner", 0);
    r.failure_report = failure::evaluate_failure_prediction(cfg.env, tests, c.models, {mon}, cfg.controller, ctrl,
                                                            cfg.active.max_steps)
                           .front();
  }
  return r;
}

inline json episode_to_json(const control::EpisodeResult& e) {
  json j = {{"success", e.success}, {"steps", e.steps}, {"stop_reason", std::string(control::to_string(e.stop_reason))}};
  j["trigger_step"] = e.trigger_step ? json(*e.trigger_step) : json(nullptr);
  return j;
}

inline json collection_log_to_json(const active::CollectionLog& log) {
  json recs = json::array();
  for (const auto& r : log.records)
    recs.push_back({{"demo_index", r.demo_index},
                    {"round", r.round},
                    {"trigger_step", r.trigger_step},
                    {"uncertainty", r.uncertainty},
                    {"threshold", r.threshold},
                    {"demo_length", r.demo_length}});
  return {{"records", recs},
          {"attempts", log.attempts},
          {"attempts_without_trigger", log.attempts_without_trigger},
          {"discarded_completions", log.discarded_completions},
          {"fallback_demos", log.fallback_demos},
          {"thresholds", log.thresholds}};
}

inline json failure_report_to_json(const failure::FailureReport& r) {
  json j = {{"rollout_steps", r.rollout_steps}, {"threshold", r.threshold}, {"tp", r.true_positives},
            {"fp", r.false_positives},          {"fn", r.false_negatives},  {"tn", r.true_negatives},
            {"precision", r.precision},         {"recall", r.recall},       {"f1", r.f1}};
  j["mean_steps_to_predict"] = std::isnan(r.mean_steps_to_predict) ? json(nullptr) : json(r.mean_steps_to_predict);
  return j;
}

inline json report_to_json(const ExperimentReport& rep) {
  json seeds = json::array();
  for (const auto& s : rep.seeds) {
    json eps = json::array();
    for (const auto& e : s.episodes) eps.push_back(episode_to_json(e));
    json js = {{"seed_index", s.seed_index}, {"seed", s.seed},         {"ok", s.ok},
               {"successes", s.successes},   {"mean_energy", s.mean_energy}, {"episodes", eps}};
    if (!s.ok) js["diagnostic"] = s.diagnostic;
    if (s.collection_log) js["collection_log"] = collection_log_to_json(*s.collection_log);
    if (s.failure_report) js["failure_report"] = failure_report_to_json(*s.failure_report);
    seeds.push_back(std::move(js));
  }
  return {{"format", "safari-report"}, {"tool_version", rep.tool_version}, {"config", config_to_json(rep.config)},
          {"seeds", seeds}};
}

/// Reads back the config and per-seed counts; episodes and logs are not restored.
inline ExperimentReport report_from_json(const json& j) {
  if (j.value("format", "") != "safari-report") throw ConfigError("not a safari-report document");
  ExperimentReport rep;
  rep.config = config_from_json(j.at("config"));
  rep.tool_version = j.at("tool_version").get<std::string>();
  for (const auto& s : j.at("seeds")) {
    SeedResult r;
    r.seed_index = s.at("seed_index").get<int>();
    r.seed = s.at("seed").get<std::uint64_t>();
    r.ok = s.at("ok").get<bool>();
    r.successes = s.at("successes").get<int>();
    r.mean_energy = s.at("mean_energy").get<double>();
    r.diagnostic = s.value("diagnostic", "");
    rep.seeds.push_back(std::move(r));
  }
  return rep;
}

/// One row per seed. Failed seeds keep their row with ok=0.
inline CsvTable metrics_csv(const ExperimentReport& rep) {
  CsvTable t({"seed_index", "seed", "method", "controller", "ok", "successes", "test_set_size", "mean_energy"});
  const auto sorted = [&] {
    auto s = rep.seeds;
    std::sort(s.begin(), s.end(), [](const auto& a, const auto& b) { return a.seed_index < b.seed_index; });
    return s;
  }();
  for (const auto& s : sorted)
    t.add({fmt(s.seed_index), fmt(s.seed), std::string(to_string(rep.config.method)),
           std::string(control::to_string(rep.config.controller)), s.ok ? "1" : "0", fmt(s.successes),
           fmt(rep.config.test_set_size), fmt(s.mean_energy)});
  return t;
}

/// Writes report.json and metrics.csv under `dir`.
inline void persist(const ExperimentReport& rep, const std::filesystem::path& dir) {
  write_text(dir / "report.json", report_to_json(rep).dump(2) + "\n");
  write_text(dir / "metrics.csv", metrics_csv(rep).str());
}

/**
 * For each seed: collect data with the configured method, train, and run the
 * controller on a seed-derived test set. A seed that throws is recorded with
 * its diagnostic and the remaining seeds still run. The report is written to
 * cfg.output_path when that is set.
 */
inline ExperimentReport run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  ExperimentReport rep;
  rep.config = cfg;
  for (int i = 0; i < cfg.n_seeds; ++i) {
    const std::uint64_t seed = cfg.seed_for(i);
    try {
      rep.seeds.push_back(evaluate_seed(cfg, collect_and_train(cfg, seed), i, seed));
    } catch (const std::exception& e) {
      SeedResult r;
      r.seed_index = i;
      r.seed = seed;
      r.ok = false;
      r.diagnostic = e.what();
      rep.seeds.push_back(std::move(r));
    }
  }
  if (!cfg.output_path.empty()) persist(rep, cfg.output_path);
  return rep;
}

// ---- comparison ----

enum class Outcome { a_wins, b_wins, tie, skipped };

inline std::string_view to_string(Outcome o) {
  switch (o) {
    case Outcome::a_wins: return "a";
    case Outcome::b_wins: return "b";
    case Outcome::tie: return "tie";
    case Outcome::skipped: return "skipped";
  }
  return "?";
}

struct ComparisonRow {
  int seed_index = 0;
  int successes_a = 0;
  int successes_b = 0;
  Outcome outcome = Outcome::tie;
};

struct ComparisonTable {
  std::string label_a;
  std::string label_b;
  std::vector<ComparisonRow> rows;
  int wins_a = 0;
  int wins_b = 0;
  int ties = 0;
  /// Seeds where either run failed.
  int skipped = 0;

  /// Share of non-tied seeds won by A; NaN when every seed tied.
  [[nodiscard]] double win_fraction_a() const {
    const int decided = wins_a + wins_b;
    return decided > 0 ? static_cast<double>(wins_a) / decided : std::numeric_limits<double>::quiet_NaN();
  }
};

/// Per-seed success comparison on matched seeds and test sets; ties get their own column.
inline ComparisonTable compare(const ExperimentReport& a, const ExperimentReport& b) {
  if (a.config.env != b.config.env) throw ConfigError("reports use different environments");
  if (a.config.test_set_size != b.config.test_set_size) throw ConfigError("reports use different test set sizes");
  if (a.seeds.size() != b.seeds.size()) throw ConfigError("reports have different seed counts");
  auto by_index = [](std::vector<SeedResult> s) {
    std::sort(s.begin(), s.end(), [](const auto& x, const auto& y) { return x.seed_index < y.seed_index; });
    return s;
  };
  const auto sa = by_index(a.seeds);
  const auto sb = by_index(b.seeds);
  ComparisonTable t;
  t.label_a = std::string(to_string(a.config.method)) + "/" + std::string(control::to_string(a.config.controller));
  t.label_b = std::string(to_string(b.config.method)) + "/" + std::string(control::to_string(b.config.controller));
  for (std::size_t i = 0; i < sa.size(); ++i) {
    if (sa[i].seed != sb[i].seed || sa[i].seed_index != sb[i].seed_index)
      throw ConfigError("reports do not share seeds (index " + std::to_string(i) + ")");
    ComparisonRow row{sa[i].seed_index, sa[i].successes, sb[i].successes, Outcome::tie};
    if (!sa[i].ok || !sb[i].ok) {
      row.outcome = Outcome::skipped;
      ++t.skipped;
    } else if (row.successes_a > row.successes_b) {
      row.outcome = Outcome::a_wins;
      ++t.wins_a;
    } else if (row.successes_b > row.successes_a) {
      row.outcome = Outcome::b_wins;
      ++t.wins_b;
    } else {
      ++t.ties;
    }
    t.rows.push_back(row);
  }
  return t;
}

inline CsvTable comparison_csv(const ComparisonTable& t) {
  CsvTable c({"seed_index", "successes_a", "successes_b", "winner"});
  for (const auto& r : t.rows)
    c.add({fmt(r.seed_index), fmt(r.successes_a), fmt(r.successes_b), std::string(to_string(r.outcome))});
  return c;
}

// ---- sweeps ----

struct SweepCell {
  std::string method;
  double value = 0.0; ///< gamma or u_thr_mult; NaN for the PL control
  ExperimentReport report;
};

struct SweepResult {
  std::string parameter;
  std::vector<SweepCell> cells;
};

inline CsvTable sweep_csv(const SweepResult& s) {
  CsvTable t({"method", s.parameter, "n_seeds", "total_successes", "mean_successes"});
  for (const auto& c : s.cells)
    t.add({c.method, std::isnan(c.value) ? std::string() : fmt(c.value), fmt(static_cast<int>(c.report.seeds.size())),
           fmt(c.report.total_successes()), fmt(c.report.mean_successes())});
  return t;
}

inline ExperimentConfig without_output(ExperimentConfig c) {
  c.output_path.clear();
  return c;
}

/// One AL experiment per active ratio, matched seeds. Every ratio is checked before anything runs.
inline SweepResult sweep_gamma(const ExperimentConfig& base, const std::vector<double>& gammas) {
  if (gammas.empty()) throw ConfigError("gamma sweep needs at least one value");
  std::vector<ExperimentConfig> cfgs;
  for (double g : gammas) {
    ExperimentConfig c = without_output(base);
    c.method = Method::al;
    c.active.active_ratio = g;
    try {
      c.validate();
    } catch (const ConfigError& e) {
      throw ConfigError("gamma " + fmt(g) + ": " + e.what());
    }
    cfgs.push_back(c);
  }
  SweepResult out{"gamma", {}};
  for (std::size_t i = 0; i < cfgs.size(); ++i) out.cells.push_back({"AL", gammas[i], run_experiment(cfgs[i])});
  return out;
}

/// Removes repeated values, keeping first occurrences; warns on stderr when anything was dropped.
inline std::vector<double> dedup_values(const std::vector<double>& xs, std::string_view what) {
  std::vector<double> out;
  for (double x : xs)
    if (std::find(out.begin(), out.end(), x) == out.end()) out.push_back(x);
  if (out.size() != xs.size())
    std::clog << "warning: duplicate " << what << " values removed (" << xs.size() - out.size() << ")\n";
  return out;
}

/// PL control plus one AL experiment per threshold multiplier, matched seeds.
inline SweepResult sweep_uthr(const ExperimentConfig& base, const std::vector<double>& mults) {
  if (mults.empty()) throw ConfigError("u_thr sweep needs at least one multiplier");
  const auto values = dedup_values(mults, "u_thr_mult");
  std::vector<ExperimentConfig> cfgs;
  for (double m : values) {
    ExperimentConfig c = without_output(base);
    c.method = Method::al;
    c.active.u_thr_mult = m;
    try {
      c.validate();
    } catch (const ConfigError& e) {
      throw ConfigError("u_thr_mult " + fmt(m) + ": " + e.what());
    }
    cfgs.push_back(c);
  }
  ExperimentConfig pl = without_output(base);
  pl.method = Method::pl;
  SweepResult out{"u_thr_mult", {}};
  out.cells.push_back({"PL", std::numeric_limits<double>::quiet_NaN(), run_experiment(pl)});
  for (std::size_t i = 0; i < cfgs.size(); ++i) out.cells.push_back({"AL", values[i], run_experiment(cfgs[i])});
  return out;
}

// ---- imagination sweep (failure prediction) ----

struct FailureSweepConfig {
  envs::EnvKind env = envs::EnvKind::push_block;
  /// Deliberately small so the cloned policy fails often enough to have something to predict.
  int n_demos = 20;
  std::vector<int> rollout_steps = {0, 1, 5, 10};
  double u_thr_mult = 1.5;
  int test_set_size = 50;
  int n_seeds = 5;
  std::uint64_t master_seed = 0;
  models::ModelsConfig models;
  bool supervised = true;
  models::TrainConfig supervised_train{100, 64, 1e-3, {64, 64}};
  int label_rollouts = 100;
  double probability_threshold = 0.5;
  int max_steps = envs::kDefaultMaxSteps;

  void validate() const {
    if (n_demos < 1 || test_set_size < 1 || n_seeds < 1) throw ConfigError("failure sweep sizes must be positive");
    if (rollout_steps.empty()) throw ConfigError("failure sweep needs at least one rollout_steps value");
    for (int k : rollout_steps)
      if (k < 0) throw ConfigError("rollout_steps must be non-negative");
    if (!(u_thr_mult > 1.0)) throw ConfigError("u_thr_mult must exceed 1");
    if (supervised && label_rollouts < 1) throw ConfigError("label_rollouts must be positive");
    if (!(probability_threshold > 0.0 && probability_threshold < 1.0))
      throw ConfigError("probability_threshold must lie in (0, 1)");
  }

  [[nodiscard]] std::uint64_t seed_for(int index) const {
    return numkit::Rng::derive_seed(master_seed, "failure-experiment", static_cast<std::uint64_t>(index));
  }
};

struct FailureSeedResult {
  int seed_index = 0;
  std::uint64_t seed = 0;
  std::vector<failure::FailureReport> monitor; ///< one per rollout_steps value, in sweep order
  std::optional<failure::FailureReport> supervised;
};

/// Policy rollouts labeled by outcome, for the supervised baseline.
inline std::vector<failure::LabeledRollout> label_policy_rollouts(envs::EnvKind kind, const models::PolicyModel& policy,
                                                                  const std::vector<envs::TaskInstance>& instances,
                                                                  int max_steps = envs::kDefaultMaxSteps) {
  std::vector<failure::LabeledRollout> out;
  for (const auto& inst : instances) {
    envs::EnvState s = envs::reset(kind, inst, max_steps).state;
    Trajectory t;
    t.instance = inst;
    while (!envs::is_success(s) && s.step_count < s.max_steps) {
      const auto obs = envs::observe(s);
      const auto a = envs::clamp_action(policy.act(obs));
      t.steps.push_back({obs, a});
      s = envs::step(s, a).state;
    }
    t.final_observation = envs::observe(s);
    t.success = envs::is_success(s);
    out.emplace_back(std::move(t), envs::is_success(s));
  }
  return out;
}

inline FailureSeedResult run_failure_seed(const FailureSweepConfig& cfg, int index) {
  FailureSeedResult r;
  r.seed_index = index;
  r.seed = cfg.seed_for(index);
  const numkit::Rng root(r.seed);
  numkit::Rng demo_rng = root.derive("demos");
  const auto demos = active::collect_passive(cfg.env, cfg.n_demos, demo_rng, cfg.max_steps);
  const auto m = models::train_all(demos, cfg.models, numkit::Rng::derive_seed(r.seed, "train", 0));
  const auto thr = uncertainty::calibrate_threshold(m.dae, demos, cfg.u_thr_mult);
  const auto tests = test_instances(cfg.env, r.seed, cfg.test_set_size);
  std::vector<failure::FailureMonitorConfig> sweep;
  for (int k : cfg.rollout_steps) sweep.push_back({thr, k, true});
  r.monitor = failure::evaluate_failure_prediction(cfg.env, tests, m, sweep, control::ControllerKind::bc_only, {},
                                                   cfg.max_steps);
  if (cfg.supervised) {
    numkit::Rng label_rng = root.derive("labels");
    const auto labels =
        label_policy_rollouts(cfg.env, m.policy, envs::sample_instances(label_rng, cfg.label_rollouts, cfg.env),
                              cfg.max_steps);
    auto tc = cfg.supervised_train;
    tc.seed = numkit::Rng::derive_seed(r.seed, "supervised", 0);
    try {
      const auto clf = failure::train_supervised_baseline(labels, tc);
      r.supervised =
          failure::evaluate_supervised_baseline(cfg.env, tests, m, clf, cfg.probability_threshold, cfg.max_steps);
    } catch (const ConfigError& e) {
      // Every label rollout had the same outcome; there is no classifier to compare against.
      std::clog << "warning: seed " << index << ": " << e.what() << "\n";
    }
  }
  return r;
}

inline std::vector<FailureSeedResult> sweep_imagination(const FailureSweepConfig& cfg) {
  cfg.validate();
  std::vector<FailureSeedResult> out;
  for (int i = 0; i < cfg.n_seeds; ++i) out.push_back(run_failure_seed(cfg, i));
  return out;
}

inline CsvTable failure_csv(const std::vector<FailureSeedResult>& results) {
  CsvTable t({"seed_index", "detector", "rollout_steps", "threshold", "tp", "fp", "fn", "tn", "precision", "recall",
              "f1", "mean_steps_to_predict"});
  auto row = [&t](int seed, const std::string& det, const std::string& k, const failure::FailureReport& r) {
    t.add({fmt(seed), det, k, fmt(r.threshold), fmt(r.true_positives), fmt(r.false_positives), fmt(r.false_negatives),
           fmt(r.true_negatives), fmt(r.precision), fmt(r.recall), fmt(r.f1), fmt(r.mean_steps_to_predict)});
  };
  for (const auto& s : results) {
    for (const auto& r : s.monitor) row(s.seed_index, "monitor", fmt(r.rollout_steps), r);
    if (s.supervised) row(s.seed_index, "supervised", "", *s.supervised);
  }
  return t;
}

} // namespace safari::harness
