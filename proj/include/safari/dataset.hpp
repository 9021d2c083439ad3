#pragma once

#include <nlohmann/json.hpp>

#include <string>
#include <string_view>
#include <vector>

#include "safari/envs.hpp"
#include "safari/errors.hpp"
#include "safari/numkit/serialize.hpp"

namespace safari {

enum class Provenance { passive, active, rand_on_policy, dart };

inline std::string_view to_string(Provenance p) {
  switch (p) {
  case Provenance::passive: return "passive";
  case Provenance::active: return "active";
  case Provenance::rand_on_policy: return "rand_on_policy";
  case Provenance::dart: return "dart";
  }
  return "passive";
}

inline Provenance provenance_from_string(std::string_view s) {
  if (s == "passive") return Provenance::passive;
  if (s == "active") return Provenance::active;
  if (s == "rand_on_policy") return Provenance::rand_on_policy;
  if (s == "dart") return Provenance::dart;
  throw ConfigError("unknown provenance '" + std::string(s) + "'");
}

struct Step {
  envs::Observation observation;
  envs::Action action;
};

/// (s_0, a_0, ..., s_T, a_T) followed by the observation reached after the last action.
struct Trajectory {
  envs::TaskInstance instance;
  std::vector<Step> steps;
  envs::Observation final_observation;
  bool success = false;
  Provenance provenance = Provenance::passive;
};

struct DemoDataset {
  envs::EnvKind kind = envs::EnvKind::point_reach;
  std::vector<Trajectory> trajectories;

  [[nodiscard]] bool empty() const { return trajectories.empty(); }
  [[nodiscard]] std::size_t size() const { return trajectories.size(); }

  [[nodiscard]] std::size_t transition_count() const {
    std::size_t n = 0;
    for (const auto& t : trajectories) n += t.steps.size();
    return n;
  }

  [[nodiscard]] std::size_t count(Provenance p) const {
    std::size_t n = 0;
    for (const auto& t : trajectories) n += t.provenance == p;
    return n;
  }
};

/// Rolls the scripted expert from `state` until the episode ends. The step counter restarts so the
/// expert always has the full step budget.
inline Trajectory expert_rollout(envs::EnvState state, Provenance provenance, const envs::TaskInstance& instance) {
  state.step_count = 0;
  Trajectory t;
  t.instance = instance;
  t.provenance = provenance;
  if (state.max_steps == 0 || envs::is_success(state)) {
    t.final_observation = envs::observe(state);
    t.success = envs::is_success(state);
    return t;
  }
  while (true) {
    const envs::Action a = envs::expert_action(state);
    t.steps.push_back({envs::observe(state), a});
    auto out = envs::step(state, a);
    state = out.state;
    if (out.result.done) {
      t.success = out.result.success;
      break;
    }
  }
  t.final_observation = envs::observe(state);
  return t;
}

// ---- structured text records ----

inline nlohmann::json instance_to_json(const envs::TaskInstance& inst) {
  return {{"agent_start", {inst.agent_start.x(), inst.agent_start.y()}},
          {"block_start", {inst.block_start.x(), inst.block_start.y()}},
          {"goal", {inst.goal.x(), inst.goal.y()}}};
}

inline envs::TaskInstance instance_from_json(const nlohmann::json& j) {
  auto v2 = [](const nlohmann::json& a) { return envs::Vec2(a.at(0).get<double>(), a.at(1).get<double>()); };
  envs::TaskInstance inst;
  inst.agent_start = v2(j.at("agent_start"));
  inst.block_start = v2(j.at("block_start"));
  inst.goal = v2(j.at("goal"));
  return inst;
}

inline nlohmann::json trajectory_to_json(const Trajectory& t) {
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& s : t.steps)
    steps.push_back({{"observation", numkit::vector_to_json(s.observation)},
                     {"action", {s.action.x(), s.action.y()}}});
  return {{"instance", instance_to_json(t.instance)},
          {"provenance", std::string(to_string(t.provenance))},
          {"steps", steps},
          {"final_observation", numkit::vector_to_json(t.final_observation)},
          {"success", t.success}};
}

inline Trajectory trajectory_from_json(const nlohmann::json& j) {
  Trajectory t;
  t.instance = instance_from_json(j.at("instance"));
  t.provenance = provenance_from_string(j.at("provenance").get<std::string>());
  for (const auto& s : j.at("steps")) {
    const auto& a = s.at("action");
    t.steps.push_back({numkit::vector_from_json(s.at("observation")),
                       envs::Action(a.at(0).get<double>(), a.at(1).get<double>())});
  }
  t.final_observation = numkit::vector_from_json(j.at("final_observation"));
  t.success = j.at("success").get<bool>();
  return t;
}

inline nlohmann::json dataset_to_json(const DemoDataset& d) {
  nlohmann::json trajs = nlohmann::json::array();
  for (const auto& t : d.trajectories) trajs.push_back(trajectory_to_json(t));
  return {{"format", "safari-dataset"}, {"version", 1}, {"env", std::string(envs::to_string(d.kind))},
          {"trajectories", trajs}};
}

inline DemoDataset dataset_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "safari-dataset") throw ConfigError("not a safari-dataset document");
  DemoDataset d;
  d.kind = envs::env_kind_from_string(j.at("env").get<std::string>());
  const int dim = envs::observation_dim(d.kind);
  for (const auto& t : j.at("trajectories")) {
    d.trajectories.push_back(trajectory_from_json(t));
    for (const auto& s : d.trajectories.back().steps)
      if (s.observation.size() != dim) throw ShapeError("observation width does not match environment");
  }
  return d;
}

} // namespace safari
