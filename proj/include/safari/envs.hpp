#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include "safari/errors.hpp"
#include "safari/numkit/rng.hpp"

namespace safari::envs {

using Vec2 = Eigen::Vector2d;
using Observation = Eigen::VectorXd;
using Action = Eigen::Vector2d;

enum class EnvKind { point_reach, push_block };

inline std::string_view to_string(EnvKind k) { return k == EnvKind::point_reach ? "point_reach" : "push_block"; }

inline EnvKind env_kind_from_string(std::string_view s) {
  if (s == "point_reach" || s == "PointReach") return EnvKind::point_reach;
  if (s == "push_block" || s == "PushBlock") return EnvKind::push_block;
  throw ConfigError("unknown environment '" + std::string(s) + "'");
}

inline constexpr double kMaxAction = 0.05;
inline constexpr int kDefaultMaxSteps = 120;
inline constexpr double kReachRadius = 0.03;
inline constexpr double kPushSuccessRadius = 0.05;
inline constexpr double kContactRadius = 0.05;
inline constexpr double kMinTaskDistance = 0.2;

inline int observation_dim(EnvKind k) { return k == EnvKind::point_reach ? 4 : 6; }
inline constexpr int kActionDim = 2;

struct TaskInstance {
  Vec2 agent_start = Vec2::Zero();
  Vec2 block_start = Vec2::Zero(); // ignored by PointReach
  Vec2 goal = Vec2::Zero();

  friend bool operator==(const TaskInstance&, const TaskInstance&) = default;
};

struct EnvState {
  EnvKind kind = EnvKind::point_reach;
  Vec2 agent = Vec2::Zero();
  Vec2 block = Vec2::Zero();
  Vec2 goal = Vec2::Zero();
  int step_count = 0;
  int max_steps = kDefaultMaxSteps;

  friend bool operator==(const EnvState&, const EnvState&) = default;
};

struct StepResult {
  Observation observation;
  bool done = false;
  bool success = false;
};

inline bool in_arena(const Vec2& p) { return p.x() >= 0.0 && p.x() <= 1.0 && p.y() >= 0.0 && p.y() <= 1.0; }
inline Vec2 clamp_to_arena(const Vec2& p) { return p.cwiseMax(0.0).cwiseMin(1.0); }
inline Action clamp_action(const Action& a) { return a.cwiseMax(-kMaxAction).cwiseMin(kMaxAction); }

/// Throws ConfigError if the instance breaks the arena or separation invariants for `kind`.
inline void validate_instance(EnvKind kind, const TaskInstance& inst) {
  if (!inst.agent_start.allFinite() || !inst.goal.allFinite() || !inst.block_start.allFinite())
    throw ConfigError("task instance contains non-finite coordinates");
  if (!in_arena(inst.agent_start)) throw ConfigError("agent start outside the arena");
  if (!in_arena(inst.goal)) throw ConfigError("goal outside the arena");
  if (kind == EnvKind::point_reach) {
    if ((inst.goal - inst.agent_start).norm() < kMinTaskDistance)
      throw ConfigError("start and goal closer than the minimum task distance");
  } else {
    if (!in_arena(inst.block_start)) throw ConfigError("block start outside the arena");
    if ((inst.goal - inst.block_start).norm() < kMinTaskDistance)
      throw ConfigError("block and goal closer than the minimum task distance");
  }
}

inline Observation observe(const EnvState& s) {
  Observation o(observation_dim(s.kind));
  if (s.kind == EnvKind::point_reach) {
    o << s.agent, s.goal;
  } else {
    o << s.agent, s.block, s.goal;
  }
  return o;
}

inline bool is_success(const EnvState& s) {
  if (s.kind == EnvKind::point_reach) return (s.agent - s.goal).norm() < kReachRadius;
  return (s.block - s.goal).norm() < kPushSuccessRadius;
}

struct ResetResult {
  EnvState state;
  Observation observation;
};

inline ResetResult reset(EnvKind kind, const TaskInstance& inst, int max_steps = kDefaultMaxSteps) {
  validate_instance(kind, inst);
  if (max_steps < 0) throw ConfigError("max_steps must be non-negative");
  EnvState s;
  s.kind = kind;
  s.agent = inst.agent_start;
  s.block = kind == EnvKind::push_block ? inst.block_start : Vec2::Zero();
  s.goal = inst.goal;
  s.step_count = 0;
  s.max_steps = max_steps;
  return {s, observe(s)};
}

struct StepOutcome {
  EnvState state;
  StepResult result;
};

/**
 * Kinematic step. The agent moves by the clamped action. In PushBlock, if the
 * agent starts the step within the contact radius of the block, the block
 * moves along the agent->block direction by the non-negative projection of
 * the agent's displacement onto that direction.
 */
inline StepOutcome step(const EnvState& state, const Action& action) {
  EnvState s = state;
  const Action a = action.allFinite() ? clamp_action(action) : Action::Zero();
  const Vec2 before = s.agent;
  s.agent = clamp_to_arena(s.agent + a);
  if (s.kind == EnvKind::push_block) {
    const Vec2 to_block = s.block - before;
    const double dist = to_block.norm();
    if (dist <= kContactRadius + 1e-12 && dist > 1e-12) {
      const Vec2 n = to_block / dist;
      const double push = (s.agent - before).dot(n);
      if (push > 0.0) s.block = clamp_to_arena(s.block + push * n);
    }
  }
  s.step_count += 1;
  const bool success = is_success(s);
  const bool done = success || s.step_count >= s.max_steps;
  return {s, {observe(s), done, success}};
}

namespace detail {

inline Vec2 perp(const Vec2& u) { return {-u.y(), u.x()}; }

/// Steers toward `target` but removes any motion into the block while the agent is close to it.
inline Action navigate(const EnvState& s, const Vec2& target) {
  Action a = clamp_action(target - s.agent);
  const Vec2 to_block = s.block - s.agent;
  const double dist = to_block.norm();
  if (dist < kContactRadius + 0.02 && dist > 1e-12) {
    const Vec2 n = to_block / dist;
    const double into = a.dot(n);
    if (into > 0.0) a -= into * n;
    a = clamp_action(a);
  }
  return a;
}

inline constexpr double kPushOffset = 0.045;
inline constexpr double kAlignTolerance = 0.02;

inline Action push_block_expert(const EnvState& s) {
  const Vec2 to_goal = s.goal - s.block;
  const double goal_dist = to_goal.norm();
  if (goal_dist < 1e-9) return Action::Zero();
  const Vec2 u = to_goal / goal_dist;
  const Vec2 side = perp(u);
  const Vec2 rel = s.agent - s.block;
  const double along = rel.dot(u);
  const double lateral = rel.dot(side);

  if (along < -0.03) {
    // Behind the block: close the gap to the pushing offset while removing the lateral error, and
    // push toward the goal in proportion to how well the agent is aligned.
    const double approach = -kPushOffset - along;
    const double alignment = std::max(0.0, 1.0 - std::abs(lateral) / kAlignTolerance);
    const double speed = std::min(kMaxAction, goal_dist);
    return clamp_action((approach + alignment * speed) * u - lateral * side);
  }
  const double sgn = lateral >= 0.0 ? 1.0 : -1.0;
  if (along > 0.02) return navigate(s, s.block + sgn * 0.1 * side);
  return navigate(s, s.block + sgn * 0.08 * side - 0.08 * u);
}

} // namespace detail

/// Scripted demonstrator. PointReach: proportional control with gain 1. PushBlock: reach the
/// pushing side of the block on the block->goal line, then push along that line.
inline Action expert_action(const EnvState& s) {
  if (s.kind == EnvKind::point_reach) return clamp_action(s.goal - s.agent);
  return detail::push_block_expert(s);
}

/**
 * Uniform instances. PointReach samples start and goal over the whole arena.
 * PushBlock keeps block and goal in [0.2, 0.8]^2 so the pushing side is always
 * reachable, and places the agent at least 0.1 from the block.
 */
inline std::vector<TaskInstance> sample_instances(numkit::Rng& rng, int n, EnvKind kind) {
  if (n < 1) throw ConfigError("sample_instances needs n >= 1");
  std::vector<TaskInstance> out;
  out.reserve(static_cast<std::size_t>(n));
  auto point = [&](double lo, double hi) { return Vec2(rng.uniform(lo, hi), rng.uniform(lo, hi)); };
  while (static_cast<int>(out.size()) < n) {
    TaskInstance inst;
    if (kind == EnvKind::point_reach) {
      inst.agent_start = point(0.0, 1.0);
      inst.goal = point(0.0, 1.0);
      if ((inst.goal - inst.agent_start).norm() < kMinTaskDistance) continue;
    } else {
      inst.block_start = point(0.2, 0.8);
      inst.goal = point(0.2, 0.8);
      if ((inst.goal - inst.block_start).norm() < kMinTaskDistance) continue;
      const Vec2 u = (inst.goal - inst.block_start).normalized();
      const Vec2 side(-u.y(), u.x());
      inst.agent_start = inst.block_start - rng.uniform(0.1, 0.25) * u + rng.uniform(-0.1, 0.1) * side;
      if (!in_arena(inst.agent_start)) continue;
    }
    out.push_back(inst);
  }
  return out;
}

} // namespace safari::envs
