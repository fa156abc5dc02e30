#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dadp/common.hpp"
#include "dadp/trajectory.hpp"

// Desk-scale dynamic tasks with scripted experts.
//
//   intercept1d   — an object moves along a line at constant velocity toward
//                   a goal line; the agent must be at the object's position
//                   at the moment it arrives. Timing-critical: arriving late
//                   is an unconditional failure.
//   rollingball2d — a ball decelerates under linear friction on a plane; the
//                   agent must match its position and velocity to capture
//                   it, then carry it to a goal.
//
// Dynamics are explicit Euler at the control timestep. Actions are position
// deltas, clamped to a per-step maximum so that lost time cannot be bought
// back with arbitrarily large motions.

namespace dadp {

enum class TaskId { intercept1d, rollingball2d };

inline std::string task_name(TaskId id) {
  return id == TaskId::intercept1d ? "intercept1d" : "rollingball2d";
}

inline TaskId task_from_name(const std::string& name) {
  if (name == "intercept1d") return TaskId::intercept1d;
  if (name == "rollingball2d") return TaskId::rollingball2d;
  throw usage_error("unknown task '" + name + "' (expected intercept1d or rollingball2d)");
}

struct TaskSpec {
  TaskId id = TaskId::intercept1d;

  // shared
  double success_eps = 0.12;   // success tolerance, task units
  double horizon = 6.0;        // episode horizon, seconds
  double action_clamp = 0.8;   // max per-step displacement per coordinate

  // intercept1d: object starts at x0 ~ U[x0_min, x0_max], moves with
  // v ~ U[v_min, v_max] toward goal_x; the agent starts at 0.
  double x0_min = 1.0, x0_max = 2.0;
  double v_min = 0.5, v_max = 0.9;
  double goal_x = 3.0;

  // rollingball2d: ball spawns in [spawn_min, spawn_max]^2 with a random
  // heading and speed ~ U[speed_min, speed_max], decaying under friction.
  double spawn_min = 1.0, spawn_max = 1.5;
  double speed_min = 0.5, speed_max = 0.8;
  double friction = 0.35;          // per-second decay rate
  double capture_eps = 0.10;       // position tolerance for pickup
  double capture_vel_tol = 0.6;    // velocity-match tolerance for pickup
  double goal_ax = 2.5, goal_ay = 2.5;
  double goal_eps = 0.15;

  std::size_t state_dim() const { return id == TaskId::intercept1d ? 3 : 7; }
  std::size_t action_dim() const { return id == TaskId::intercept1d ? 1 : 2; }

  void check() const {
    if (!(success_eps > 0.0)) throw usage_error("task: success_eps must be > 0");
    if (!(horizon > 0.0)) throw usage_error("task: horizon must be > 0");
    if (!(action_clamp > 0.0)) throw usage_error("task: action_clamp must be > 0");
    if (!(x0_min < x0_max) || !(v_min < v_max) || !(spawn_min < spawn_max) ||
        !(speed_min < speed_max))
      throw usage_error("task: degenerate initial-condition range");
    if (!(v_min > 0.0)) throw usage_error("task: object velocity must be positive");
  }
};

inline TaskSpec default_task_spec(TaskId id) {
  TaskSpec spec;
  spec.id = id;
  if (id == TaskId::rollingball2d) {
    spec.horizon = 10.0;
    spec.success_eps = 0.15;
  }
  return spec;
}

// ---------------------------------------------------------------------------
// Environment state
// ---------------------------------------------------------------------------

struct EnvState {
  std::array<double, 2> agent{0.0, 0.0};
  std::array<double, 2> agent_vel{0.0, 0.0};  // last step displacement / dt
  std::array<double, 2> obj{0.0, 0.0};
  std::array<double, 2> obj_vel{0.0, 0.0};
  double time = 0.0;
  bool captured = false;

  // per-episode constants fixed at reset
  double deadline = 0.0;  // intercept1d: object arrival time at the goal line
  double x0 = 0.0;        // intercept1d initial object position
  double v0 = 0.0;        // intercept1d object velocity
};

/// Deterministic initial state. The rng draw order is fixed, so equal seeds
/// give equal episodes.
inline EnvState reset(const TaskSpec& spec, std::uint64_t seed) {
  spec.check();
  Rng rng(derive_seed(seed, 0x5eedu));
  EnvState s;
  if (spec.id == TaskId::intercept1d) {
    s.x0 = rng.uniform(spec.x0_min, spec.x0_max);
    s.v0 = rng.uniform(spec.v_min, spec.v_max);
    s.obj = {s.x0, 0.0};
    s.obj_vel = {s.v0, 0.0};
    s.deadline = (spec.goal_x - s.x0) / s.v0;
  } else {
    const double bx = rng.uniform(spec.spawn_min, spec.spawn_max);
    const double by = rng.uniform(spec.spawn_min, spec.spawn_max);
    const double speed = rng.uniform(spec.speed_min, spec.speed_max);
    const double angle = rng.uniform(0.0, 6.283185307179586);
    s.obj = {bx, by};
    s.obj_vel = {speed * std::cos(angle), speed * std::sin(angle)};
  }
  return s;
}

namespace detail {

/// Advances only the object by dt (Euler). Used by step() and by the
/// delayed-execution hold, which moves the world while the agent waits.
inline void advance_object(EnvState& s, double dt, const TaskSpec& spec) {
  if (spec.id == TaskId::intercept1d) {
    s.obj[0] += s.obj_vel[0] * dt;
  } else if (s.captured) {
    s.obj = s.agent;  // carried
    s.obj_vel = s.agent_vel;
  } else {
    s.obj[0] += s.obj_vel[0] * dt;
    s.obj[1] += s.obj_vel[1] * dt;
    const double decay = std::max(0.0, 1.0 - spec.friction * dt);
    s.obj_vel[0] *= decay;
    s.obj_vel[1] *= decay;
  }
  s.time += dt;
}

inline double dist2(const std::array<double, 2>& a, const std::array<double, 2>& b) {
  return std::hypot(a[0] - b[0], a[1] - b[1]);
}

}  // namespace detail

/// One control step: the agent moves by the clamped delta action, the object
/// advances by its own dynamics, time moves by dt. Capture is checked after
/// both have moved.
inline EnvState step(const EnvState& state, std::span<const double> action, double dt,
                     const TaskSpec& spec) {
  if (action.size() != spec.action_dim()) throw data_error("step: action dimension mismatch");
  for (double a : action)
    if (!std::isfinite(a)) throw numerical_error("step: non-finite action");

  EnvState s = state;
  const std::size_t da = spec.action_dim();
  for (std::size_t d = 0; d < da; ++d) {
    const double delta = std::clamp(action[d], -spec.action_clamp, spec.action_clamp);
    s.agent[d] += delta;
    s.agent_vel[d] = delta / dt;
  }
  detail::advance_object(s, dt, spec);

  if (spec.id == TaskId::rollingball2d && !s.captured) {
    const double pos_gap = detail::dist2(s.agent, s.obj);
    const double vel_gap = std::hypot(s.agent_vel[0] - s.obj_vel[0], s.agent_vel[1] - s.obj_vel[1]);
    if (pos_gap <= spec.capture_eps && vel_gap <= spec.capture_vel_tol) {
      s.captured = true;
      s.obj = s.agent;
      s.obj_vel = s.agent_vel;
    }
  }
  return s;
}

/// Object position at absolute time t, closed form (intercept1d only).
inline double object_position_at(const EnvState& s, double t) {
  return s.x0 + s.v0 * t;
}

/// The observation exposed to policies.
///   intercept1d:   [agent_x, obj_x, obj_v]
///   rollingball2d: [agent_x, agent_y, ball_x, ball_y, ball_vx, ball_vy, captured]
inline std::vector<double> state_vector(const EnvState& s, const TaskSpec& spec) {
  if (spec.id == TaskId::intercept1d) return {s.agent[0], s.obj[0], s.obj_vel[0]};
  return {s.agent[0], s.agent[1], s.obj[0], s.obj[1], s.obj_vel[0], s.obj_vel[1],
          s.captured ? 1.0 : 0.0};
}

/// Success predicate.
///   intercept1d:   |agent - object| <= eps, with the state taken at the
///                  object's arrival time (the caller owns that timing).
///   rollingball2d: ball captured and held within goal_eps of the goal.
inline bool success(const EnvState& s, const TaskSpec& spec) {
  if (spec.id == TaskId::intercept1d)
    return std::abs(s.agent[0] - object_position_at(s, s.deadline)) <= spec.success_eps;
  return s.captured && std::hypot(s.agent[0] - spec.goal_ax, s.agent[1] - spec.goal_ay) <= spec.goal_eps;
}

// ---------------------------------------------------------------------------
// Scripted experts
// ---------------------------------------------------------------------------

namespace detail {

inline Trajectory expert_intercept1d(const TaskSpec& spec, std::uint64_t seed,
                                     const TimingConfig& cfg) {
  EnvState s = reset(spec, seed);
  // finish on the last full control step before the arrival time, exactly at
  // the point the object will occupy when it arrives
  const std::size_t n = std::size_t(std::floor(s.deadline / cfg.dt));
  if (n < 1) throw data_error("expert_demo: infeasible demo (deadline shorter than one step)");
  const double target = object_position_at(s, s.deadline);
  const double per_step = (target - s.agent[0]) / double(n);
  if (std::abs(per_step) > spec.action_clamp)
    throw data_error("expert_demo: infeasible demo (object too fast for actuation clamp)");

  Trajectory t;
  t.dt = cfg.dt;
  t.meta = {task_name(spec.id), seed, seed};
  t.states.push_back(state_vector(s, spec));
  const std::array<double, 1> act{per_step};
  for (std::size_t i = 0; i < n; ++i) {
    s = step(s, act, cfg.dt, spec);
    t.states.push_back(state_vector(s, spec));
    t.actions.push_back({per_step});
  }
  if (!success(s, spec)) throw data_error("expert_demo: infeasible demo (terminal state misses goal)");
  return t;
}

inline Trajectory expert_rollingball2d(const TaskSpec& spec, std::uint64_t seed,
                                       const TimingConfig& cfg) {
  EnvState s = reset(spec, seed);
  const double cruise = 0.25 * spec.action_clamp;  // per-step travel budget in approach/carry

  // pick the earliest rendezvous step the agent can reach at cruise speed
  std::size_t k_capture = 0;
  {
    EnvState probe = s;
    std::vector<std::array<double, 2>> ball_path{probe.obj};
    const std::size_t max_steps = std::size_t(spec.horizon / cfg.dt);
    for (std::size_t k = 1; k <= max_steps; ++k) {
      advance_object(probe, cfg.dt, spec);
      ball_path.push_back(probe.obj);
    }
    for (std::size_t k = 2; k <= max_steps; ++k) {
      const double reach_dist = dist2(s.agent, ball_path[k - 1]);
      if (reach_dist <= cruise * double(k - 1)) {
        k_capture = k;
        break;
      }
    }
    if (k_capture == 0) throw data_error("expert_demo: infeasible demo (ball out of reach)");
  }

  Trajectory t;
  t.dt = cfg.dt;
  t.meta = {task_name(spec.id), seed, seed};
  t.states.push_back(state_vector(s, spec));
  const std::size_t max_steps = std::size_t(spec.horizon / cfg.dt);

  auto push = [&](std::array<double, 2> delta) {
    s = step(s, delta, cfg.dt, spec);
    t.states.push_back(state_vector(s, spec));
    t.actions.push_back({delta[0], delta[1]});
  };

  for (std::size_t k = 1; k <= max_steps; ++k) {
    if (!s.captured) {
      if (k < k_capture) {
        // straight-line approach to where the ball will be one step before
        // the rendezvous, arriving with steps to spare
        EnvState probe = s;
        for (std::size_t j = k; j < k_capture - 1; ++j) advance_object(probe, cfg.dt, spec);
        const std::size_t steps_left = k_capture - k;
        push({(probe.obj[0] - s.agent[0]) / double(steps_left),
              (probe.obj[1] - s.agent[1]) / double(steps_left)});
      } else {
        // rendezvous step: mirror the ball's own displacement to match
        // position and velocity simultaneously
        push({s.obj_vel[0] * cfg.dt, s.obj_vel[1] * cfg.dt});
      }
    } else {
      const double gx = spec.goal_ax - s.agent[0];
      const double gy = spec.goal_ay - s.agent[1];
      const double d = std::hypot(gx, gy);
      if (d <= spec.goal_eps * 0.5) break;
      const double move = std::min(cruise, d);
      push({gx / d * move, gy / d * move});
    }
  }
  if (!success(s, spec)) throw data_error("expert_demo: infeasible demo (terminal state misses goal)");
  return t;
}

}  // namespace detail

/// A zero-delay demonstration whose final state satisfies the task's success
/// predicate. Throws a data error for initial conditions the scripted expert
/// cannot solve; callers exclude those and report the rate.
inline Trajectory expert_demo(const TaskSpec& spec, std::uint64_t seed, const TimingConfig& cfg) {
  spec.check();
  cfg.check();
  if (spec.id == TaskId::intercept1d) return detail::expert_intercept1d(spec, seed, cfg);
  return detail::expert_rollingball2d(spec, seed, cfg);
}

// ---------------------------------------------------------------------------
// Plain-text task configuration (key = value)
// ---------------------------------------------------------------------------

inline TaskSpec task_spec_from_pairs(TaskId id, const std::map<std::string, std::string>& kv) {
  TaskSpec spec = default_task_spec(id);
  auto num = [](const std::string& v, const std::string& key) {
    try {
      std::size_t pos = 0;
      const double x = std::stod(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return x;
    } catch (const std::exception&) {
      throw usage_error("task config: bad numeric value for '" + key + "': " + v);
    }
  };
  for (const auto& [key, value] : kv) {
    if (key == "task") spec.id = task_from_name(value);
    else if (key == "success_eps") spec.success_eps = num(value, key);
    else if (key == "horizon") spec.horizon = num(value, key);
    else if (key == "action_clamp") spec.action_clamp = num(value, key);
    else if (key == "x0_min") spec.x0_min = num(value, key);
    else if (key == "x0_max") spec.x0_max = num(value, key);
    else if (key == "v_min") spec.v_min = num(value, key);
    else if (key == "v_max") spec.v_max = num(value, key);
    else if (key == "goal_x") spec.goal_x = num(value, key);
    else if (key == "spawn_min") spec.spawn_min = num(value, key);
    else if (key == "spawn_max") spec.spawn_max = num(value, key);
    else if (key == "speed_min") spec.speed_min = num(value, key);
    else if (key == "speed_max") spec.speed_max = num(value, key);
    else if (key == "friction") spec.friction = num(value, key);
    else if (key == "capture_eps") spec.capture_eps = num(value, key);
    else if (key == "capture_vel_tol") spec.capture_vel_tol = num(value, key);
    else if (key == "goal_ax") spec.goal_ax = num(value, key);
    else if (key == "goal_ay") spec.goal_ay = num(value, key);
    else if (key == "goal_eps") spec.goal_eps = num(value, key);
    else throw usage_error("task config: unknown key '" + key + "'");
  }
  spec.check();
  return spec;
}

}  // namespace dadp
