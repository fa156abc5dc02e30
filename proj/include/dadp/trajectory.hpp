#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dadp/common.hpp"

namespace dadp {

/// Absolute tolerance for the delta-action consistency check. Actions in this
/// toolkit are constructed as exact state differences, so the slack only has
/// to absorb round-tripping, not numerics.
inline constexpr double kActionConsistencyTol = 1e-9;

struct TrajectoryMeta {
  std::string task;
  std::uint64_t seed = 0;
  std::uint64_t episode = 0;

  bool operator==(const TrajectoryMeta&) const = default;
};

/// A demonstration: n+1 states, n actions, fixed control timestep.
/// Actions are deltas on the actuated coordinates, which by convention are
/// the leading action_dim() components of the state vector.
struct Trajectory {
  std::vector<std::vector<double>> states;
  std::vector<std::vector<double>> actions;
  double dt = 0.05;
  TrajectoryMeta meta;

  std::size_t n() const { return actions.size(); }
  std::size_t state_dim() const { return states.empty() ? 0 : states.front().size(); }
  std::size_t action_dim() const { return actions.empty() ? 0 : actions.front().size(); }

  bool operator==(const Trajectory&) const = default;
};

struct TimingConfig {
  double dt = 0.05;     // control timestep
  double delta = 0.0;   // inference delay, seconds
  int h_act = 8;        // actions per inference chunk
  int h_obs = 2;        // stacked past states fed to the policy

  void check() const {
    if (!(dt > 0.0)) throw usage_error("timing: dt must be > 0");
    if (delta < 0.0) throw usage_error("timing: delta must be >= 0");
    if (h_act < 1) throw usage_error("timing: h_act must be >= 1");
    if (h_obs < 1) throw usage_error("timing: h_obs must be >= 1");
  }
};

/// Number of inference chunks needed for n actions (short final chunk allowed).
inline std::size_t chunk_count(std::size_t n, int h_act) {
  return (n + std::size_t(h_act) - 1) / std::size_t(h_act);
}

/// Duration of the zero-delay demonstration: n * dt.
inline double target_duration(const Trajectory& traj) {
  return double(traj.n()) * traj.dt;
}

/// Wall time of chunked execution with delay: n*dt + (ceil(n/h_act)-1)*delta.
/// The first inference happens before t=0 and is not charged.
inline double dp_execution_time(std::size_t n, const TimingConfig& cfg) {
  if (n == 0) throw data_error("dp_execution_time: empty trajectory");
  cfg.check();
  return double(n) * cfg.dt + double(chunk_count(n, cfg.h_act) - 1) * cfg.delta;
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

struct ValidationIssue {
  std::string what;
  std::ptrdiff_t index = -1;  // offending element, -1 if structural
};

/// Checks all Trajectory invariants; returns the first violation, or nullopt.
inline std::optional<ValidationIssue> validate(const Trajectory& traj) {
  if (traj.states.size() != traj.actions.size() + 1)
    return ValidationIssue{"length mismatch: states must have exactly one more element than actions", -1};
  if (!(traj.dt > 0.0)) return ValidationIssue{"dt must be > 0", -1};

  const std::size_t ds = traj.state_dim();
  for (std::size_t i = 0; i < traj.states.size(); ++i) {
    if (traj.states[i].size() != ds)
      return ValidationIssue{"state dimension mismatch", std::ptrdiff_t(i)};
  }
  const std::size_t da = traj.action_dim();
  if (da > ds) return ValidationIssue{"action dimension exceeds state dimension", -1};
  for (std::size_t i = 0; i < traj.actions.size(); ++i) {
    if (traj.actions[i].size() != da)
      return ValidationIssue{"action dimension mismatch", std::ptrdiff_t(i)};
  }
  for (std::size_t i = 0; i < traj.actions.size(); ++i) {
    for (std::size_t d = 0; d < da; ++d) {
      const double expect = traj.states[i + 1][d] - traj.states[i][d];
      if (std::abs(traj.actions[i][d] - expect) > kActionConsistencyTol)
        return ValidationIssue{"delta-action convention violated", std::ptrdiff_t(i)};
    }
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Dataset
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kDatasetFormatVersion = 1;
inline constexpr double kNormalizationScaleFloor = 1e-8;

/// Per-dimension affine normalization: x_norm = (x - mean) / scale.
struct Normalization {
  std::vector<double> state_mean, state_scale;
  std::vector<double> action_mean, action_scale;

  bool operator==(const Normalization&) const = default;

  void check() const {
    for (double s : state_scale)
      if (!(s > 0.0)) throw data_error("normalization: state scale must be positive");
    for (double s : action_scale)
      if (!(s > 0.0)) throw data_error("normalization: action scale must be positive");
  }
};

/// Delay-labelled trajectories plus the statistics used to normalize them.
struct Dataset {
  struct Entry {
    Trajectory traj;
    double delta = 0.0;  // the inference delay this trajectory was built for

    bool operator==(const Entry&) const = default;
  };

  std::vector<Entry> entries;
  Normalization norm;
  std::uint32_t format_version = kDatasetFormatVersion;

  bool operator==(const Dataset&) const = default;
};

/// Mean / stddev per dimension over every state and action in the dataset.
/// Scales are floored so constant dimensions stay finite under division.
inline Normalization compute_normalization(const Dataset& ds) {
  Normalization norm;
  if (ds.entries.empty()) return norm;
  const std::size_t sd = ds.entries.front().traj.state_dim();
  const std::size_t ad = ds.entries.front().traj.action_dim();

  auto accumulate = [](std::size_t dim, auto&& for_each_vec) {
    std::vector<double> mean(dim, 0.0), m2(dim, 0.0);
    std::size_t count = 0;
    for_each_vec([&](const std::vector<double>& v) {
      ++count;
      for (std::size_t d = 0; d < dim; ++d) {
        const double delta = v[d] - mean[d];
        mean[d] += delta / double(count);
        m2[d] += delta * (v[d] - mean[d]);
      }
    });
    std::vector<double> scale(dim, 1.0);
    if (count > 0) {
      for (std::size_t d = 0; d < dim; ++d)
        scale[d] = std::max(std::sqrt(m2[d] / double(count)), kNormalizationScaleFloor);
    }
    return std::pair(mean, scale);
  };

  auto [sm, ss] = accumulate(sd, [&](auto&& fn) {
    for (const auto& e : ds.entries)
      for (const auto& s : e.traj.states) fn(s);
  });
  auto [am, as] = accumulate(ad, [&](auto&& fn) {
    for (const auto& e : ds.entries)
      for (const auto& a : e.traj.actions) fn(a);
  });
  norm.state_mean = std::move(sm);
  norm.state_scale = std::move(ss);
  norm.action_mean = std::move(am);
  norm.action_scale = std::move(as);
  return norm;
}

/// Largest delay label in the dataset (0 for an all-zero-delay set).
inline double max_delta_label(const Dataset& ds) {
  double m = 0.0;
  for (const auto& e : ds.entries) m = std::max(m, e.delta);
  return m;
}

}  // namespace dadp
