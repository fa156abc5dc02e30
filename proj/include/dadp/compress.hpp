#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "dadp/common.hpp"
#include "dadp/trajectory.hpp"

// Delay compensation by trajectory compression.
//
// A chunked controller that needs `delta` seconds of inference per chunk of
// h_act actions finishes n actions at n*dt + (ceil(n/h_act)-1)*delta — later
// than the demonstrated n*dt. The transform here shortens a demonstration to
// N' steps by skipping source states at chunk boundaries so that delayed
// execution still terminates at the original final state on the original
// schedule.

namespace dadp {

/// Continuous-time corrected trajectory length:
///   n' = (n*dt + delta) / (dt + delta/h_act)
inline double adjusted_length(std::size_t n, const TimingConfig& cfg) {
  if (n == 0) throw data_error("adjusted_length: empty trajectory");
  cfg.check();
  return (double(n) * cfg.dt + cfg.delta) / (cfg.dt + cfg.delta / double(cfg.h_act));
}

/// Uniform per-boundary skip in continuous time: m = delta/dt.
inline double skip_amount_continuous(const TimingConfig& cfg) {
  cfg.check();
  return cfg.delta / cfg.dt;
}

/// Integer skip counts for n -> n_prime, one entry per chunk boundary.
/// Each boundary gets floor(total/boundaries); the residual goes to the last
/// boundary. With zero boundaries the total collapses into a single entry
/// placed before the terminal state.
inline std::vector<long> skip_schedule_for(std::size_t n, std::size_t n_prime,
                                           const TimingConfig& cfg) {
  if (n_prime > n) throw data_error("skip_schedule_for: n_prime exceeds n");
  const long total = long(n - n_prime);
  const long boundaries = long(chunk_count(n_prime, cfg.h_act)) - 1;
  if (boundaries <= 0) {
    if (total > 0) return {total};
    return {};
  }
  std::vector<long> sched(std::size_t(boundaries), total / boundaries);
  sched.back() += total - (total / boundaries) * boundaries;
  return sched;
}

struct LengthChoice {
  std::size_t n_prime = 0;
  std::vector<long> skip_schedule;
  bool tail_collapsed = false;  // skips had nowhere to go but before s_n
  double exec_time = 0.0;       // dp_execution_time(n_prime)
};

namespace detail {

// |err| comparison with the early-preference rule: strictly smaller wins,
// near-ties go to the candidate that does not overshoot the target.
inline bool better_choice(double err_a, double err_b, double tol) {
  const double d = std::abs(err_a) - std::abs(err_b);
  if (d < -tol) return true;
  if (d > tol) return false;
  return err_a <= 0.0 && err_b > 0.0;
}

}  // namespace detail

/// Picks the integer compressed length N'.
///
/// The floor/ceil pair around the continuous solution is tried first; when
/// neither lands exactly on the target duration, the search widens to the
/// global minimizer of |execution time - target| over [1, n] (the execution
/// time is strictly increasing in N', so the optimum brackets the crossing
/// point). Near-ties prefer arriving early over arriving late.
inline LengthChoice choose_integer_length(std::size_t n, const TimingConfig& cfg) {
  if (n == 0) throw data_error("choose_integer_length: empty trajectory");
  cfg.check();

  LengthChoice out;
  if (cfg.delta <= 0.0 || n <= std::size_t(cfg.h_act)) {
    // single chunk or no delay: nothing to compensate
    out.n_prime = n;
    out.skip_schedule.assign(chunk_count(n, cfg.h_act) > 0 ? chunk_count(n, cfg.h_act) - 1 : 0, 0);
    out.exec_time = dp_execution_time(n, cfg);
    return out;
  }

  const double target = double(n) * cfg.dt;
  const double tol = 1e-9 * std::max(cfg.dt, cfg.delta);
  auto err_at = [&](std::size_t np) { return dp_execution_time(np, cfg) - target; };

  const double n_cont = adjusted_length(n, cfg);
  std::size_t best = std::clamp<std::size_t>(std::size_t(std::floor(n_cont)), 1, n);
  double best_err = err_at(best);
  {
    const std::size_t up = std::clamp<std::size_t>(std::size_t(std::ceil(n_cont)), 1, n);
    if (up != best) {
      const double e = err_at(up);
      if (detail::better_choice(e, best_err, tol)) {
        best = up;
        best_err = e;
      }
    }
  }

  if (std::abs(best_err) > tol) {
    // The continuous formula assumes h_act divides N'; when the rounded pair
    // misses the balance, bracket the crossing of the (monotone) execution
    // time instead and keep whichever neighbour is closer.
    std::size_t lo = 1, hi = n;
    while (lo < hi) {
      const std::size_t mid = lo + (hi - lo) / 2;
      if (err_at(mid) >= -tol) hi = mid;
      else lo = mid + 1;
    }
    for (std::size_t cand : {lo > 1 ? lo - 1 : lo, lo}) {
      const double e = err_at(cand);
      if (detail::better_choice(e, best_err, tol)) {
        best = cand;
        best_err = e;
      }
    }
  }

  out.n_prime = best;
  out.skip_schedule = skip_schedule_for(n, best, cfg);
  out.tail_collapsed =
      (chunk_count(best, cfg.h_act) <= 1) && !out.skip_schedule.empty() && out.skip_schedule[0] > 0;
  out.exec_time = dp_execution_time(best, cfg);
  return out;
}

// ---------------------------------------------------------------------------
// Compression
// ---------------------------------------------------------------------------

struct CompressedTrajectory {
  Trajectory traj;                   // N' actions, N'+1 states
  std::size_t source_len = 0;        // n of the source
  double delta = 0.0;                // the delay this was built for
  std::vector<long> skip_schedule;   // per chunk boundary
  std::vector<std::size_t> index_map;  // source index j for each i in [0, N']
  bool tail_collapsed = false;
};

/// Maps a zero-delay trajectory onto its delay-compensated counterpart.
///
/// States are taken from the source at indices that jump ahead by the skip
/// schedule at each chunk boundary; the terminal state is pinned to the
/// source's final state; actions are recomputed as state deltas. Optional
/// smoothing applies a centered window-3 moving average to interior states
/// (endpoints fixed) before actions are derived; it is a no-op when nothing
/// was skipped, so zero-delay compression stays an exact identity.
inline CompressedTrajectory compress(const Trajectory& traj, const TimingConfig& cfg,
                                     bool smooth = false) {
  if (auto issue = validate(traj)) throw data_error("compress: invalid trajectory: " + issue->what);
  if (traj.n() == 0) throw data_error("compress: empty trajectory");
  if (std::abs(traj.dt - cfg.dt) > 1e-12)
    throw data_error("compress: timing dt differs from trajectory dt");

  const std::size_t n = traj.n();
  LengthChoice choice = choose_integer_length(n, cfg);
  const double target = double(n) * cfg.dt;
  if (choice.exec_time > target + cfg.dt + 1e-9 * std::max(cfg.dt, cfg.delta)) {
    throw data_error("compress: trajectory unreachable within budget (needs " +
                     format_compact(choice.exec_time) + " s > " +
                     format_compact(target + cfg.dt) + " s)");
  }

  const std::size_t np = choice.n_prime;
  CompressedTrajectory out;
  out.source_len = n;
  out.delta = cfg.delta;
  out.skip_schedule = choice.skip_schedule;
  out.tail_collapsed = choice.tail_collapsed;

  // cumulative skips at or before each index; boundary r sits before index r*h_act
  out.index_map.resize(np + 1);
  const std::size_t boundaries = choice.tail_collapsed ? 0 : choice.skip_schedule.size();
  std::size_t cursor = 0, applied = 0;
  for (std::size_t i = 0; i <= np; ++i) {
    while (applied < boundaries && i >= (applied + 1) * std::size_t(cfg.h_act)) {
      cursor += std::size_t(choice.skip_schedule[applied]);
      ++applied;
    }
    out.index_map[i] = i + cursor;
  }
  out.index_map[np] = n;  // terminal state is always the source terminal

  out.traj.dt = traj.dt;
  out.traj.meta = traj.meta;
  out.traj.states.resize(np + 1);
  for (std::size_t i = 0; i <= np; ++i) out.traj.states[i] = traj.states[out.index_map[i]];

  const bool skipped = np < n;
  if (smooth && skipped && np >= 2) {
    std::vector<std::vector<double>> smoothed = out.traj.states;
    for (std::size_t i = 1; i < np; ++i) {
      for (std::size_t d = 0; d < traj.state_dim(); ++d) {
        smoothed[i][d] = (out.traj.states[i - 1][d] + out.traj.states[i][d] +
                          out.traj.states[i + 1][d]) / 3.0;
      }
    }
    out.traj.states = std::move(smoothed);
  }

  const std::size_t da = traj.action_dim();
  out.traj.actions.assign(np, std::vector<double>(da));
  for (std::size_t i = 0; i < np; ++i)
    for (std::size_t d = 0; d < da; ++d)
      out.traj.actions[i][d] = out.traj.states[i + 1][d] - out.traj.states[i][d];

  return out;
}

// ---------------------------------------------------------------------------
// Dataset construction
// ---------------------------------------------------------------------------

struct BuildFailure {
  std::size_t traj_index = 0;
  double delta = 0.0;
  std::string reason;
};

struct BuildResult {
  Dataset dataset;
  std::vector<BuildFailure> failures;
};

/// Compresses every trajectory once per delay value and pools the results
/// into one labelled dataset. Zero-delay entries are the uncompressed
/// originals. Per-pair failures are reported, not thrown.
inline BuildResult build_delay_dataset(const std::vector<Trajectory>& trajs,
                                       const std::vector<double>& deltas,
                                       const TimingConfig& cfg, bool smooth = false) {
  if (deltas.empty()) throw usage_error("build_delay_dataset: no delays given");
  for (double d : deltas)
    if (d < 0.0) throw usage_error("build_delay_dataset: negative delay");

  BuildResult out;
  for (double d : deltas) {
    TimingConfig c = cfg;
    c.delta = d;
    for (std::size_t i = 0; i < trajs.size(); ++i) {
      if (d == 0.0) {
        out.dataset.entries.push_back({trajs[i], 0.0});
        continue;
      }
      try {
        out.dataset.entries.push_back({compress(trajs[i], c, smooth).traj, d});
      } catch (const Error& e) {
        out.failures.push_back({i, d, e.what()});
      }
    }
  }
  out.dataset.norm = compute_normalization(out.dataset);
  return out;
}

}  // namespace dadp
