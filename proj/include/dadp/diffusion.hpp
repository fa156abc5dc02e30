#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dadp/common.hpp"
#include "dadp/trajectory.hpp"

// Denoising diffusion policy over action chunks, conditioned on an
// observation window and a normalized inference-delay feature. The denoiser
// is a fully connected network (two hidden layers, SiLU) over the flattened
// chunk, with a sinusoidal embedding of the diffusion step and a learned
// encoding of the conditioning vector. Gradients are analytic; training is
// SGD with momentum under a warmup + cosine-decay learning rate.

namespace dadp {

// ---------------------------------------------------------------------------
// Noise schedule
// ---------------------------------------------------------------------------

struct NoiseSchedule {
  int steps = 0;                    // K
  double beta_start = 1e-4;
  double beta_end = 0.02;
  std::vector<double> beta;         // beta[k-1] for step k in [1, K]
  std::vector<double> alpha;        // 1 - beta
  std::vector<double> alpha_bar;    // cumulative product of alpha

  double alpha_bar_at(int k) const { return alpha_bar[std::size_t(k - 1)]; }
  double alpha_bar_prev(int k) const { return k > 1 ? alpha_bar[std::size_t(k - 2)] : 1.0; }
};

/// Linear beta ramp over K steps. K=1 uses beta_start alone.
inline NoiseSchedule make_schedule(int steps, double beta_start = 1e-4, double beta_end = 0.02) {
  if (steps < 1) throw usage_error("make_schedule: need at least one step");
  if (!(beta_start > 0.0) || !(beta_end < 1.0) || beta_start > beta_end)
    throw usage_error("make_schedule: need 0 < beta_start <= beta_end < 1");
  NoiseSchedule s;
  s.steps = steps;
  s.beta_start = beta_start;
  s.beta_end = beta_end;
  s.beta.resize(std::size_t(steps));
  s.alpha.resize(std::size_t(steps));
  s.alpha_bar.resize(std::size_t(steps));
  double prod = 1.0;
  for (int k = 0; k < steps; ++k) {
    const double b =
        steps == 1 ? beta_start : beta_start + (beta_end - beta_start) * double(k) / double(steps - 1);
    s.beta[std::size_t(k)] = b;
    s.alpha[std::size_t(k)] = 1.0 - b;
    prod *= 1.0 - b;
    s.alpha_bar[std::size_t(k)] = prod;
  }
  return s;
}

/// q(a_k | a_0): sqrt(abar_k) * a + sqrt(1 - abar_k) * eps.
inline std::vector<double> forward_diffuse(std::span<const double> a, std::span<const double> eps,
                                           int k, const NoiseSchedule& sched) {
  if (k < 1 || k > sched.steps) throw usage_error("forward_diffuse: step out of range");
  if (a.size() != eps.size()) throw data_error("forward_diffuse: shape mismatch");
  const double ab = sched.alpha_bar_at(k);
  const double cs = std::sqrt(ab), cn = std::sqrt(1.0 - ab);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = cs * a[i] + cn * eps[i];
  return out;
}

// ---------------------------------------------------------------------------
// Conditioning
// ---------------------------------------------------------------------------

/// Normalized observation window with the delay feature appended.
struct Conditioning {
  std::vector<double> values;  // h_obs * state_dim + 1
};

/// Builds the conditioning vector: each window state is normalized per
/// dimension, the delay is scaled by the training set's maximum (0 -> 0).
/// Models trained without delay conditioning zero the feature instead.
inline Conditioning condition_augment(const std::vector<std::vector<double>>& obs_window,
                                      double delta, const Normalization& norm, double delta_max,
                                      bool delta_conditioned = true) {
  if (delta < 0.0) throw usage_error("condition_augment: negative delay");
  Conditioning c;
  c.values.reserve(obs_window.size() * (obs_window.empty() ? 0 : obs_window.front().size()) + 1);
  for (const auto& s : obs_window) {
    if (s.size() != norm.state_mean.size())
      throw data_error("condition_augment: observation dimension mismatch");
    for (std::size_t d = 0; d < s.size(); ++d)
      c.values.push_back((s[d] - norm.state_mean[d]) / norm.state_scale[d]);
  }
  const double feat = (delta_conditioned && delta_max > 0.0) ? delta / delta_max : 0.0;
  c.values.push_back(delta_conditioned ? feat : 0.0);
  return c;
}

// ---------------------------------------------------------------------------
// Denoiser network
// ---------------------------------------------------------------------------

struct DenoiserDims {
  int state_dim = 0;
  int action_dim = 0;
  int h_act = 8;
  int h_obs = 2;
  int width = 256;      // hidden layer width
  int cond_dim = 64;    // conditioning encoder output
  int embed_dim = 32;   // sinusoidal step embedding (even)

  int chunk() const { return h_act * action_dim; }
  int cond_in() const { return h_obs * state_dim + 1; }  // + delay feature
  int trunk_in() const { return chunk() + embed_dim + cond_dim; }

  void check() const {
    if (state_dim < 1 || action_dim < 1 || h_act < 1 || h_obs < 1 || width < 1 || cond_dim < 1 ||
        embed_dim < 2 || embed_dim % 2 != 0)
      throw usage_error("denoiser dims invalid");
  }
};

/// All weights in one flat vector; layer views are computed from the dims.
/// Keeps checkpointing, SGD and finite-difference checks trivial.
struct DenoiserParams {
  DenoiserDims dims;
  std::vector<double> flat;

  // layout: We [C x Cin], be [C], W1 [W x X], b1 [W], W2 [W x W], b2 [W],
  //         W3 [A x W], b3 [A]
  std::size_t offset_we() const { return 0; }
  std::size_t offset_be() const { return offset_we() + std::size_t(dims.cond_dim) * dims.cond_in(); }
  std::size_t offset_w1() const { return offset_be() + std::size_t(dims.cond_dim); }
  std::size_t offset_b1() const { return offset_w1() + std::size_t(dims.width) * dims.trunk_in(); }
  std::size_t offset_w2() const { return offset_b1() + std::size_t(dims.width); }
  std::size_t offset_b2() const { return offset_w2() + std::size_t(dims.width) * dims.width; }
  std::size_t offset_w3() const { return offset_b2() + std::size_t(dims.width); }
  std::size_t offset_b3() const { return offset_w3() + std::size_t(dims.chunk()) * dims.width; }
  std::size_t size() const { return offset_b3() + std::size_t(dims.chunk()); }
};

/// He-style normal init, biases zero.
inline DenoiserParams init_params(const DenoiserDims& dims, Rng& rng) {
  dims.check();
  DenoiserParams p;
  p.dims = dims;
  p.flat.assign(p.size(), 0.0);
  auto fill = [&](std::size_t off, std::size_t rows, std::size_t cols) {
    const double sd = 1.0 / std::sqrt(double(cols));
    for (std::size_t i = 0; i < rows * cols; ++i) p.flat[off + i] = sd * rng.normal();
  };
  fill(p.offset_we(), std::size_t(dims.cond_dim), std::size_t(dims.cond_in()));
  fill(p.offset_w1(), std::size_t(dims.width), std::size_t(dims.trunk_in()));
  fill(p.offset_w2(), std::size_t(dims.width), std::size_t(dims.width));
  fill(p.offset_w3(), std::size_t(dims.chunk()), std::size_t(dims.width));
  return p;
}

inline void step_embedding(int k, int embed_dim, double* out) {
  const int half = embed_dim / 2;
  for (int j = 0; j < half; ++j) {
    const double freq = std::exp(-std::log(10000.0) * double(j) / double(half));
    out[j] = std::sin(double(k) * freq);
    out[half + j] = std::cos(double(k) * freq);
  }
}

inline double silu(double z) { return z / (1.0 + std::exp(-z)); }
inline double silu_grad(double z) {
  const double s = 1.0 / (1.0 + std::exp(-z));
  return s * (1.0 + z * (1.0 - s));
}

/// Scratch activations, reused across calls.
struct DenoiserWorkspace {
  std::vector<double> cond_in;             // encoder input (saved for backward)
  std::vector<double> cond_pre, cond_act;  // encoder pre-activation / output
  std::vector<double> x;                   // trunk input
  std::vector<double> h1_pre, h1, h2_pre, h2;
  std::vector<double> out;
  std::vector<double> d_h2, d_h1, d_x, d_cond;

  void resize(const DenoiserDims& d) {
    cond_in.resize(std::size_t(d.cond_in()));
    cond_pre.resize(std::size_t(d.cond_dim));
    cond_act.resize(std::size_t(d.cond_dim));
    x.resize(std::size_t(d.trunk_in()));
    h1_pre.resize(std::size_t(d.width));
    h1.resize(std::size_t(d.width));
    h2_pre.resize(std::size_t(d.width));
    h2.resize(std::size_t(d.width));
    out.resize(std::size_t(d.chunk()));
    d_h2.resize(std::size_t(d.width));
    d_h1.resize(std::size_t(d.width));
    d_x.resize(std::size_t(d.trunk_in()));
    d_cond.resize(std::size_t(d.cond_dim));
  }
};

namespace detail {

inline void affine(const double* w, const double* b, const double* in, std::size_t rows,
                   std::size_t cols, double* out) {
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = b[r];
    const double* wr = w + r * cols;
    for (std::size_t c = 0; c < cols; ++c) acc += wr[c] * in[c];
    out[r] = acc;
  }
}

}  // namespace detail

/// Predicted noise for one (noisy chunk, step, conditioning) triple.
/// The result lives in ws.out until the next call.
inline std::span<const double> denoiser_forward(const DenoiserParams& p,
                                                std::span<const double> noisy_chunk, int k,
                                                std::span<const double> cond,
                                                DenoiserWorkspace& ws) {
  const DenoiserDims& d = p.dims;
  if (noisy_chunk.size() != std::size_t(d.chunk())) throw data_error("denoiser: chunk shape mismatch");
  if (cond.size() != std::size_t(d.cond_in())) throw data_error("denoiser: conditioning shape mismatch");
  ws.resize(d);
  const double* f = p.flat.data();

  std::copy(cond.begin(), cond.end(), ws.cond_in.begin());
  detail::affine(f + p.offset_we(), f + p.offset_be(), ws.cond_in.data(), std::size_t(d.cond_dim),
                 std::size_t(d.cond_in()), ws.cond_pre.data());
  for (int i = 0; i < d.cond_dim; ++i) ws.cond_act[std::size_t(i)] = silu(ws.cond_pre[std::size_t(i)]);

  std::copy(noisy_chunk.begin(), noisy_chunk.end(), ws.x.begin());
  step_embedding(k, d.embed_dim, ws.x.data() + d.chunk());
  std::copy(ws.cond_act.begin(), ws.cond_act.end(), ws.x.begin() + d.chunk() + d.embed_dim);

  detail::affine(f + p.offset_w1(), f + p.offset_b1(), ws.x.data(), std::size_t(d.width),
                 std::size_t(d.trunk_in()), ws.h1_pre.data());
  for (int i = 0; i < d.width; ++i) ws.h1[std::size_t(i)] = silu(ws.h1_pre[std::size_t(i)]);
  detail::affine(f + p.offset_w2(), f + p.offset_b2(), ws.h1.data(), std::size_t(d.width),
                 std::size_t(d.width), ws.h2_pre.data());
  for (int i = 0; i < d.width; ++i) ws.h2[std::size_t(i)] = silu(ws.h2_pre[std::size_t(i)]);
  detail::affine(f + p.offset_w3(), f + p.offset_b3(), ws.h2.data(), std::size_t(d.chunk()),
                 std::size_t(d.width), ws.out.data());
  return ws.out;
}

/// Backprop for the item most recently run through denoiser_forward, given
/// d(loss)/d(out); parameter gradients accumulate into grad.
inline void denoiser_backward(const DenoiserParams& p, std::span<const double> d_out,
                              DenoiserWorkspace& ws, std::vector<double>& grad) {
  const DenoiserDims& d = p.dims;
  const double* f = p.flat.data();
  double* g = grad.data();
  const std::size_t W = std::size_t(d.width), X = std::size_t(d.trunk_in());
  const std::size_t A = std::size_t(d.chunk()), C = std::size_t(d.cond_dim);
  const std::size_t Cin = std::size_t(d.cond_in());

  // out = W3 h2 + b3
  for (std::size_t r = 0; r < A; ++r) {
    const double dr = d_out[r];
    double* gw = g + p.offset_w3() + r * W;
    for (std::size_t c = 0; c < W; ++c) gw[c] += dr * ws.h2[c];
    g[p.offset_b3() + r] += dr;
  }
  std::fill(ws.d_h2.begin(), ws.d_h2.end(), 0.0);
  for (std::size_t r = 0; r < A; ++r) {
    const double dr = d_out[r];
    const double* wr = f + p.offset_w3() + r * W;
    for (std::size_t c = 0; c < W; ++c) ws.d_h2[c] += dr * wr[c];
  }
  for (std::size_t c = 0; c < W; ++c) ws.d_h2[c] *= silu_grad(ws.h2_pre[c]);

  // h2 = silu(W2 h1 + b2)
  for (std::size_t r = 0; r < W; ++r) {
    const double dr = ws.d_h2[r];
    double* gw = g + p.offset_w2() + r * W;
    for (std::size_t c = 0; c < W; ++c) gw[c] += dr * ws.h1[c];
    g[p.offset_b2() + r] += dr;
  }
  std::fill(ws.d_h1.begin(), ws.d_h1.end(), 0.0);
  for (std::size_t r = 0; r < W; ++r) {
    const double dr = ws.d_h2[r];
    const double* wr = f + p.offset_w2() + r * W;
    for (std::size_t c = 0; c < W; ++c) ws.d_h1[c] += dr * wr[c];
  }
  for (std::size_t c = 0; c < W; ++c) ws.d_h1[c] *= silu_grad(ws.h1_pre[c]);

  // h1 = silu(W1 x + b1)
  for (std::size_t r = 0; r < W; ++r) {
    const double dr = ws.d_h1[r];
    double* gw = g + p.offset_w1() + r * X;
    for (std::size_t c = 0; c < X; ++c) gw[c] += dr * ws.x[c];
    g[p.offset_b1() + r] += dr;
  }
  std::fill(ws.d_x.begin(), ws.d_x.end(), 0.0);
  for (std::size_t r = 0; r < W; ++r) {
    const double dr = ws.d_h1[r];
    const double* wr = f + p.offset_w1() + r * X;
    for (std::size_t c = 0; c < X; ++c) ws.d_x[c] += dr * wr[c];
  }

  // encoder branch: trunk input tail = silu(We cond + be)
  for (std::size_t c = 0; c < C; ++c)
    ws.d_cond[c] = ws.d_x[A + std::size_t(d.embed_dim) + c] * silu_grad(ws.cond_pre[c]);
  for (std::size_t r = 0; r < C; ++r) {
    const double dr = ws.d_cond[r];
    double* gw = g + p.offset_we() + r * Cin;
    for (std::size_t c = 0; c < Cin; ++c) gw[c] += dr * ws.cond_in[c];
    g[p.offset_be() + r] += dr;
  }
}

// ---------------------------------------------------------------------------
// Training samples
// ---------------------------------------------------------------------------

/// One training window: normalized observation stack, normalized action
/// chunk (flat), loss mask (0 for tail padding), raw delay label.
struct TrainingWindow {
  std::vector<double> obs_norm;
  std::vector<double> chunk_norm;
  std::vector<double> mask;
  double delta = 0.0;
};

/// Sliding windows with stride 1 over every labelled trajectory. The
/// observation stack repeats the first state at the front edge; chunks that
/// overrun the trajectory repeat the last action and are masked out of the
/// loss.
inline std::vector<TrainingWindow> slice_windows(const Dataset& ds, int h_act, int h_obs) {
  std::vector<TrainingWindow> windows;
  ds.norm.check();
  for (const auto& e : ds.entries) {
    const Trajectory& t = e.traj;
    const std::size_t n = t.n();
    const std::size_t sd = t.state_dim(), ad = t.action_dim();
    for (std::size_t start = 0; start < n; ++start) {
      TrainingWindow w;
      w.delta = e.delta;
      w.obs_norm.reserve(std::size_t(h_obs) * sd);
      for (int o = h_obs - 1; o >= 0; --o) {
        const std::size_t idx = start >= std::size_t(o) ? start - std::size_t(o) : 0;
        for (std::size_t d = 0; d < sd; ++d)
          w.obs_norm.push_back((t.states[idx][d] - ds.norm.state_mean[d]) / ds.norm.state_scale[d]);
      }
      w.chunk_norm.resize(std::size_t(h_act) * ad);
      w.mask.resize(std::size_t(h_act) * ad);
      for (int j = 0; j < h_act; ++j) {
        const bool in_range = start + std::size_t(j) < n;
        const std::size_t idx = in_range ? start + std::size_t(j) : n - 1;
        for (std::size_t d = 0; d < ad; ++d) {
          w.chunk_norm[std::size_t(j) * ad + d] =
              (t.actions[idx][d] - ds.norm.action_mean[d]) / ds.norm.action_scale[d];
          w.mask[std::size_t(j) * ad + d] = in_range ? 1.0 : 0.0;
        }
      }
      windows.push_back(std::move(w));
    }
  }
  return windows;
}

// ---------------------------------------------------------------------------
// Loss and gradient
// ---------------------------------------------------------------------------

struct BatchItem {
  const TrainingWindow* window = nullptr;
  double delta_feature = 0.0;
};

/// Mean over the batch of ||eps_hat - eps||^2 on unmasked elements, with
/// exact analytic parameter gradients. Per item, a diffusion step and a
/// noise draw come from rng (in batch order, so a fixed seed fixes the
/// loss surface). grad must be zero-filled by the caller.
inline double loss_and_grad(const DenoiserParams& p, const std::vector<BatchItem>& batch,
                            const NoiseSchedule& sched, Rng& rng, std::vector<double>& grad,
                            DenoiserWorkspace& ws) {
  if (batch.empty()) throw usage_error("loss_and_grad: empty batch");
  if (grad.size() != p.flat.size()) throw usage_error("loss_and_grad: gradient size mismatch");
  const DenoiserDims& d = p.dims;
  const std::size_t A = std::size_t(d.chunk());

  std::vector<double> eps(A), noisy(A), cond(std::size_t(d.cond_in())), d_out(A);
  double loss = 0.0;
  const double inv_b = 1.0 / double(batch.size());

  for (std::size_t i = 0; i < batch.size(); ++i) {
    const TrainingWindow& w = *batch[i].window;
    const int k = int(rng.uniform_int(1, sched.steps));
    for (std::size_t j = 0; j < A; ++j) eps[j] = rng.normal();

    const double ab = sched.alpha_bar_at(k);
    const double cs = std::sqrt(ab), cn = std::sqrt(1.0 - ab);
    for (std::size_t j = 0; j < A; ++j) noisy[j] = cs * w.chunk_norm[j] + cn * eps[j];

    std::copy(w.obs_norm.begin(), w.obs_norm.end(), cond.begin());
    cond.back() = batch[i].delta_feature;

    auto out = denoiser_forward(p, noisy, k, cond, ws);
    double item_loss = 0.0;
    for (std::size_t j = 0; j < A; ++j) {
      const double r = (out[j] - eps[j]) * w.mask[j];
      item_loss += r * r;
      d_out[j] = 2.0 * r * w.mask[j] * inv_b;
    }
    if (!std::isfinite(item_loss))
      throw numerical_error("loss_and_grad: non-finite loss at batch index " + std::to_string(i));
    loss += item_loss * inv_b;
    denoiser_backward(p, d_out, ws, grad);
  }
  return loss;
}

// ---------------------------------------------------------------------------
// Model bundle and training
// ---------------------------------------------------------------------------

struct TrainConfig {
  int steps = 2000;
  int batch = 256;
  double lr = 1e-4;
  int warmup = 500;
  double momentum = 0.9;
  int diffusion_steps = 100;   // K
  double beta_start = 1e-4;
  double beta_end = 0.02;
  int width = 256;
  int cond_dim = 64;
  int embed_dim = 32;
  std::uint64_t seed = 0;
  bool delta_conditioned = true;
  double divergence_limit = 1e6;
};

/// Everything needed to run the policy: schedule, weights, normalization,
/// the delay scale, and the horizons it was trained with.
struct DiffusionModel {
  DenoiserParams params;
  NoiseSchedule sched;
  Normalization norm;
  double delta_max = 0.0;
  bool delta_conditioned = true;
  double dt = 0.05;
  int h_act = 8;
  int h_obs = 2;

  double delta_feature(double delta) const {
    if (!delta_conditioned || delta_max <= 0.0) return 0.0;
    return delta / delta_max;
  }
};

struct TrainResult {
  DiffusionModel model;
  std::vector<double> loss_history;  // one entry per step
};

/// Trains a denoiser on all windows of the dataset. Deterministic for a
/// fixed seed: batch indices, diffusion steps and noise are drawn from one
/// stream in a fixed order, and accumulation is sequential.
inline TrainResult train(const Dataset& ds, const TrainConfig& cfg, const TimingConfig& timing,
                         const std::function<void(int, double)>& on_step = nullptr) {
  if (ds.entries.empty()) throw data_error("train: empty dataset");
  timing.check();

  const std::size_t sd = ds.entries.front().traj.state_dim();
  const std::size_t ad = ds.entries.front().traj.action_dim();
  DenoiserDims dims;
  dims.state_dim = int(sd);
  dims.action_dim = int(ad);
  dims.h_act = timing.h_act;
  dims.h_obs = timing.h_obs;
  dims.width = cfg.width;
  dims.cond_dim = cfg.cond_dim;
  dims.embed_dim = cfg.embed_dim;
  dims.check();

  const std::vector<TrainingWindow> windows = slice_windows(ds, timing.h_act, timing.h_obs);
  if (windows.empty()) throw data_error("train: dataset produced no windows");
  const double delta_max = max_delta_label(ds);

  TrainResult result;
  result.model.sched = make_schedule(cfg.diffusion_steps, cfg.beta_start, cfg.beta_end);
  result.model.norm = ds.norm;
  result.model.delta_max = delta_max;
  result.model.delta_conditioned = cfg.delta_conditioned;
  result.model.dt = timing.dt;
  result.model.h_act = timing.h_act;
  result.model.h_obs = timing.h_obs;

  Rng rng(cfg.seed);
  result.model.params = init_params(dims, rng);
  DenoiserParams& params = result.model.params;

  std::vector<double> grad(params.size(), 0.0), velocity(params.size(), 0.0);
  DenoiserWorkspace ws;
  std::vector<BatchItem> batch(std::size_t(cfg.batch));
  result.loss_history.reserve(std::size_t(cfg.steps));

  for (int step = 1; step <= cfg.steps; ++step) {
    for (auto& item : batch) {
      const auto idx = std::size_t(rng.uniform_int(0, std::int64_t(windows.size()) - 1));
      item.window = &windows[idx];
      item.delta_feature = (cfg.delta_conditioned && delta_max > 0.0)
                               ? item.window->delta / delta_max
                               : 0.0;
    }
    std::fill(grad.begin(), grad.end(), 0.0);
    const double loss = loss_and_grad(params, batch, result.model.sched, rng, grad, ws);
    if (!std::isfinite(loss) || loss > cfg.divergence_limit)
      throw numerical_error("train: diverged at step " + std::to_string(step));
    result.loss_history.push_back(loss);
    if (on_step) on_step(step, loss);

    double lr = cfg.lr;
    if (cfg.warmup > 0 && step <= cfg.warmup) {
      lr *= double(step) / double(cfg.warmup);
    } else if (cfg.steps > cfg.warmup) {
      const double progress = double(step - cfg.warmup) / double(cfg.steps - cfg.warmup);
      lr *= 0.5 * (1.0 + std::cos(3.14159265358979323846 * progress));
    }
    for (std::size_t i = 0; i < params.flat.size(); ++i) {
      velocity[i] = cfg.momentum * velocity[i] + grad[i];
      params.flat[i] -= lr * velocity[i];
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

/// Ancestral reverse process from pure noise, every step conditioned on
/// cond. Returns the de-normalized chunk as h_act action vectors.
inline std::vector<std::vector<double>> sample(const DiffusionModel& model, const Conditioning& cond,
                                               Rng& rng) {
  const DenoiserDims& d = model.params.dims;
  const std::size_t A = std::size_t(d.chunk());
  std::vector<double> x(A);
  for (auto& v : x) v = rng.normal();

  DenoiserWorkspace ws;
  const NoiseSchedule& s = model.sched;
  for (int k = s.steps; k >= 1; --k) {
    auto eps_hat = denoiser_forward(model.params, x, k, cond.values, ws);
    const double a = s.alpha[std::size_t(k - 1)];
    const double ab = s.alpha_bar_at(k);
    const double abp = s.alpha_bar_prev(k);
    const double inv_sqrt_a = 1.0 / std::sqrt(a);
    const double coef = (1.0 - a) / std::sqrt(1.0 - ab);
    for (std::size_t j = 0; j < A; ++j) x[j] = inv_sqrt_a * (x[j] - coef * eps_hat[j]);
    if (k > 1) {
      const double sigma = std::sqrt((1.0 - abp) / (1.0 - ab) * (1.0 - a));
      for (std::size_t j = 0; j < A; ++j) x[j] += sigma * rng.normal();
    }
    for (double v : x)
      if (!std::isfinite(v))
        throw numerical_error("sample: non-finite value at reverse step " + std::to_string(k));
  }

  std::vector<std::vector<double>> chunk(std::size_t(d.h_act), std::vector<double>(std::size_t(d.action_dim)));
  for (int j = 0; j < d.h_act; ++j)
    for (int c = 0; c < d.action_dim; ++c) {
      const std::size_t flat = std::size_t(j) * std::size_t(d.action_dim) + std::size_t(c);
      chunk[std::size_t(j)][std::size_t(c)] =
          x[flat] * model.norm.action_scale[std::size_t(c)] + model.norm.action_mean[std::size_t(c)];
    }
  return chunk;
}

// ---------------------------------------------------------------------------
// Checkpoint IO
// ---------------------------------------------------------------------------

inline constexpr char kCheckpointMagic[8] = {'D', 'A', 'D', 'P', 'C', 'K', '0', '1'};
inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

inline void save_model(const DiffusionModel& m, const std::string& path) {
  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw data_error("save_model: cannot open '" + path + "' for writing");

  os.write(kCheckpointMagic, 8);
  io::write_u32(os, kCheckpointFormatVersion);
  const DenoiserDims& d = m.params.dims;
  io::write_u32(os, std::uint32_t(d.state_dim));
  io::write_u32(os, std::uint32_t(d.action_dim));
  io::write_u32(os, std::uint32_t(d.h_act));
  io::write_u32(os, std::uint32_t(d.h_obs));
  io::write_u32(os, std::uint32_t(d.width));
  io::write_u32(os, std::uint32_t(d.cond_dim));
  io::write_u32(os, std::uint32_t(d.embed_dim));
  io::write_u32(os, std::uint32_t(m.delta_conditioned ? 1 : 0));
  io::write_u32(os, std::uint32_t(m.sched.steps));
  io::write_f64(os, m.sched.beta_start);
  io::write_f64(os, m.sched.beta_end);
  io::write_f64(os, m.dt);
  io::write_f64(os, m.delta_max);

  auto write_vec = [&](const std::vector<double>& v) {
    io::write_u64(os, v.size());
    for (double x : v) io::write_f64(os, x);
  };
  write_vec(m.norm.state_mean);
  write_vec(m.norm.state_scale);
  write_vec(m.norm.action_mean);
  write_vec(m.norm.action_scale);
  write_vec(m.params.flat);
  os.flush();
  if (!os) throw data_error("save_model: write failed for '" + path + "'");
}

inline DiffusionModel load_model(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw data_error("load_model: cannot open '" + path + "'");
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw data_error("load_model: '" + path + "' is not a checkpoint");
  const std::uint32_t ver = io::read_u32(is, "header");
  if (ver != kCheckpointFormatVersion)
    throw data_error("load_model: unsupported version " + std::to_string(ver));

  DiffusionModel m;
  DenoiserDims d;
  d.state_dim = int(io::read_u32(is, "header"));
  d.action_dim = int(io::read_u32(is, "header"));
  d.h_act = int(io::read_u32(is, "header"));
  d.h_obs = int(io::read_u32(is, "header"));
  d.width = int(io::read_u32(is, "header"));
  d.cond_dim = int(io::read_u32(is, "header"));
  d.embed_dim = int(io::read_u32(is, "header"));
  m.delta_conditioned = io::read_u32(is, "header") != 0;
  const int K = int(io::read_u32(is, "header"));
  const double bs = io::read_f64(is, "header");
  const double be = io::read_f64(is, "header");
  m.dt = io::read_f64(is, "header");
  m.delta_max = io::read_f64(is, "header");
  m.sched = make_schedule(K, bs, be);
  m.h_act = d.h_act;
  m.h_obs = d.h_obs;

  auto read_vec = [&](std::vector<double>& v, const char* what) {
    const std::uint64_t count = io::read_u64(is, what);
    v.resize(count);
    for (auto& x : v) x = io::read_f64(is, what);
  };
  read_vec(m.norm.state_mean, "normalization");
  read_vec(m.norm.state_scale, "normalization");
  read_vec(m.norm.action_mean, "normalization");
  read_vec(m.norm.action_scale, "normalization");

  m.params.dims = d;
  read_vec(m.params.flat, "parameters");
  if (m.params.flat.size() != m.params.size())
    throw data_error("load_model: parameter payload size mismatch");
  return m;
}

}  // namespace dadp
