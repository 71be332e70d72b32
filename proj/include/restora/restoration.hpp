#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "restora/degradation.hpp"
#include "restora/flow.hpp"
#include "restora/tensor.hpp"

// Restoration treats the flow prior as a generative path and keeps the
// known pixels on it by mask-guided fusion; there is no explicit data-term
// gradient. For the denoising task the mask is global and time dependent.

namespace restora {

struct RestorationConfig {
  std::size_t n_steps = 64;
  std::size_t corrections = 1;
  std::uint64_t seed = 0;
  bool record_trajectory = false;
};

struct TraceEntry {
  double t = 0.0;
  // Known-region RMSE of the state against z (denoising: whole image).
  double known_rmse = 0.0;
};

struct RestorationReport {
  ImageTensor output;
  std::uint64_t field_evals = 0;
  double wall_time_s = 0.0;
  std::vector<TraceEntry> trace;
};

/// Number of field evaluations restore_masked performs for (N, C).
/// Corrections run at the advanced times Δt, ..., 1-2Δt, i.e. N-2 of them.
constexpr std::uint64_t masked_eval_count(std::size_t n_steps, std::size_t corrections) {
  const std::uint64_t n = n_steps;
  return n + 2 * corrections * (n >= 2 ? n - 2 : 0);
}

/// m * z' + (1 - m) * x with z' = t z + (1 - t) eps (eps fresh), or z' = 0 at t = 0.
inline ImageTensor fuse(const ImageTensor& x, const ImageTensor& z, const BinaryMask& m, double t,
                        SeededRng& rng) {
  require_same_shape(x, z, "fuse");
  require_mask_fits(m, x.shape(), "fuse");
  detail::require_unit_time(t, "fuse");
  const ImageTensor eps = randn(rng, x.shape());
  const std::size_t plane = x.shape().plane();
  ImageTensor out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!m[i % plane]) {
      out[i] = x[i];
    } else if (t > 0.0) {
      out[i] = static_cast<float>(t * static_cast<double>(z[i]) + (1.0 - t) * static_cast<double>(eps[i]));
    } else {
      out[i] = 0.0f;
    }
  }
  return out;
}

namespace detail {

inline double masked_rmse(const ImageTensor& x, const ImageTensor& z, const BinaryMask& m) {
  const std::size_t plane = x.shape().plane();
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!m[i % plane]) continue;
    const double r = static_cast<double>(x[i]) - static_cast<double>(z[i]);
    acc += r * r;
    ++n;
  }
  return n ? std::sqrt(acc / static_cast<double>(n)) : 0.0;
}

inline void require_finite_state(const ImageTensor& x, std::size_t step) {
  if (!x.all_finite()) {
    throw NumericalError("restoration: non-finite state at step " + std::to_string(step));
  }
}

inline double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace detail

/// Mask-guided sampling with trajectory correction (inpainting and SR).
///
/// Time is the grid index i (t = i/N). Each outer iteration runs passes
/// c = 0..C: fuse at t, Euler-step to t+Δt. Pass 0 advances t. Later passes
/// project the stepped state to t=1, renoise it back to the current t and
/// leave t unchanged, except at t = 1-Δt where the step itself is final and
/// advances t to 1. C = 0 is the naive fuse-then-step baseline.
inline RestorationReport restore_masked(const VelocityField& f, const Observation& obs,
                                        const RestorationConfig& cfg) {
  if (obs.task.is_denoise()) throw ConfigError("restore_masked: denoising task routed to masked restoration");
  if (cfg.n_steps == 0) throw ConfigError("restore_masked: need at least one ODE step");
  require_mask_fits(obs.m, obs.z.shape(), "restore_masked");
  const auto start = std::chrono::steady_clock::now();

  const TimeGrid grid(cfg.n_steps);
  const std::size_t n = grid.size();
  const double dt = grid.dt();
  SeededRng rng(cfg.seed);
  RestorationReport report;

  ImageTensor x = randn(rng, obs.z.shape());
  std::size_t i = 0;
  while (i < n) {
    for (std::size_t c = 0; c <= cfg.corrections && i < n; ++c) {
      const double t = grid.node(i);
      const ImageTensor fused = fuse(x, obs.z, obs.m, t, rng);
      x = euler_step(fused, t, dt, f);
      ++report.field_evals;
      detail::require_finite_state(x, i);
      if (c == 0 || i + 1 >= n) {
        ++i;
        if (cfg.record_trajectory) report.trace.push_back({grid.node(i), detail::masked_rmse(x, obs.z, obs.m)});
      } else {
        const ImageTensor x1_hat = extrapolate_to_one(x, grid.node(i + 1), f);
        ++report.field_evals;
        x = renoise(x1_hat, t, rng);
        detail::require_finite_state(x, i);
      }
    }
  }
  report.output = std::move(x);
  report.wall_time_s = detail::seconds_since(start);
  return report;
}

/// Denoising: the state is held at (1 - sigma) z for grid times t < 1 - sigma
/// and integrated by Euler steps from the first node t* >= 1 - sigma. This
/// starts directly at t*, which produces the same result as stepping and
/// overwriting at every earlier node.
inline RestorationReport restore_denoise(const VelocityField& f, const Observation& obs,
                                         const RestorationConfig& cfg) {
  if (!obs.task.is_denoise()) throw ConfigError("restore_denoise: task is not denoising");
  const double sigma = std::get<Denoise>(obs.task.kind).sigma;
  if (!(sigma >= 0.0 && sigma <= 1.0)) throw ConfigError("restore_denoise: sigma must be in [0,1]");
  if (cfg.n_steps == 0) throw ConfigError("restore_denoise: need at least one ODE step");
  const auto start = std::chrono::steady_clock::now();

  const TimeGrid grid(cfg.n_steps);
  SeededRng rng(cfg.seed);
  RestorationReport report;

  ImageTensor x = randn(rng, obs.z.shape());
  std::size_t first = 0;
  while (first < grid.size() && grid.node(first) < 1.0 - sigma) ++first;
  if (first > 0) {
    for (std::size_t k = 0; k < x.size(); ++k) {
      x[k] = static_cast<float>((1.0 - sigma) * static_cast<double>(obs.z[k]));
    }
  }
  const BinaryMask everywhere(x.shape().height, x.shape().width, 1);
  for (std::size_t i = first; i < grid.size(); ++i) {
    x = euler_step(x, grid.node(i), grid.dt(), f);
    ++report.field_evals;
    detail::require_finite_state(x, i);
    if (cfg.record_trajectory) report.trace.push_back({grid.node(i + 1), detail::masked_rmse(x, obs.z, everywhere)});
  }
  report.output = std::move(x);
  report.wall_time_s = detail::seconds_since(start);
  return report;
}

inline RestorationReport restore(const VelocityField& f, const Observation& obs, const RestorationConfig& cfg) {
  return obs.task.is_denoise() ? restore_denoise(f, obs, cfg) : restore_masked(f, obs, cfg);
}

}  // namespace restora
