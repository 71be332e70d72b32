#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>

#include "restora/tensor.hpp"

namespace restora {

/// Time-dependent velocity field v(x, t). Implementations must be pure and
/// safe for concurrent evaluation; the evaluation counter is atomic.
class VelocityField {
 public:
  VelocityField() = default;
  VelocityField(const VelocityField&) = delete;
  VelocityField& operator=(const VelocityField&) = delete;
  virtual ~VelocityField() = default;

  ImageTensor evaluate(const ImageTensor& x, double t) const {
    evals_.fetch_add(1, std::memory_order_relaxed);
    ImageTensor v = do_evaluate(x, t);
    if (v.shape() != x.shape()) {
      throw ShapeError("VelocityField: output shape " + to_string(v.shape()) +
                       " differs from input " + to_string(x.shape()));
    }
    return v;
  }

  std::uint64_t eval_count() const { return evals_.load(std::memory_order_relaxed); }
  void reset_eval_count() { evals_.store(0, std::memory_order_relaxed); }

 protected:
  virtual ImageTensor do_evaluate(const ImageTensor& x, double t) const = 0;

 private:
  mutable std::atomic<std::uint64_t> evals_{0};
};

// Adapts a callable (x, t) -> v. Mostly useful for closed-form test fields.
class FunctionField final : public VelocityField {
 public:
  using Fn = std::function<ImageTensor(const ImageTensor&, double)>;
  explicit FunctionField(Fn fn) : fn_(std::move(fn)) {}

 protected:
  ImageTensor do_evaluate(const ImageTensor& x, double t) const override { return fn_(x, t); }

 private:
  Fn fn_;
};

/// Uniform grid t_i = i / N, i = 0..N-1. Nodes are computed, never accumulated.
class TimeGrid {
 public:
  explicit TimeGrid(std::size_t n_steps) : n_(n_steps) {
    if (n_ == 0) throw ConfigError("TimeGrid: need at least one step");
  }

  std::size_t size() const { return n_; }
  double dt() const { return 1.0 / static_cast<double>(n_); }
  double node(std::size_t i) const { return static_cast<double>(i) / static_cast<double>(n_); }

 private:
  std::size_t n_;
};

namespace detail {

inline void require_unit_time(double t, const char* what) {
  if (!(t >= 0.0 && t <= 1.0)) {
    throw ConfigError(std::string(what) + ": t=" + std::to_string(t) + " outside [0,1]");
  }
}

// Slack for t + dt landing a rounding error past 1.
inline constexpr double kTimeSlack = 1e-12;

}  // namespace detail

/// (1 - t) x0 + t x1.
inline ImageTensor conditional_path(const ImageTensor& x0, const ImageTensor& x1, double t) {
  require_same_shape(x0, x1, "conditional_path");
  detail::require_unit_time(t, "conditional_path");
  return lincomb(1.0 - t, x0, t, x1);
}

/// x + dt * f(x, t). Exactly one field evaluation.
inline ImageTensor euler_step(const ImageTensor& x, double t, double dt, const VelocityField& f) {
  if (!(dt > 0.0)) throw ConfigError("euler_step: dt must be positive");
  if (!(t >= 0.0 && t + dt <= 1.0 + detail::kTimeSlack)) {
    throw ConfigError("euler_step: t=" + std::to_string(t) + " outside [0, 1-dt]");
  }
  const ImageTensor v = f.evaluate(x, t);
  if (!v.all_finite()) {
    throw NumericalError("euler_step: non-finite velocity at t=" + std::to_string(t));
  }
  ImageTensor out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = to_storage(static_cast<double>(x[i]) + dt * static_cast<double>(v[i]), "euler_step");
  }
  return out;
}

/// Integrates dx/dt = f(x, t) from fresh noise at t=0 to t=1.
inline ImageTensor sample_unconditional(const VelocityField& f, const TimeGrid& grid, Shape shape,
                                        SeededRng& rng) {
  ImageTensor x = randn(rng, shape);
  for (std::size_t i = 0; i < grid.size(); ++i) x = euler_step(x, grid.node(i), grid.dt(), f);
  return x;
}

/// x + (1 - t) f(x, t): one-step projection to the t=1 endpoint.
/// At t=1 the factor vanishes and the field is not evaluated.
inline ImageTensor extrapolate_to_one(const ImageTensor& x, double t, const VelocityField& f) {
  detail::require_unit_time(t, "extrapolate_to_one");
  if (t == 1.0) return x;
  const ImageTensor v = f.evaluate(x, t);
  if (!v.all_finite()) {
    throw NumericalError("extrapolate_to_one: non-finite velocity at t=" + std::to_string(t));
  }
  return lincomb(1.0, x, 1.0 - t, v);
}

/// t x1_hat + (1 - t) eta, eta ~ N(0, I) drawn fresh from rng.
inline ImageTensor renoise(const ImageTensor& x1_hat, double t, SeededRng& rng) {
  detail::require_unit_time(t, "renoise");
  const ImageTensor eta = randn(rng, x1_hat.shape());
  return lincomb(t, x1_hat, 1.0 - t, eta);
}

}  // namespace restora
