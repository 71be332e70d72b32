#pragma once

// Independent reference computations used only by the tests. Nothing here
// calls into the code path it is used to check.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "restora/restora.hpp"

namespace restora::oracle {

struct Estimate {
  double value = 0.0;
  double std_error = 0.0;
};

// Kernel-weighted Monte-Carlo estimate of E[x1 - x0 | x_t = x] for a 1-D
// mixture: draw (x0, x1) pairs, form x_t, weight by N(x; x_t, h^2).
inline Estimate mc_velocity_1d(const std::vector<double>& weights, const std::vector<double>& means,
                               const std::vector<double>& variances, double x, double t,
                               std::size_t pairs, double h, std::uint64_t seed) {
  std::mt19937_64 eng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
  std::vector<double> w(pairs), y(pairs);
  double sw = 0.0, swy = 0.0;
  for (std::size_t n = 0; n < pairs; ++n) {
    const std::size_t k = pick(eng);
    const double x1 = means[k] + std::sqrt(variances[k]) * normal(eng);
    const double x0 = normal(eng);
    const double xt = t * x1 + (1.0 - t) * x0;
    const double d = (x - xt) / h;
    w[n] = std::exp(-0.5 * d * d);
    y[n] = x1 - x0;
    sw += w[n];
    swy += w[n] * y[n];
  }
  const double est = swy / sw;
  double var = 0.0;
  for (std::size_t n = 0; n < pairs; ++n) var += w[n] * w[n] * (y[n] - est) * (y[n] - est);
  return {est, std::sqrt(var) / sw};
}

inline double normal_cdf(double x, double mean, double var) {
  return 0.5 * std::erfc(-(x - mean) / std::sqrt(2.0 * var));
}

// Bin probabilities of a 1-D mixture on [lo, hi] with `bins` equal bins plus
// two overflow bins (below lo, above hi).
inline std::vector<double> mixture_bin_probs(const std::vector<double>& weights, const std::vector<double>& means,
                                             const std::vector<double>& variances, double lo, double hi,
                                             std::size_t bins) {
  auto cdf = [&](double x) {
    double acc = 0.0;
    for (std::size_t k = 0; k < weights.size(); ++k) acc += weights[k] * normal_cdf(x, means[k], variances[k]);
    return acc;
  };
  std::vector<double> p(bins + 2);
  p[0] = cdf(lo);
  for (std::size_t b = 0; b < bins; ++b) {
    const double a = lo + (hi - lo) * static_cast<double>(b) / static_cast<double>(bins);
    const double c = lo + (hi - lo) * static_cast<double>(b + 1) / static_cast<double>(bins);
    p[b + 1] = cdf(c) - cdf(a);
  }
  p[bins + 1] = 1.0 - cdf(hi);
  return p;
}

inline std::vector<double> histogram(const std::vector<double>& xs, double lo, double hi, std::size_t bins) {
  std::vector<double> p(bins + 2, 0.0);
  for (double x : xs) {
    std::size_t b;
    if (x < lo) b = 0;
    else if (x >= hi) b = bins + 1;
    else b = 1 + std::min(bins - 1, static_cast<std::size_t>((x - lo) / (hi - lo) * static_cast<double>(bins)));
    p[b] += 1.0;
  }
  for (auto& v : p) v /= static_cast<double>(xs.size());
  return p;
}

inline double total_variation(const std::vector<double>& p, const std::vector<double>& q) {
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) acc += std::abs(p[i] - q[i]);
  return 0.5 * acc;
}

// Field-evaluation count of the masked sampler, by stepping through its
// control flow with a floating-point clock.
inline std::uint64_t trace_masked_evals(std::size_t n_steps, std::size_t corrections) {
  const double dt = 1.0 / static_cast<double>(n_steps);
  const double eps = 1e-9;
  std::uint64_t evals = 0;
  double t = 0.0;
  while (t < 1.0 - eps) {
    for (std::size_t c = 0; c <= corrections; ++c) {
      if (t >= 1.0 - eps) break;
      ++evals;  // Euler step from fused state
      if (c == 0 || t >= 1.0 - dt - eps) {
        t += dt;
      } else {
        ++evals;  // extrapolation to t = 1
      }
    }
  }
  return evals;
}

// Denoising sampler written as the step-and-overwrite loop: Euler step at
// every node, then replace the state by (1 - sigma) z while t < 1 - sigma.
inline ImageTensor denoise_literal(const VelocityField& f, const ImageTensor& z, double sigma,
                                   std::size_t n_steps, std::uint64_t seed) {
  SeededRng rng(seed);
  ImageTensor x = randn(rng, z.shape());
  ImageTensor zp(z.shape());
  for (std::size_t k = 0; k < z.size(); ++k) zp[k] = static_cast<float>((1.0 - sigma) * static_cast<double>(z[k]));
  const double dt = 1.0 / static_cast<double>(n_steps);
  for (std::size_t i = 0; i < n_steps; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(n_steps);
    const ImageTensor stepped = euler_step(x, t, dt, f);
    x = (t < 1.0 - sigma) ? zp : stepped;
  }
  return x;
}

inline double unit(float v) { return (std::clamp(static_cast<double>(v), -1.0, 1.0) + 1.0) / 2.0; }

inline double psnr_direct(const ImageTensor& a, const ImageTensor& b) {
  double sse = 0.0;
  for (std::size_t c = 0; c < a.shape().channels; ++c)
    for (std::size_t y = 0; y < a.shape().height; ++y)
      for (std::size_t x = 0; x < a.shape().width; ++x) {
        const double d = unit(a.at(c, y, x)) - unit(b.at(c, y, x));
        sse += d * d;
      }
  const double mse = sse / static_cast<double>(a.size());
  return mse == 0.0 ? 99.0 : 10.0 * std::log10(1.0 / mse);
}

// Sliding 11x11 window with explicit 2-D Gaussian weights and centred
// second moments.
inline double ssim_bruteforce(const ImageTensor& a, const ImageTensor& b) {
  constexpr int kW = 11;
  constexpr double kSigma = 1.5;
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double wts[kW][kW];
  double wsum = 0.0;
  for (int i = 0; i < kW; ++i)
    for (int j = 0; j < kW; ++j) {
      const double di = i - 5, dj = j - 5;
      wts[i][j] = std::exp(-(di * di + dj * dj) / (2.0 * kSigma * kSigma));
      wsum += wts[i][j];
    }
  for (auto& row : wts)
    for (auto& v : row) v /= wsum;
  const auto& s = a.shape();
  double total = 0.0;
  for (std::size_t c = 0; c < s.channels; ++c) {
    double acc = 0.0;
    std::size_t count = 0;
    for (std::size_t y = 0; y + kW <= s.height; ++y)
      for (std::size_t x = 0; x + kW <= s.width; ++x) {
        double ma = 0, mb = 0;
        for (int i = 0; i < kW; ++i)
          for (int j = 0; j < kW; ++j) {
            ma += wts[i][j] * unit(a.at(c, y + i, x + j));
            mb += wts[i][j] * unit(b.at(c, y + i, x + j));
          }
        double va = 0, vb = 0, cov = 0;
        for (int i = 0; i < kW; ++i)
          for (int j = 0; j < kW; ++j) {
            const double da = unit(a.at(c, y + i, x + j)) - ma;
            const double db = unit(b.at(c, y + i, x + j)) - mb;
            va += wts[i][j] * da * da;
            vb += wts[i][j] * db * db;
            cov += wts[i][j] * da * db;
          }
        acc += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        ++count;
      }
    total += acc / static_cast<double>(count);
  }
  return total / static_cast<double>(s.channels);
}

inline double consistency_direct(const ImageTensor& out, const ImageTensor& z, const BinaryMask& m) {
  double sse = 0.0, known = 0.0;
  for (std::size_t c = 0; c < out.shape().channels; ++c)
    for (std::size_t y = 0; y < out.shape().height; ++y)
      for (std::size_t x = 0; x < out.shape().width; ++x) {
        const double mk = m.at(y, x);
        const double d = out.at(c, y, x) - static_cast<double>(z.at(c, y, x));
        sse += mk * d * d;
        known += mk;
      }
  return std::sqrt(sse / known);
}

}  // namespace restora::oracle
