#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "restora/tensor.hpp"

namespace restora {

// PSNR reported for identical images.
inline constexpr double kPsnrCapDb = 99.0;

struct MetricsRecord {
  double psnr_db = 0.0;
  double ssim = 0.0;
  double consistency_rmse = 0.0;
  double wall_time_s = 0.0;
  std::uint64_t field_evals = 0;
};

namespace detail {

// Clamp to [-1,1] and map to [0,1].
inline double to_unit(float v) {
  return 0.5 * (std::clamp(static_cast<double>(v), -1.0, 1.0) + 1.0);
}

}  // namespace detail

/// 10 log10(1 / MSE) on [0,1]-mapped values; 99 dB when MSE = 0.
inline double psnr(const ImageTensor& a, const ImageTensor& b) {
  require_same_shape(a, b, "psnr");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double r = detail::to_unit(a[i]) - detail::to_unit(b[i]);
    acc += r * r;
  }
  const double mse = acc / static_cast<double>(a.size());
  if (mse == 0.0) return kPsnrCapDb;
  return std::min(kPsnrCapDb, -10.0 * std::log10(mse));
}

namespace ssim_params {
inline constexpr std::size_t kWindow = 11;
inline constexpr double kSigma = 1.5;
inline constexpr double kK1 = 0.01;
inline constexpr double kK2 = 0.03;
inline constexpr double kC1 = (kK1 * 1.0) * (kK1 * 1.0);
inline constexpr double kC2 = (kK2 * 1.0) * (kK2 * 1.0);
}  // namespace ssim_params

// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
inline std::array<double, ssim_params::kWindow> ssim_gaussian_taps() {
  std::array<double, ssim_params::kWindow> g{};
  const double c = 0.5 * static_cast<double>(ssim_params::kWindow - 1);
  double sum = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double d = static_cast<double>(i) - c;
    g[i] = std::exp(-d * d / (2.0 * ssim_params::kSigma * ssim_params::kSigma));
    sum += g[i];
  }
  for (auto& v : g) v /= sum;
  return g;
}

/// Mean SSIM over all fully contained 11x11 Gaussian windows (sigma 1.5,
/// K1 = 0.01, K2 = 0.03, L = 1), averaged over channels. Separable filtering.
inline double ssim(const ImageTensor& a, const ImageTensor& b) {
  using namespace ssim_params;
  require_same_shape(a, b, "ssim");
  const auto& s = a.shape();
  if (s.height < kWindow || s.width < kWindow) {
    throw ShapeError("ssim: image " + to_string(s) + " smaller than the 11x11 window");
  }
  const auto g = ssim_gaussian_taps();
  const std::size_t h = s.height, w = s.width;
  const std::size_t oh = h - kWindow + 1, ow = w - kWindow + 1;

  // Filters one plane: horizontal pass then vertical pass, valid region only.
  auto filter = [&](const std::vector<double>& in) {
    std::vector<double> rows(h * ow, 0.0);
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        double acc = 0.0;
        for (std::size_t k = 0; k < kWindow; ++k) acc += g[k] * in[y * w + x + k];
        rows[y * ow + x] = acc;
      }
    }
    std::vector<double> out(oh * ow, 0.0);
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        double acc = 0.0;
        for (std::size_t k = 0; k < kWindow; ++k) acc += g[k] * rows[(y + k) * ow + x];
        out[y * ow + x] = acc;
      }
    }
    return out;
  };

  double total = 0.0;
  const std::size_t plane = h * w;
  for (std::size_t c = 0; c < s.channels; ++c) {
    std::vector<double> pa(plane), pb(plane), aa(plane), bb(plane), ab(plane);
    for (std::size_t i = 0; i < plane; ++i) {
      pa[i] = detail::to_unit(a[c * plane + i]);
      pb[i] = detail::to_unit(b[c * plane + i]);
      aa[i] = pa[i] * pa[i];
      bb[i] = pb[i] * pb[i];
      ab[i] = pa[i] * pb[i];
    }
    const auto mu_a = filter(pa), mu_b = filter(pb);
    const auto e_aa = filter(aa), e_bb = filter(bb), e_ab = filter(ab);
    double acc = 0.0;
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
      const double va = e_aa[i] - mu_a[i] * mu_a[i];
      const double vb = e_bb[i] - mu_b[i] * mu_b[i];
      const double cov = e_ab[i] - mu_a[i] * mu_b[i];
      acc += ((2.0 * mu_a[i] * mu_b[i] + kC1) * (2.0 * cov + kC2)) /
             ((mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + kC1) * (va + vb + kC2));
    }
    total += acc / static_cast<double>(mu_a.size());
  }
  return total / static_cast<double>(s.channels);
}

/// sqrt(sum m (output - z)^2 / sum m) over all channels of known pixels.
inline double consistency_rmse(const ImageTensor& output, const ImageTensor& z, const BinaryMask& m) {
  require_same_shape(output, z, "consistency_rmse");
  require_mask_fits(m, output.shape(), "consistency_rmse");
  if (m.count_known() == 0) throw ConfigError("consistency_rmse: empty mask");
  const std::size_t plane = output.shape().plane();
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < output.size(); ++i) {
    if (!m[i % plane]) continue;
    const double r = static_cast<double>(output[i]) - static_cast<double>(z[i]);
    acc += r * r;
    ++n;
  }
  return std::sqrt(acc / static_cast<double>(n));
}

/// Runs fn once and measures it on the steady clock.
template <class Fn>
auto timed(Fn&& fn) {
  const auto start = std::chrono::steady_clock::now();
  auto result = std::forward<Fn>(fn)();
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return std::pair{std::move(result), secs};
}

}  // namespace restora
