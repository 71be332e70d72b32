#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <variant>
#include <vector>

#include "restora/tensor.hpp"

namespace restora {

struct BoxInpaint {
  std::size_t box_h = 0;
  std::size_t box_w = 0;
};

struct RandomInpaint {
  double masked_fraction = 0.7;
};

// Point subsampling on the factor x factor lattice.
struct SuperResolution {
  std::size_t factor = 2;
};

struct Denoise {
  double sigma = 0.2;
};

using TaskKind = std::variant<BoxInpaint, RandomInpaint, SuperResolution, Denoise>;

struct DegradationTask {
  TaskKind kind;
  double sigma_meas = 0.01;

  bool is_denoise() const { return std::holds_alternative<Denoise>(kind); }
};

inline std::string task_name(const DegradationTask& task) {
  return std::visit(
      [](const auto& k) -> std::string {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, BoxInpaint>) return "box";
        else if constexpr (std::is_same_v<K, RandomInpaint>) return "random";
        else if constexpr (std::is_same_v<K, SuperResolution>) return "sr";
        else return "denoise";
      },
      task.kind);
}

inline void validate_task(const DegradationTask& task, const Shape& shape) {
  if (!(task.sigma_meas >= 0.0)) throw ConfigError("task: measurement noise must be >= 0");
  std::visit(
      [&](const auto& k) {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, BoxInpaint>) {
          if (k.box_h > shape.height || k.box_w > shape.width) {
            throw ShapeError("task: box " + std::to_string(k.box_h) + "x" + std::to_string(k.box_w) +
                             " larger than image " + to_string(shape));
          }
        } else if constexpr (std::is_same_v<K, RandomInpaint>) {
          if (!(k.masked_fraction > 0.0 && k.masked_fraction < 1.0)) {
            throw ConfigError("task: masked fraction must be in (0,1)");
          }
        } else if constexpr (std::is_same_v<K, SuperResolution>) {
          if (k.factor == 0 || shape.height % k.factor != 0 || shape.width % k.factor != 0) {
            throw ShapeError("task: SR factor " + std::to_string(k.factor) + " does not divide " +
                             to_string(shape));
          }
        } else {
          if (!(k.sigma >= 0.0)) throw ConfigError("task: denoise sigma must be >= 0");
        }
      },
      task.kind);
}

/// Zeros in a centred box_h x box_w window, offset floor((dim - box) / 2).
inline BinaryMask make_box_mask(std::size_t h, std::size_t w, std::size_t box_h, std::size_t box_w) {
  if (box_h > h || box_w > w) throw ShapeError("make_box_mask: box larger than image");
  BinaryMask m(h, w, 1);
  const std::size_t y0 = (h - box_h) / 2;
  const std::size_t x0 = (w - box_w) / 2;
  for (std::size_t y = y0; y < y0 + box_h; ++y) {
    for (std::size_t x = x0; x < x0 + box_w; ++x) m.set(y, x, false);
  }
  return m;
}

/// Exactly floor(fraction * h * w) unknown pixels at shuffled positions.
inline BinaryMask make_random_mask(std::size_t h, std::size_t w, double masked_fraction, SeededRng& rng) {
  if (!(masked_fraction > 0.0 && masked_fraction < 1.0)) {
    throw ConfigError("make_random_mask: fraction must be in (0,1)");
  }
  const std::size_t n = h * w;
  // Small slack so that e.g. 0.29 * 100 counts as 29, not 28.
  const auto zeros = static_cast<std::size_t>(std::floor(masked_fraction * static_cast<double>(n) + 1e-9));
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::shuffle(idx.begin(), idx.end(), rng.engine());
  BinaryMask m(h, w, 1);
  for (std::size_t i = 0; i < zeros; ++i) m.set(idx[i], false);
  return m;
}

/// Known pixels at the top-left corner of every factor x factor block.
inline BinaryMask make_sr_mask(std::size_t h, std::size_t w, std::size_t factor) {
  if (factor == 0 || h % factor != 0 || w % factor != 0) {
    throw ShapeError("make_sr_mask: factor must divide both image dimensions");
  }
  BinaryMask m(h, w, 0);
  for (std::size_t y = 0; y < h; y += factor) {
    for (std::size_t x = 0; x < w; x += factor) m.set(y, x, true);
  }
  return m;
}

struct Observation {
  ImageTensor z;
  BinaryMask m;
  DegradationTask task;
};

inline BinaryMask make_task_mask(const DegradationTask& task, const Shape& shape, SeededRng& rng) {
  const std::size_t h = shape.height;
  const std::size_t w = shape.width;
  return std::visit(
      [&](const auto& k) -> BinaryMask {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, BoxInpaint>) return make_box_mask(h, w, k.box_h, k.box_w);
        else if constexpr (std::is_same_v<K, RandomInpaint>) return make_random_mask(h, w, k.masked_fraction, rng);
        else if constexpr (std::is_same_v<K, SuperResolution>) return make_sr_mask(h, w, k.factor);
        else return BinaryMask(h, w, 1);
      },
      task.kind);
}

/// z = m * (x + sigma_meas * eps) for the mask tasks (zero where m = 0);
/// z = x + sigma * eps for denoising, which carries no extra measurement noise.
inline Observation degrade(const ImageTensor& x, const DegradationTask& task, SeededRng& rng) {
  validate_task(task, x.shape());
  Observation obs{ImageTensor(x.shape()), make_task_mask(task, x.shape(), rng), task};
  const double sigma = task.is_denoise() ? std::get<Denoise>(task.kind).sigma : task.sigma_meas;
  const std::size_t plane = x.shape().plane();
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double noisy = static_cast<double>(x[i]) + sigma * rng.normal();
    obs.z[i] = obs.m[i % plane] ? static_cast<float>(noisy) : 0.0f;
  }
  return obs;
}

}  // namespace restora
