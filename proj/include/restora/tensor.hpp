#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace restora {

// Error hierarchy. Every public operation reports contract violations by
// throwing one of these; the CLI maps them onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape/argument mismatch between operands.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Malformed or truncated file contents.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Non-finite values or divergence during a numerical procedure.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

struct Shape {
  std::size_t channels = 1;
  std::size_t height = 1;
  std::size_t width = 1;

  constexpr std::size_t size() const { return channels * height * width; }
  constexpr std::size_t plane() const { return height * width; }
  friend constexpr bool operator==(const Shape&, const Shape&) = default;
};

inline std::string to_string(const Shape& s) {
  return std::to_string(s.channels) + "x" + std::to_string(s.height) + "x" +
         std::to_string(s.width);
}

/// Dense channel-first, row-major image of f32 values. Model-space values
/// live in [-1, 1]; intermediate sampler states are not clamped.
class ImageTensor {
 public:
  ImageTensor() = default;

  explicit ImageTensor(Shape shape, float fill = 0.0f) : shape_(shape) {
    check_shape(shape);
    data_.assign(shape.size(), fill);
  }

  ImageTensor(Shape shape, std::vector<float> data)
      : shape_(shape), data_(std::move(data)) {
    check_shape(shape);
    if (data_.size() != shape.size()) {
      throw ShapeError("ImageTensor: data length " + std::to_string(data_.size()) +
                       " does not match shape " + to_string(shape));
    }
  }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }
  const std::vector<float>& values() const { return data_; }

  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  float& at(std::size_t c, std::size_t y, std::size_t x) {
    return data_[(c * shape_.height + y) * shape_.width + x];
  }
  float at(std::size_t c, std::size_t y, std::size_t x) const {
    return data_[(c * shape_.height + y) * shape_.width + x];
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
  }

  friend bool operator==(const ImageTensor&, const ImageTensor&) = default;

 private:
  static void check_shape(const Shape& s) {
    if (s.channels == 0 || s.height == 0 || s.width == 0) {
      throw ShapeError("ImageTensor: zero-size shape " + to_string(s));
    }
  }

  Shape shape_{};
  std::vector<float> data_;
};

/// {0,1} spatial map, broadcast over channels. 1 marks a known pixel.
class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(std::size_t height, std::size_t width, std::uint8_t fill = 1)
      : height_(height), width_(width), data_(height * width, fill ? 1 : 0) {}

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t size() const { return data_.size(); }

  std::uint8_t operator[](std::size_t i) const { return data_[i]; }
  std::uint8_t at(std::size_t y, std::size_t x) const { return data_[y * width_ + x]; }
  void set(std::size_t y, std::size_t x, bool known) { data_[y * width_ + x] = known ? 1 : 0; }
  void set(std::size_t i, bool known) { data_[i] = known ? 1 : 0; }

  std::size_t count_known() const {
    return static_cast<std::size_t>(std::count(data_.begin(), data_.end(), std::uint8_t{1}));
  }

  bool matches(const Shape& s) const { return s.height == height_ && s.width == width_; }

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<std::uint8_t> data_;
};

/// Single-owner random stream: mt19937_64 with the standard library's
/// normal and uniform distributions. Reproducible within one build.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::mt19937_64& engine() { return engine_; }

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform_(engine_); }

  // Categorical draw over non-negative weights.
  std::size_t categorical(std::span<const double> weights) {
    double u = uniform();
    double acc = 0.0;
    std::size_t last = 0;
    for (std::size_t k = 0; k < weights.size(); ++k) {
      if (weights[k] <= 0.0) continue;
      acc += weights[k];
      last = k;
      if (u < acc) return k;
    }
    return last;
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

// splitmix64 finalizer; used to derive decorrelated sub-stream seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline ImageTensor randn(SeededRng& rng, Shape shape) {
  ImageTensor out(shape);
  for (auto& v : out.data()) v = static_cast<float>(rng.normal());
  return out;
}

inline void require_same_shape(const ImageTensor& a, const ImageTensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
}

inline void require_mask_fits(const BinaryMask& m, const Shape& s, const char* what) {
  if (!m.matches(s)) {
    throw ShapeError(std::string(what) + ": mask " + std::to_string(m.height()) + "x" +
                     std::to_string(m.width()) + " does not fit image " + to_string(s));
  }
}

// Narrowing to float storage; NaN passes through, overflow is an error.
inline float to_storage(double v, const char* what) {
  if (std::abs(v) > static_cast<double>(std::numeric_limits<float>::max())) {
    throw NumericalError(std::string(what) + ": value overflows float storage");
  }
  return static_cast<float>(v);
}

// a*x + b*y, accumulated in double.
inline ImageTensor lincomb(double a, const ImageTensor& x, double b, const ImageTensor& y) {
  require_same_shape(x, y, "lincomb");
  ImageTensor out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = to_storage(a * static_cast<double>(x[i]) + b * static_cast<double>(y[i]), "lincomb");
  }
  return out;
}

inline ImageTensor clamp_unit(const ImageTensor& x) {
  ImageTensor out = x;
  for (auto& v : out.data()) v = std::clamp(v, -1.0f, 1.0f);
  return out;
}

}  // namespace restora
