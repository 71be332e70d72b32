#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "restora/flow.hpp"
#include "restora/tensor.hpp"

namespace restora {

/// Isotropic Gaussian mixture sum_k w_k N(mu_k, var_k I) over image-shaped
/// vectors. Immutable after construction.
class GmmPrior {
 public:
  GmmPrior(Shape shape, std::vector<double> weights, std::vector<std::vector<double>> means,
           std::vector<double> variances)
      : shape_(shape),
        weights_(std::move(weights)),
        means_(std::move(means)),
        variances_(std::move(variances)) {
    validate();
  }

  // Flat means of length d; image shape defaults to 1x1xd.
  GmmPrior(std::vector<double> weights, std::vector<std::vector<double>> means,
           std::vector<double> variances)
      : shape_(flat_shape(means)),
        weights_(std::move(weights)),
        means_(std::move(means)),
        variances_(std::move(variances)) {
    validate();
  }

  const Shape& shape() const { return shape_; }
  std::size_t dim() const { return shape_.size(); }
  std::size_t components() const { return weights_.size(); }
  std::span<const double> weights() const { return weights_; }
  std::span<const double> mean(std::size_t k) const { return means_[k]; }
  double variance(std::size_t k) const { return variances_[k]; }

  // Same mixture viewed under another shape of equal size.
  GmmPrior reshaped(Shape shape) const {
    if (shape.size() != dim()) throw ShapeError("GmmPrior: reshape to " + to_string(shape) + " changes size");
    return GmmPrior(shape, weights_, means_, variances_);
  }

 private:
  static Shape flat_shape(const std::vector<std::vector<double>>& means) {
    return Shape{1, 1, means.empty() ? 1 : means.front().size()};
  }

  void validate() const {
    const std::size_t k = weights_.size();
    if (k == 0) throw ConfigError("GmmPrior: no components");
    if (means_.size() != k || variances_.size() != k) {
      throw ConfigError("GmmPrior: weights/means/variances length mismatch");
    }
    double sum = 0.0;
    for (double w : weights_) {
      if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("GmmPrior: weights must be non-negative");
      sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-12) throw ConfigError("GmmPrior: weights must sum to 1");
    for (double v : variances_) {
      if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError("GmmPrior: variances must be positive");
    }
    for (const auto& m : means_) {
      if (m.size() != shape_.size()) {
        throw ConfigError("GmmPrior: mean length " + std::to_string(m.size()) +
                          " does not match shape " + to_string(shape_));
      }
      for (double v : m) {
        if (!std::isfinite(v)) throw ConfigError("GmmPrior: non-finite mean");
      }
    }
  }

  Shape shape_;
  std::vector<double> weights_;
  std::vector<std::vector<double>> means_;
  std::vector<double> variances_;
};

struct MarginalComponent {
  std::vector<double> mean;
  double variance;
  double weight;
};

/// Component k ~ Categorical(w), then mu_k + sigma_k * noise.
inline ImageTensor gmm_sample(const GmmPrior& prior, SeededRng& rng) {
  const std::size_t k = rng.categorical(prior.weights());
  const double sd = std::sqrt(prior.variance(k));
  const auto mu = prior.mean(k);
  ImageTensor out(prior.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(mu[i] + sd * rng.normal());
  return out;
}

/// Per-component parameters of p_t for x_t = t x1 + (1-t) x0, x0 ~ N(0, I).
inline std::vector<MarginalComponent> gmm_marginal(const GmmPrior& prior, double t) {
  detail::require_unit_time(t, "gmm_marginal");
  std::vector<MarginalComponent> out;
  out.reserve(prior.components());
  for (std::size_t k = 0; k < prior.components(); ++k) {
    MarginalComponent c;
    const auto mu = prior.mean(k);
    c.mean.assign(mu.begin(), mu.end());
    for (auto& v : c.mean) v *= t;
    c.variance = (1.0 - t) * (1.0 - t) + t * t * prior.variance(k);
    c.weight = prior.weights()[k];
    out.push_back(std::move(c));
  }
  return out;
}

namespace detail {

// log w_k + log N(x; t mu_k, s_k^2 I) for every component. Zero-weight
// components get -inf.
template <class T>
std::vector<double> gmm_log_terms(const GmmPrior& prior, std::span<const T> x, double t) {
  const std::size_t d = prior.dim();
  if (x.size() != d) {
    throw ShapeError("GmmPrior: input length " + std::to_string(x.size()) + " != " + std::to_string(d));
  }
  std::vector<double> terms(prior.components());
  for (std::size_t k = 0; k < prior.components(); ++k) {
    const double w = prior.weights()[k];
    if (w <= 0.0) {
      terms[k] = -std::numeric_limits<double>::infinity();
      continue;
    }
    const double s2 = (1.0 - t) * (1.0 - t) + t * t * prior.variance(k);
    const auto mu = prior.mean(k);
    double sq = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      const double r = static_cast<double>(x[i]) - t * mu[i];
      sq += r * r;
    }
    terms[k] = std::log(w) - 0.5 * static_cast<double>(d) * std::log(2.0 * std::numbers::pi * s2) -
               0.5 * sq / s2;
  }
  return terms;
}

inline double log_sum_exp(std::span<const double> terms) {
  const double mx = *std::max_element(terms.begin(), terms.end());
  if (!std::isfinite(mx)) return mx;
  double acc = 0.0;
  for (double v : terms) acc += std::exp(v - mx);
  return mx + std::log(acc);
}

}  // namespace detail

/// Posterior component probabilities r_k(x, t), via max-subtracted log-sum-exp.
template <class T>
std::vector<double> gmm_responsibilities(const GmmPrior& prior, std::span<const T> x, double t) {
  auto terms = detail::gmm_log_terms(prior, x, t);
  const double lse = detail::log_sum_exp(terms);
  for (auto& v : terms) v = std::exp(v - lse);
  return terms;
}

/// Marginal velocity E[x1 - x0 | x_t = x] written into out (any float type).
///
/// Per component, (x_t, x1) and (x_t, x0) are jointly Gaussian with
/// Cov(x1, x_t) = t var, Cov(x0, x_t) = (1-t), Var(x_t) = s^2, so
///   E_k[x1 - x0 | x] = mu_k + ((t var_k - (1-t)) / s_k^2) (x - t mu_k).
template <class In, class Out>
void gmm_velocity_into(const GmmPrior& prior, std::span<const In> x, double t, std::span<Out> out) {
  detail::require_unit_time(t, "gmm_velocity");
  if (out.size() != x.size()) throw ShapeError("gmm_velocity: output length mismatch");
  for (std::size_t k = 0; k < prior.components(); ++k) {
    const double s2 = (1.0 - t) * (1.0 - t) + t * t * prior.variance(k);
    if (!(s2 > 0.0)) throw NumericalError("gmm_velocity: degenerate marginal variance at t=1");
  }
  const auto resp = gmm_responsibilities(prior, x, t);
  std::vector<double> acc(x.size(), 0.0);
  for (std::size_t k = 0; k < prior.components(); ++k) {
    if (resp[k] == 0.0) continue;
    const double var = prior.variance(k);
    const double s2 = (1.0 - t) * (1.0 - t) + t * t * var;
    const double coef = (t * var - (1.0 - t)) / s2;
    const auto mu = prior.mean(k);
    for (std::size_t i = 0; i < x.size(); ++i) {
      acc[i] += resp[k] * (mu[i] + coef * (static_cast<double>(x[i]) - t * mu[i]));
    }
  }
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = static_cast<Out>(acc[i]);
}

inline ImageTensor gmm_velocity(const GmmPrior& prior, const ImageTensor& x, double t) {
  if (x.shape().size() != prior.dim()) {
    throw ShapeError("gmm_velocity: image " + to_string(x.shape()) + " vs prior " + to_string(prior.shape()));
  }
  ImageTensor out(x.shape());
  gmm_velocity_into(prior, x.data(), t, out.data());
  return out;
}

template <class T>
double gmm_log_density(const GmmPrior& prior, std::span<const T> x, double t) {
  detail::require_unit_time(t, "gmm_log_density");
  const auto terms = detail::gmm_log_terms(prior, x, t);
  return detail::log_sum_exp(terms);
}

inline double gmm_log_density(const GmmPrior& prior, const ImageTensor& x, double t) {
  return gmm_log_density(prior, x.data(), t);
}

class GmmVelocityField final : public VelocityField {
 public:
  explicit GmmVelocityField(GmmPrior prior) : prior_(std::move(prior)) {}
  const GmmPrior& prior() const { return prior_; }

 protected:
  ImageTensor do_evaluate(const ImageTensor& x, double t) const override {
    return gmm_velocity(prior_, x, t);
  }

 private:
  GmmPrior prior_;
};

// JSON: {"weights": [...], "means": [[...], ...], "variances": [...], "shape": [c, h, w]}.
// "shape" is optional and defaults to 1x1xd.
inline GmmPrior gmm_from_json(const nlohmann::json& j) {
  try {
    auto weights = j.at("weights").get<std::vector<double>>();
    auto means = j.at("means").get<std::vector<std::vector<double>>>();
    auto variances = j.at("variances").get<std::vector<double>>();
    if (means.empty()) throw ConfigError("GMM spec: empty means");
    Shape shape{1, 1, means.front().size()};
    if (j.contains("shape")) {
      const auto s = j.at("shape").get<std::vector<std::size_t>>();
      if (s.size() != 3) throw ConfigError("GMM spec: shape must have 3 entries");
      shape = Shape{s[0], s[1], s[2]};
      if (shape.size() == 0) throw ConfigError("GMM spec: zero-size shape");
    }
    return GmmPrior(shape, std::move(weights), std::move(means), std::move(variances));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("GMM spec: ") + e.what());
  }
}

inline nlohmann::json gmm_to_json(const GmmPrior& prior) {
  nlohmann::json j;
  j["shape"] = {prior.shape().channels, prior.shape().height, prior.shape().width};
  j["weights"] = std::vector<double>(prior.weights().begin(), prior.weights().end());
  auto& means = j["means"] = nlohmann::json::array();
  std::vector<double> vars;
  for (std::size_t k = 0; k < prior.components(); ++k) {
    means.push_back(std::vector<double>(prior.mean(k).begin(), prior.mean(k).end()));
    vars.push_back(prior.variance(k));
  }
  j["variances"] = vars;
  return j;
}

inline GmmPrior load_gmm(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open GMM spec '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("GMM spec '" + path.string() + "': " + e.what());
  }
  return gmm_from_json(j);
}

/// Four equally weighted structured patterns on an h x w single-channel
/// grid: horizontal bands, vertical bands, diagonal split, centre blob.
/// Each is distinguishable from any subset of its pixels that keeps a few
/// rows and columns, which makes it a multimodal restoration target.
inline GmmPrior make_pattern_prior(std::size_t h, std::size_t w, double variance = 0.01,
                                   double amplitude = 0.8) {
  const std::size_t d = h * w;
  std::vector<std::vector<double>> means(4, std::vector<double>(d));
  const double cy = 0.5 * static_cast<double>(h - 1);
  const double cx = 0.5 * static_cast<double>(w - 1);
  const double radius = 0.3 * static_cast<double>(std::min(h, w));
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t i = y * w + x;
      means[0][i] = ((y / 4) % 2 == 0) ? amplitude : -amplitude;
      means[1][i] = ((x / 4) % 2 == 0) ? amplitude : -amplitude;
      means[2][i] = (static_cast<double>(x) * static_cast<double>(h) >
                     static_cast<double>(y) * static_cast<double>(w))
                        ? amplitude
                        : -amplitude;
      const double r = std::hypot(static_cast<double>(y) - cy, static_cast<double>(x) - cx);
      means[3][i] = r < radius ? amplitude : -amplitude;
    }
  }
  return GmmPrior(Shape{1, h, w}, {0.25, 0.25, 0.25, 0.25}, std::move(means),
                  {variance, variance, variance, variance});
}

}  // namespace restora
