#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "restora/flow.hpp"
#include "restora/io.hpp"
#include "restora/tensor.hpp"

namespace restora {

/// Fully connected tanh network mapping [x, t] (length d+1) to a velocity of
/// length d. The last layer is linear. Parameters are stored as Real; all
/// arithmetic runs in double.
///
/// Parameter layout: for each layer l, the weight matrix W_l (out x in,
/// row-major) followed by the bias b_l (out).
template <class Real>
class basic_mlp {
 public:
  using real_type = Real;

  explicit basic_mlp(std::vector<std::size_t> widths) : widths_(std::move(widths)) {
    if (widths_.size() < 2) throw ConfigError("mlp: need at least input and output widths");
    for (auto w : widths_) {
      if (w == 0) throw ConfigError("mlp: zero layer width");
    }
    if (widths_.front() != widths_.back() + 1) {
      throw ConfigError("mlp: input width must be output width + 1 (time channel)");
    }
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
      offsets_.push_back(n);
      n += widths_[l + 1] * widths_[l] + widths_[l + 1];
    }
    params_.assign(n, Real{0});
  }

  /// Xavier-uniform weights, zero biases.
  static basic_mlp xavier(std::vector<std::size_t> widths, SeededRng& rng) {
    basic_mlp net(std::move(widths));
    for (std::size_t l = 0; l < net.layers(); ++l) {
      const double fan_in = static_cast<double>(net.widths_[l]);
      const double fan_out = static_cast<double>(net.widths_[l + 1]);
      const double a = std::sqrt(6.0 / (fan_in + fan_out));
      auto w = net.weights(l);
      for (auto& v : w) v = static_cast<Real>(a * (2.0 * rng.uniform() - 1.0));
    }
    return net;
  }

  template <class Other>
  static basic_mlp converted_from(const basic_mlp<Other>& other) {
    basic_mlp net(other.widths());
    const auto src = other.parameters();
    for (std::size_t i = 0; i < src.size(); ++i) net.params_[i] = static_cast<Real>(src[i]);
    return net;
  }

  const std::vector<std::size_t>& widths() const { return widths_; }
  std::size_t layers() const { return widths_.size() - 1; }
  std::size_t sample_dim() const { return widths_.back(); }
  std::size_t parameter_count() const { return params_.size(); }

  std::span<Real> parameters() { return params_; }
  std::span<const Real> parameters() const { return params_; }

  std::span<Real> weights(std::size_t l) {
    return {params_.data() + offsets_[l], widths_[l + 1] * widths_[l]};
  }
  std::span<const Real> weights(std::size_t l) const {
    return {params_.data() + offsets_[l], widths_[l + 1] * widths_[l]};
  }
  std::span<Real> bias(std::size_t l) {
    return {params_.data() + offsets_[l] + widths_[l + 1] * widths_[l], widths_[l + 1]};
  }
  std::span<const Real> bias(std::size_t l) const {
    return {params_.data() + offsets_[l] + widths_[l + 1] * widths_[l], widths_[l + 1]};
  }

  template <class T>
  std::vector<double> forward(std::span<const T> x, double t) const {
    std::vector<std::vector<double>> acts;
    forward_cached(x, t, acts);
    return std::move(acts.back());
  }

  // Keeps every layer's post-activation output (acts[0] is the input).
  template <class T>
  void forward_cached(std::span<const T> x, double t, std::vector<std::vector<double>>& acts) const {
    if (x.size() != sample_dim()) {
      throw ShapeError("mlp: input length " + std::to_string(x.size()) + " != " +
                       std::to_string(sample_dim()));
    }
    acts.assign(widths_.size(), {});
    acts[0].resize(widths_[0]);
    for (std::size_t i = 0; i < x.size(); ++i) acts[0][i] = static_cast<double>(x[i]);
    acts[0].back() = t;
    for (std::size_t l = 0; l < layers(); ++l) {
      const auto w = weights(l);
      const auto b = bias(l);
      const std::size_t in = widths_[l];
      const std::size_t out = widths_[l + 1];
      auto& next = acts[l + 1];
      next.resize(out);
      const bool hidden = l + 1 < layers();
      for (std::size_t o = 0; o < out; ++o) {
        double z = static_cast<double>(b[o]);
        for (std::size_t i = 0; i < in; ++i) z += static_cast<double>(w[o * in + i]) * acts[l][i];
        next[o] = hidden ? std::tanh(z) : z;
      }
    }
  }

  /// Adds d(0.5 ||f(x,t) - target||^2 * scale)/dparams into grad and returns
  /// the unscaled sample loss.
  template <class T>
  double accumulate_gradient(std::span<const T> x, double t, std::span<const double> target,
                             double scale, std::span<double> grad) const {
    std::vector<std::vector<double>> acts;
    forward_cached(x, t, acts);
    const auto& y = acts.back();
    std::vector<double> delta(y.size());
    double loss = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double r = y[i] - target[i];
      loss += 0.5 * r * r;
      delta[i] = r * scale;
    }
    for (std::size_t l = layers(); l-- > 0;) {
      const std::size_t in = widths_[l];
      const std::size_t out = widths_[l + 1];
      double* gw = grad.data() + offsets_[l];
      double* gb = gw + out * in;
      const auto& a_in = acts[l];
      for (std::size_t o = 0; o < out; ++o) {
        gb[o] += delta[o];
        for (std::size_t i = 0; i < in; ++i) gw[o * in + i] += delta[o] * a_in[i];
      }
      if (l == 0) break;
      const auto w = weights(l);
      std::vector<double> prev(in, 0.0);
      for (std::size_t o = 0; o < out; ++o) {
        for (std::size_t i = 0; i < in; ++i) prev[i] += static_cast<double>(w[o * in + i]) * delta[o];
      }
      // acts[l] = tanh(z) for hidden layers, so dtanh = 1 - a^2.
      for (std::size_t i = 0; i < in; ++i) prev[i] *= 1.0 - a_in[i] * a_in[i];
      delta = std::move(prev);
    }
    return loss;
  }

  friend bool operator==(const basic_mlp&, const basic_mlp&) = default;

 private:
  std::vector<std::size_t> widths_;
  std::vector<std::size_t> offsets_;
  std::vector<Real> params_;
};

using MlpVelocityNet = basic_mlp<float>;

/// Evaluates net.forward; a thin wrapper to mirror the other free operations.
template <class Real, class T>
std::vector<double> mlp_forward(const basic_mlp<Real>& net, std::span<const T> x, double t) {
  return net.forward(x, t);
}

using PriorSampler = std::function<ImageTensor(SeededRng&)>;

/// One conditional flow-matching minibatch: inputs Psi_t(x0) with times t
/// and regression targets x1 - x0.
struct CfmBatch {
  std::vector<ImageTensor> inputs;
  std::vector<double> times;
  std::vector<std::vector<double>> targets;
};

inline CfmBatch draw_cfm_batch(std::size_t batch, const PriorSampler& sampler, SeededRng& rng) {
  if (batch == 0) throw ConfigError("cfm: batch must be >= 1");
  CfmBatch b;
  b.inputs.reserve(batch);
  for (std::size_t n = 0; n < batch; ++n) {
    const double t = rng.uniform();
    const ImageTensor x1 = sampler(rng);
    const ImageTensor x0 = randn(rng, x1.shape());
    b.inputs.push_back(conditional_path(x0, x1, t));
    b.times.push_back(t);
    std::vector<double> target(x1.size());
    for (std::size_t i = 0; i < target.size(); ++i) {
      target[i] = static_cast<double>(x1[i]) - static_cast<double>(x0[i]);
    }
    b.targets.push_back(std::move(target));
  }
  return b;
}

struct LossAndGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

/// Mean 0.5 ||v(Psi_t(x0), t) - (x1 - x0)||^2 over the batch with exact
/// reverse-mode parameter gradients.
template <class Real>
LossAndGrad cfm_loss(const basic_mlp<Real>& net, const CfmBatch& batch) {
  LossAndGrad out;
  out.grad.assign(net.parameter_count(), 0.0);
  const double scale = 1.0 / static_cast<double>(batch.inputs.size());
  for (std::size_t n = 0; n < batch.inputs.size(); ++n) {
    out.loss += net.accumulate_gradient(batch.inputs[n].data(), batch.times[n],
                                        std::span<const double>(batch.targets[n]), scale, out.grad);
  }
  out.loss *= scale;
  if (!std::isfinite(out.loss)) {
    throw NumericalError("cfm_loss: non-finite loss");
  }
  return out;
}

template <class Real>
LossAndGrad cfm_loss_batch(const basic_mlp<Real>& net, const PriorSampler& sampler,
                           std::size_t batch, SeededRng& rng) {
  const std::uint64_t state_tag = rng.engine()();
  SeededRng batch_rng(state_tag);
  try {
    return cfm_loss(net, draw_cfm_batch(batch, sampler, batch_rng));
  } catch (const NumericalError&) {
    throw NumericalError("cfm_loss_batch: non-finite loss for batch seed " + std::to_string(state_tag));
  }
}

struct TrainConfig {
  std::size_t batch = 256;
  std::size_t steps = 5000;
  double learning_rate = 1e-2;
  double momentum = 0.9;
  std::uint64_t seed = 0;
  // Anneal the step size to zero along a half cosine over `steps`.
  bool cosine_decay = false;
};

struct TrainResult {
  std::vector<double> loss_trace;

  // Mean of the last `window` losses.
  double smoothed_final(std::size_t window = 200) const {
    if (loss_trace.empty()) return 0.0;
    window = std::min(window, loss_trace.size());
    const double s = std::accumulate(loss_trace.end() - static_cast<std::ptrdiff_t>(window),
                                     loss_trace.end(), 0.0);
    return s / static_cast<double>(window);
  }
};

// Loss above which training is declared divergent.
inline constexpr double kDivergenceLoss = 1e6;

/// SGD with heavy-ball momentum on the CFM loss. Deterministic given cfg.seed.
template <class Real>
TrainResult train(basic_mlp<Real>& net, const PriorSampler& sampler, const TrainConfig& cfg) {
  if (cfg.batch == 0) throw ConfigError("train: batch must be >= 1");
  if (!(cfg.learning_rate >= 0.0)) throw ConfigError("train: learning rate must be non-negative");
  if (!(cfg.momentum >= 0.0 && cfg.momentum < 1.0)) throw ConfigError("train: momentum must be in [0,1)");
  SeededRng rng(cfg.seed);
  TrainResult result;
  result.loss_trace.reserve(cfg.steps);
  std::vector<double> velocity(net.parameter_count(), 0.0);
  auto params = net.parameters();
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    const auto lg = cfm_loss_batch(net, sampler, cfg.batch, rng);
    if (!(lg.loss <= kDivergenceLoss)) {
      throw NumericalError("train: divergence at step " + std::to_string(step) +
                           " (loss " + std::to_string(lg.loss) + ")");
    }
    result.loss_trace.push_back(lg.loss);
    if (cfg.learning_rate == 0.0) continue;
    double lr = cfg.learning_rate;
    if (cfg.cosine_decay) {
      lr *= 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / static_cast<double>(cfg.steps)));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      velocity[i] = cfg.momentum * velocity[i] - lr * lg.grad[i];
      params[i] = static_cast<Real>(static_cast<double>(params[i]) + velocity[i]);
      if (!std::isfinite(static_cast<double>(params[i]))) {
        throw NumericalError("train: non-finite parameter at step " + std::to_string(step));
      }
    }
  }
  return result;
}

/// "RFNN", u32 width count, u32 widths[], then per layer the f32 weight
/// matrix (row-major, out x in) and the f32 bias vector. Little-endian.
template <class Real>
void checkpoint_save(const basic_mlp<Real>& net, const std::filesystem::path& path) {
  std::vector<unsigned char> buf;
  for (char c : std::string_view("RFNN")) buf.push_back(static_cast<unsigned char>(c));
  detail::put_u32(buf, static_cast<std::uint32_t>(net.widths().size()));
  for (auto w : net.widths()) detail::put_u32(buf, static_cast<std::uint32_t>(w));
  for (std::size_t l = 0; l < net.layers(); ++l) {
    for (auto v : net.weights(l)) detail::put_f32(buf, static_cast<float>(v));
    for (auto v : net.bias(l)) detail::put_f32(buf, static_cast<float>(v));
  }
  detail::write_file(path, buf);
}

inline MlpVelocityNet checkpoint_load(const std::filesystem::path& path) {
  const auto bytes = detail::read_file(path);
  detail::ByteReader r(bytes, "RFNN '" + path.string() + "'");
  r.expect_magic("RFNN");
  const std::uint32_t count = r.u32();
  if (count < 2 || count > 64) throw FormatError("RFNN: implausible layer count " + std::to_string(count));
  std::vector<std::size_t> widths(count);
  std::uint64_t params = 0;
  for (auto& w : widths) {
    w = r.u32();
    if (w == 0 || w > (1u << 20)) throw FormatError("RFNN: bad layer width");
  }
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) params += widths[l + 1] * (widths[l] + 1);
  if (r.remaining() != params * 4) throw FormatError("RFNN: payload length does not match widths");
  MlpVelocityNet net = [&] {
    try {
      return MlpVelocityNet(widths);
    } catch (const ConfigError& e) {
      throw FormatError(std::string("RFNN: ") + e.what());
    }
  }();
  for (auto& v : net.parameters()) v = r.f32();
  return net;
}

inline MlpVelocityNet checkpoint_load(const std::filesystem::path& path,
                                      const std::vector<std::size_t>& expected_widths) {
  auto net = checkpoint_load(path);
  if (net.widths() != expected_widths) throw FormatError("RFNN: layer widths differ from the expected architecture");
  return net;
}

class MlpVelocityField final : public VelocityField {
 public:
  MlpVelocityField(MlpVelocityNet net, Shape shape) : net_(std::move(net)), shape_(shape) {
    if (shape_.size() != net_.sample_dim()) {
      throw ShapeError("MlpVelocityField: shape " + to_string(shape_) + " does not match net dim " +
                       std::to_string(net_.sample_dim()));
    }
  }

  const MlpVelocityNet& net() const { return net_; }
  const Shape& shape() const { return shape_; }

 protected:
  ImageTensor do_evaluate(const ImageTensor& x, double t) const override {
    if (x.shape() != shape_) throw ShapeError("MlpVelocityField: input shape mismatch");
    const auto v = net_.forward(x.data(), t);
    ImageTensor out(x.shape());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i]);
    return out;
  }

 private:
  MlpVelocityNet net_;
  Shape shape_;
};

}  // namespace restora
