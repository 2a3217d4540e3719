#pragma once

// Activations, batch normalization and dropout.

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "vrf/rng.hpp"
#include "vrf/tensor.hpp"

namespace vrf::nn {

enum class Mode { train, eval };

inline const char* to_string(Mode m) { return m == Mode::train ? "train" : "eval"; }

enum class Activation { relu, sigmoid, sigmoid_gate };

inline const char* to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::sigmoid: return "sigmoid";
    case Activation::sigmoid_gate: return "sigmoid_gate";
  }
  return "?";
}

/// Slope of the sigmoid gate x * sigmoid(1.702 x), a sigmoid approximation of GELU.
inline constexpr double kGateSlope = 1.702;

template <Scalar T>
T sigmoid(T x) {
  if (x >= T{0}) return T{1} / (T{1} + math::exp(-x));
  const T e = math::exp(x);
  return e / (T{1} + e);
}

template <Scalar T>
T sigmoid_gate(T x) {
  return x * sigmoid(static_cast<T>(kGateSlope) * x);
}

template <Scalar T>
T sigmoid_gate_derivative(T x) {
  const T a = static_cast<T>(kGateSlope);
  const T s = sigmoid(a * x);
  return s + x * a * s * (T{1} - s);
}

template <Scalar T>
T relu(T x) {
  return x > T{0} ? x : T{0};
}

template <Scalar T>
Tensor<T> activation(Activation kind, const Tensor<T>& x) {
  switch (kind) {
    case Activation::relu: return map(x, [](T v) { return relu(v); });
    case Activation::sigmoid: return map(x, [](T v) { return sigmoid(v); });
    case Activation::sigmoid_gate: return map(x, [](T v) { return sigmoid_gate(v); });
  }
  throw std::invalid_argument("unknown activation");
}

// ---------------------------------------------------------------------------

template <Scalar T>
struct BatchNormState {
  Tensor<T> gamma;
  Tensor<T> beta;
  Tensor<T> running_mean;
  Tensor<T> running_var;
  double eps = 1e-5;
  double momentum = 0.1;
  Mode mode = Mode::eval;

  BatchNormState() = default;

  explicit BatchNormState(std::size_t channels, double eps_ = 1e-5, double momentum_ = 0.1)
      : gamma(Shape{1, channels, 1, 1}, T{1}),
        beta(Shape{1, channels, 1, 1}),
        running_mean(Shape{1, channels, 1, 1}),
        running_var(Shape{1, channels, 1, 1}, T{1}),
        eps(eps_),
        momentum(momentum_) {}

  std::size_t channels() const { return gamma.shape().c; }
};

/// Per-channel mean and biased variance over (n,h,w).
template <Scalar T>
void batch_stats(const Tensor<T>& x, std::vector<accum_t<T>>& mean, std::vector<accum_t<T>>& var) {
  const Shape& s = x.shape();
  const std::size_t plane = s.plane();
  const auto count = static_cast<accum_t<T>>(s.n * plane);
  mean.assign(s.c, 0.0);
  var.assign(s.c, 0.0);
  for (std::size_t c = 0; c < s.c; ++c) {
    accum_t<T> acc = 0;
    for (std::size_t n = 0; n < s.n; ++n) {
      const T* src = x.data().data() + (n * s.c + c) * plane;
      for (std::size_t p = 0; p < plane; ++p) acc += src[p];
    }
    mean[c] = acc / count;
    accum_t<T> sq = 0;
    for (std::size_t n = 0; n < s.n; ++n) {
      const T* src = x.data().data() + (n * s.c + c) * plane;
      for (std::size_t p = 0; p < plane; ++p) {
        const accum_t<T> d = src[p] - mean[c];
        sq += d * d;
      }
    }
    var[c] = sq / count;
  }
}

/// Per-channel statistics used for normalization in the given mode. In train
/// mode, running statistics are updated with the unbiased batch variance.
template <Scalar T>
void batch_norm_statistics(const Tensor<T>& x, BatchNormState<T>& state, std::vector<accum_t<T>>& mean,
                           std::vector<accum_t<T>>& var) {
  const Shape& s = x.shape();
  if (s.c != state.channels()) {
    throw ShapeError("batch_norm: input " + s.str() + " has " + std::to_string(s.c) + " channels, state has " +
                     std::to_string(state.channels()));
  }
  if (state.mode == Mode::eval) {
    mean.assign(state.running_mean.data().begin(), state.running_mean.data().end());
    var.assign(state.running_var.data().begin(), state.running_var.data().end());
    return;
  }
  const std::size_t count = s.n * s.plane();
  if (count < 2) {
    throw std::invalid_argument("batch_norm: train mode needs at least 2 values per channel, got n*h*w=" +
                                std::to_string(count));
  }
  batch_stats(x, mean, var);
  const double m = state.momentum;
  const double unbias = static_cast<double>(count) / static_cast<double>(count - 1);
  for (std::size_t c = 0; c < s.c; ++c) {
    state.running_mean[c] = static_cast<T>((1.0 - m) * state.running_mean[c] + m * mean[c]);
    state.running_var[c] = static_cast<T>((1.0 - m) * state.running_var[c] + m * var[c] * unbias);
  }
}

/// y = gamma * (x - mean) / sqrt(var + eps) + beta, with `inv_std` the
/// per-channel 1/sqrt(var + eps) and `xhat` (optional) the normalized input.
template <Scalar T>
Tensor<T> batch_norm_apply(const Tensor<T>& x, const BatchNormState<T>& state, const std::vector<accum_t<T>>& mean,
                           const std::vector<accum_t<T>>& var, std::vector<accum_t<T>>* inv_std_out = nullptr,
                           Tensor<T>* xhat_out = nullptr) {
  const Shape& s = x.shape();
  const std::size_t plane = s.plane();
  Tensor<T> out(s);
  if (xhat_out != nullptr) *xhat_out = Tensor<T>(s);
  std::vector<accum_t<T>> inv_std(s.c);
  for (std::size_t c = 0; c < s.c; ++c) inv_std[c] = 1 / math::sqrt(var[c] + static_cast<accum_t<T>>(state.eps));
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      const std::size_t base = (n * s.c + c) * plane;
      const T mu = static_cast<T>(mean[c]);
      const T is = static_cast<T>(inv_std[c]);
      for (std::size_t p = 0; p < plane; ++p) {
        const T xh = (x[base + p] - mu) * is;
        if (xhat_out != nullptr) (*xhat_out)[base + p] = xh;
        out[base + p] = state.gamma[c] * xh + state.beta[c];
      }
    }
  }
  if (inv_std_out != nullptr) *inv_std_out = std::move(inv_std);
  return out;
}

template <Scalar T>
Tensor<T> batch_norm(const Tensor<T>& x, BatchNormState<T>& state) {
  std::vector<accum_t<T>> mean, var;
  batch_norm_statistics(x, state, mean, var);
  return batch_norm_apply(x, state, mean, var);
}

// ---------------------------------------------------------------------------

struct DropoutState {
  double p = 0.0;
  Mode mode = Mode::eval;
  Rng rng{0};

  void validate() const {
    if (!(p >= 0.0 && p < 1.0)) {
      throw std::invalid_argument("dropout: probability must be in [0, 1), got " + std::to_string(p));
    }
  }

  bool active() const { return mode == Mode::train && p > 0.0; }
};

/// Draws the keep mask, scaled by 1/(1-p): each entry is 0 or 1/(1-p).
template <Scalar T>
Tensor<T> dropout_mask(const Shape& shape, DropoutState& state) {
  state.validate();
  const T keep_scale = static_cast<T>(1.0 / (1.0 - state.p));
  Tensor<T> mask(shape);
  for (auto& m : mask.data()) m = state.rng.uniform() < state.p ? T{0} : keep_scale;
  return mask;
}

template <Scalar T>
Tensor<T> dropout(const Tensor<T>& x, DropoutState& state) {
  state.validate();
  if (!state.active()) return x;
  return hadamard(x, dropout_mask<T>(x.shape(), state));
}

}  // namespace vrf::nn
