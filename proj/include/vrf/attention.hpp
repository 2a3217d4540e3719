#pragma once

// Spatial attention (channel-pooled mask) and squeeze-excitation channel attention.

#include <cstddef>
#include <stdexcept>
#include <string>

#include "vrf/layers.hpp"

namespace vrf {

/// sigmoid(conv([avg_c(F); max_c(F)])) -> (n, mask_channels, h, w).
template <Scalar T>
struct SpatialAttention {
  Conv2d<T> conv;

  SpatialAttention() = default;
  SpatialAttention(std::size_t mask_channels, std::size_t kernel)
      : conv(nn::ConvSpec::same(2, mask_channels, kernel)) {}

  std::size_t mask_channels() const { return conv.spec.c_out; }

  void init(Rng& rng) { conv.init(rng); }

  Var forward(Tape<T>& tape, Var features) const {
    const Var avg = reduce_channel(tape, ReduceKind::avg, features);
    const Var max = reduce_channel(tape, ReduceKind::max, features);
    const Var pooled = concat_channels(tape, {avg, max});
    return activation(tape, nn::Activation::sigmoid, conv.forward(tape, pooled));
  }

  Tensor<T> operator()(const Tensor<T>& features) const {
    Tape<T> tape;
    return tape.value(forward(tape, tape.constant(features)));
  }

  template <class F>
  void visit(F&& f, const std::string& prefix) {
    conv.visit(f, join_name(prefix, "conv"));
  }
};

/// sigmoid(expand(relu(reduce(gap(x))))) -> per-channel weights (n, c, 1, 1).
template <Scalar T>
struct ChannelAttention {
  std::size_t ratio = 4;
  Conv2d<T> reduce;
  Conv2d<T> expand;

  ChannelAttention() = default;
  ChannelAttention(std::size_t channels, std::size_t r) : ratio(r) {
    if (r == 0 || channels % r != 0) {
      throw std::invalid_argument("channel attention: channels " + std::to_string(channels) +
                                  " not divisible by ratio " + std::to_string(r));
    }
    reduce = Conv2d<T>(nn::ConvSpec::pointwise(channels, channels / r));
    expand = Conv2d<T>(nn::ConvSpec::pointwise(channels / r, channels));
  }

  std::size_t channels() const { return reduce.spec.c_in; }

  void init(Rng& rng) {
    reduce.init(rng);
    expand.init(rng);
  }

  Var forward(Tape<T>& tape, Var x) const {
    if (tape.value(x).shape().c != channels()) {
      throw ShapeError("channel attention: input " + tape.value(x).shape().str() + " expects " +
                       std::to_string(channels()) + " channels");
    }
    const Var pooled = global_avg_pool(tape, x);
    const Var hidden = activation(tape, nn::Activation::relu, reduce.forward(tape, pooled));
    return activation(tape, nn::Activation::sigmoid, expand.forward(tape, hidden));
  }

  Tensor<T> operator()(const Tensor<T>& x) const {
    Tape<T> tape;
    return tape.value(forward(tape, tape.constant(x)));
  }

  template <class F>
  void visit(F&& f, const std::string& prefix) {
    reduce.visit(f, join_name(prefix, "reduce"));
    expand.visit(f, join_name(prefix, "expand"));
  }
};

/// Tensor-level entry points.
template <Scalar T>
Tensor<T> spatial_attention(const Tensor<T>& features, const SpatialAttention<T>& params) {
  return params(features);
}

template <Scalar T>
Tensor<T> channel_attention(const Tensor<T>& x, const ChannelAttention<T>& params) {
  return params(x);
}

}  // namespace vrf
