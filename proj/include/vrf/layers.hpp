#pragma once

// Parameterized layers and the parameter-visiting protocol shared by blocks.
//
// Every layer and block exposes
//   template <class F> void visit(F&& f, const std::string& prefix)
// calling f(name, tensor, kind) for each tensor it owns, in a fixed order.
// That order defines the manifest layout and the gradient-check order.

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "vrf/nn/conv.hpp"
#include "vrf/nn/functional.hpp"
#include "vrf/ops.hpp"
#include "vrf/rng.hpp"
#include "vrf/tape.hpp"

namespace vrf {

/// Learnable tensors are parameters; running statistics are buffers.
enum class ParamKind { parameter, buffer };

inline std::string join_name(const std::string& prefix, const std::string& name) {
  return prefix.empty() ? name : prefix + "." + name;
}

template <Scalar T>
struct NamedTensor {
  std::string name;
  Tensor<T>* tensor;
  ParamKind kind;
};

/// Flat, ordered view of a block's tensors.
template <Scalar T, class Block>
std::vector<NamedTensor<T>> named_tensors(Block& block) {
  std::vector<NamedTensor<T>> out;
  block.visit([&](const std::string& name, Tensor<T>& t, ParamKind kind) { out.push_back({name, &t, kind}); }, "");
  return out;
}

/// Total element count of a block's learnable parameters.
template <Scalar T, class Block>
std::size_t parameter_elements(Block& block) {
  std::size_t total = 0;
  for (const auto& nt : named_tensors<T>(block)) {
    if (nt.kind == ParamKind::parameter) total += nt.tensor->numel();
  }
  return total;
}

/// Copies every tensor of `src` into the matching slot of `dst`, converting
/// the element type. Both blocks must be built from the same configuration.
template <Scalar U, Scalar T, class Dst, class Src>
void copy_tensors(Dst& dst, Src src) {
  const auto to = named_tensors<U>(dst);
  const auto from = named_tensors<T>(src);
  if (to.size() != from.size()) throw ShapeError("copy_tensors: blocks have different layouts");
  for (std::size_t i = 0; i < to.size(); ++i) {
    if (to[i].name != from[i].name || to[i].tensor->shape() != from[i].tensor->shape()) {
      throw ShapeError("copy_tensors: mismatch at " + from[i].name);
    }
    *to[i].tensor = from[i].tensor->template cast<U>();
  }
}

template <Scalar T>
struct Conv2d {
  nn::ConvSpec spec;
  Tensor<T> weight;
  std::optional<Tensor<T>> bias;

  Conv2d() = default;

  explicit Conv2d(const nn::ConvSpec& s) : spec(s), weight((s.validate(), s.weight_shape())) {
    if (s.bias) bias.emplace(s.bias_shape());
  }

  /// Uniform in ±1/sqrt(fan_in) for weights and bias.
  void init(Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>((spec.c_in / spec.groups) * spec.k * spec.k));
    fill_uniform(weight, rng, -bound, bound);
    if (bias) fill_uniform(*bias, rng, -bound, bound);
  }

  Var forward(Tape<T>& tape, Var x) const {
    const Var w = tape.param(weight);
    std::optional<Var> b;
    if (bias) b = tape.param(*bias);
    return conv2d(tape, x, w, b, spec);
  }

  Tensor<T> operator()(const Tensor<T>& x) const { return nn::conv2d(x, weight, bias, spec); }

  template <class F>
  void visit(F&& f, const std::string& prefix) {
    f(join_name(prefix, "weight"), weight, ParamKind::parameter);
    if (bias) f(join_name(prefix, "bias"), *bias, ParamKind::parameter);
  }
};

/// Batch normalization layer: gamma/beta are parameters, running stats buffers.
template <Scalar T>
struct BatchNorm2d {
  nn::BatchNormState<T> state;

  BatchNorm2d() = default;
  BatchNorm2d(std::size_t channels, double eps, double momentum) : state(channels, eps, momentum) {}

  void init(Rng& rng) {
    fill_uniform(state.gamma, rng, 0.5, 1.5);
    fill_uniform(state.beta, rng, -0.5, 0.5);
    fill_uniform(state.running_mean, rng, -0.5, 0.5);
    fill_uniform(state.running_var, rng, 0.5, 1.5);
  }

  Var forward(Tape<T>& tape, Var x, nn::Mode mode) {
    state.mode = mode;
    return batch_norm(tape, x, tape.param(state.gamma), tape.param(state.beta), state);
  }

  template <class F>
  void visit(F&& f, const std::string& prefix) {
    f(join_name(prefix, "gamma"), state.gamma, ParamKind::parameter);
    f(join_name(prefix, "beta"), state.beta, ParamKind::parameter);
    f(join_name(prefix, "running_mean"), state.running_mean, ParamKind::buffer);
    f(join_name(prefix, "running_var"), state.running_var, ParamKind::buffer);
  }
};

/// Runs a block on a fresh tape and returns the output value.
template <Scalar T, class Block>
Tensor<T> run_forward(Block& block, const Tensor<T>& x, nn::Mode mode = nn::Mode::eval) {
  Tape<T> tape;
  const Var y = block.forward(tape, tape.constant(x), mode);
  return tape.value(y);
}

}  // namespace vrf
