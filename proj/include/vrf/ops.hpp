#pragma once

// Differentiable operations recorded on a Tape. Forward values come from the
// plain tensor kernels; each op registers the matching adjoint rule.

#include <cstddef>
#include <optional>
#include <vector>

#include "vrf/nn/conv.hpp"
#include "vrf/nn/functional.hpp"
#include "vrf/tape.hpp"
#include "vrf/tensor.hpp"

namespace vrf {

template <Scalar T>
using GradSlots = std::span<Tensor<T>* const>;

namespace detail {
template <Scalar T>
void accumulate(Tensor<T>* dst, const Tensor<T>& src) {
  if (dst == nullptr) return;
  for (std::size_t i = 0; i < src.numel(); ++i) (*dst)[i] += src[i];
}
}  // namespace detail

/// a + b, with b broadcast onto a.
template <Scalar T>
Var add(Tape<T>& tape, Var a, Var b) {
  const Shape sb = tape.value(b).shape();
  return tape.record(OpKind::add, {a, b}, add(tape.value(a), tape.value(b)),
                     [sb](const Tensor<T>& g, GradSlots<T> in) {
                       detail::accumulate(in[0], g);
                       if (in[1]) detail::accumulate(in[1], reduce_to(g, sb));
                     });
}

/// a ⊙ b, with b broadcast onto a.
template <Scalar T>
Var hadamard(Tape<T>& tape, Var a, Var b) {
  const Tape<T>* t = &tape;
  return tape.record(OpKind::hadamard, {a, b}, hadamard(tape.value(a), tape.value(b)),
                     [t, a, b](const Tensor<T>& g, GradSlots<T> in) {
                       const Tensor<T>& va = t->value(a);
                       const Tensor<T>& vb = t->value(b);
                       if (in[0]) detail::accumulate(in[0], hadamard(g, vb));
                       if (in[1]) detail::accumulate(in[1], reduce_to(hadamard(g, va), vb.shape()));
                     });
}

template <Scalar T>
Var scale(Tape<T>& tape, Var a, T s) {
  return tape.record(OpKind::scale, {a}, scale(tape.value(a), s),
                     [s](const Tensor<T>& g, GradSlots<T> in) { detail::accumulate(in[0], scale(g, s)); });
}

/// Sum of all elements: any shape -> (1,1,1,1).
template <Scalar T>
Var sum(Tape<T>& tape, Var a) {
  const Tensor<T>& v = tape.value(a);
  accum_t<T> acc = 0;
  for (T x : v.data()) acc += x;
  return tape.record(OpKind::sum, {a}, Tensor<T>(Shape{}, static_cast<T>(acc)),
                     [](const Tensor<T>& g, GradSlots<T> in) {
                       for (auto& x : in[0]->data()) x += g[0];
                     });
}

template <Scalar T>
Var conv2d(Tape<T>& tape, Var x, Var w, std::optional<Var> b, const nn::ConvSpec& spec) {
  const Tensor<T>* bias = b ? &tape.value(*b) : nullptr;
  Tensor<T> out = nn::conv2d(tape.value(x), tape.value(w), bias, spec);
  std::vector<Var> inputs{x, w};
  if (b) inputs.push_back(*b);
  const Tape<T>* t = &tape;
  return tape.record(OpKind::conv2d, std::move(inputs), std::move(out),
                     [t, x, w, spec](const Tensor<T>& g, GradSlots<T> in) {
                       if (in[0]) nn::conv2d_backward_input(g, t->value(w), spec, *in[0]);
                       if (in[1]) nn::conv2d_backward_weight(g, t->value(x), spec, *in[1]);
                       if (in.size() > 2 && in[2]) nn::conv2d_backward_bias(g, *in[2]);
                     });
}

template <Scalar T>
Var activation(Tape<T>& tape, nn::Activation kind, Var x) {
  const Tape<T>* t = &tape;
  Tensor<T> out = nn::activation(kind, tape.value(x));
  switch (kind) {
    case nn::Activation::relu:
      // relu'(0) := 0
      return tape.record(OpKind::relu, {x}, std::move(out), [t, x](const Tensor<T>& g, GradSlots<T> in) {
        const Tensor<T>& v = t->value(x);
        for (std::size_t i = 0; i < g.numel(); ++i) (*in[0])[i] += v[i] > T{0} ? g[i] : T{0};
      });
    case nn::Activation::sigmoid: {
      const Var self{tape.size()};
      return tape.record(OpKind::sigmoid, {x}, std::move(out), [t, self](const Tensor<T>& g, GradSlots<T> in) {
        const Tensor<T>& y = t->value(self);
        for (std::size_t i = 0; i < g.numel(); ++i) (*in[0])[i] += g[i] * y[i] * (T{1} - y[i]);
      });
    }
    case nn::Activation::sigmoid_gate:
      return tape.record(OpKind::sigmoid_gate, {x}, std::move(out), [t, x](const Tensor<T>& g, GradSlots<T> in) {
        const Tensor<T>& v = t->value(x);
        for (std::size_t i = 0; i < g.numel(); ++i) (*in[0])[i] += g[i] * nn::sigmoid_gate_derivative(v[i]);
      });
  }
  throw std::invalid_argument("unknown activation");
}

template <Scalar T>
Var reduce_channel(Tape<T>& tape, ReduceKind kind, Var x) {
  const Tensor<T>& v = tape.value(x);
  const Shape s = v.shape();
  const std::size_t plane = s.plane();
  if (kind == ReduceKind::avg) {
    return tape.record(OpKind::reduce_avg, {x}, reduce_channel(kind, v), [s, plane](const Tensor<T>& g, GradSlots<T> in) {
      const T inv = static_cast<T>(1.0 / static_cast<double>(s.c));
      for (std::size_t n = 0; n < s.n; ++n)
        for (std::size_t c = 0; c < s.c; ++c)
          for (std::size_t p = 0; p < plane; ++p) (*in[0])[(n * s.c + c) * plane + p] += g[n * plane + p] * inv;
    });
  }
  // Ties route the adjoint to the first maximal channel, as the forward keeps it.
  std::vector<std::size_t> argmax(s.n * plane, 0);
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t p = 0; p < plane; ++p) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < s.c; ++c) {
        if (v[(n * s.c + best) * plane + p] < v[(n * s.c + c) * plane + p]) best = c;
      }
      argmax[n * plane + p] = (n * s.c + best) * plane + p;
    }
  }
  return tape.record(OpKind::reduce_max, {x}, reduce_channel(kind, v),
                     [argmax = std::move(argmax)](const Tensor<T>& g, GradSlots<T> in) {
                       for (std::size_t i = 0; i < argmax.size(); ++i) (*in[0])[argmax[i]] += g[i];
                     });
}

template <Scalar T>
Var global_avg_pool(Tape<T>& tape, Var x) {
  const Shape s = tape.value(x).shape();
  return tape.record(OpKind::global_avg_pool, {x}, global_avg_pool(tape.value(x)),
                     [s](const Tensor<T>& g, GradSlots<T> in) {
                       const std::size_t plane = s.plane();
                       const T inv = static_cast<T>(1.0 / static_cast<double>(plane));
                       for (std::size_t nc = 0; nc < s.n * s.c; ++nc)
                         for (std::size_t p = 0; p < plane; ++p) (*in[0])[nc * plane + p] += g[nc] * inv;
                     });
}

template <Scalar T>
Var concat_channels(Tape<T>& tape, const std::vector<Var>& parts) {
  std::vector<const Tensor<T>*> values;
  std::vector<std::size_t> widths;
  for (Var p : parts) {
    values.push_back(&tape.value(p));
    widths.push_back(tape.value(p).shape().c);
  }
  Tensor<T> out = concat_channels<T>(values);
  return tape.record(OpKind::concat, parts, std::move(out), [widths](const Tensor<T>& g, GradSlots<T> in) {
    std::size_t begin = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      if (in[k]) detail::accumulate(in[k], slice_channels(g, begin, widths[k]));
      begin += widths[k];
    }
  });
}

template <Scalar T>
Var slice_channels(Tape<T>& tape, Var x, std::size_t begin, std::size_t count) {
  const Shape s = tape.value(x).shape();
  return tape.record(OpKind::slice, {x}, slice_channels(tape.value(x), begin, count),
                     [s, begin, count](const Tensor<T>& g, GradSlots<T> in) {
                       const std::size_t plane = s.plane();
                       for (std::size_t n = 0; n < s.n; ++n) {
                         const T* src = g.data().data() + n * count * plane;
                         T* dst = in[0]->data().data() + (n * s.c + begin) * plane;
                         for (std::size_t i = 0; i < count * plane; ++i) dst[i] += src[i];
                       }
                     });
}

/// Batch normalization with learnable gamma/beta leaves. Train mode
/// differentiates through the batch statistics and updates running stats.
template <Scalar T>
Var batch_norm(Tape<T>& tape, Var x, Var gamma, Var beta, nn::BatchNormState<T>& state) {
  std::vector<accum_t<T>> mean, var, inv_std;
  nn::batch_norm_statistics(tape.value(x), state, mean, var);
  nn::BatchNormState<T> view = state;
  view.gamma = tape.value(gamma);
  view.beta = tape.value(beta);
  Tensor<T> xhat;
  Tensor<T> out = nn::batch_norm_apply(tape.value(x), view, mean, var, &inv_std, &xhat);
  const bool train = state.mode == nn::Mode::train;
  const Tape<T>* t = &tape;
  return tape.record(
      OpKind::batch_norm, {x, gamma, beta}, std::move(out),
      [t, gamma, train, inv_std = std::move(inv_std), xhat = std::move(xhat)](const Tensor<T>& g, GradSlots<T> in) {
        const Shape& s = g.shape();
        const std::size_t plane = s.plane();
        const Tensor<T>& gm = t->value(gamma);
        const T count = static_cast<T>(s.n * plane);
        for (std::size_t c = 0; c < s.c; ++c) {
          T sum_g = 0;
          T sum_gx = 0;
          for (std::size_t n = 0; n < s.n; ++n) {
            const std::size_t base = (n * s.c + c) * plane;
            for (std::size_t p = 0; p < plane; ++p) {
              sum_g += g[base + p];
              sum_gx += g[base + p] * xhat[base + p];
            }
          }
          if (in[1]) (*in[1])[c] += sum_gx;
          if (in[2]) (*in[2])[c] += sum_g;
          if (!in[0]) continue;
          const T scale_c = gm[c] * static_cast<T>(inv_std[c]);
          for (std::size_t n = 0; n < s.n; ++n) {
            const std::size_t base = (n * s.c + c) * plane;
            for (std::size_t p = 0; p < plane; ++p) {
              if (train) {
                (*in[0])[base + p] += scale_c * (g[base + p] - sum_g / count - xhat[base + p] * sum_gx / count);
              } else {
                (*in[0])[base + p] += scale_c * g[base + p];
              }
            }
          }
        }
      });
}

/// Dropout; an inactive state (eval, or p = 0) passes the input through.
template <Scalar T>
Var dropout(Tape<T>& tape, Var x, nn::DropoutState& state) {
  state.validate();
  if (!state.active()) return x;
  Tensor<T> mask = nn::dropout_mask<T>(tape.value(x).shape(), state);
  Tensor<T> out = hadamard(tape.value(x), mask);
  return tape.record(OpKind::dropout, {x}, std::move(out), [mask = std::move(mask)](const Tensor<T>& g, GradSlots<T> in) {
    detail::accumulate(in[0], hadamard(g, mask));
  });
}

}  // namespace vrf
