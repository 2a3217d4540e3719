#pragma once

// 2-D convolution covering pointwise, depthwise, dilated and grouped variants.

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "vrf/parallel.hpp"
#include "vrf/tensor.hpp"

namespace vrf::nn {

struct ConvSpec {
  std::size_t c_in = 1;
  std::size_t c_out = 1;
  std::size_t k = 1;
  std::size_t stride = 1;
  std::size_t dilation = 1;
  std::size_t groups = 1;
  std::size_t padding = 0;
  bool bias = true;

  /// Stride-1 convolution whose output keeps the input's spatial size.
  static ConvSpec same(std::size_t c_in, std::size_t c_out, std::size_t k, std::size_t dilation = 1,
                       std::size_t groups = 1, bool bias = true) {
    if (k % 2 == 0) {
      throw ShapeError("same padding needs an odd kernel, got k=" + std::to_string(k));
    }
    return ConvSpec{c_in, c_out, k, 1, dilation, groups, dilation * (k - 1) / 2, bias};
  }

  static ConvSpec pointwise(std::size_t c_in, std::size_t c_out, bool bias = true) {
    return same(c_in, c_out, 1, 1, 1, bias);
  }

  static ConvSpec depthwise(std::size_t channels, std::size_t k, std::size_t dilation = 1, bool bias = true) {
    return same(channels, channels, k, dilation, channels, bias);
  }

  bool is_depthwise() const { return groups == c_in && groups == c_out; }

  void validate() const {
    if (c_in == 0 || c_out == 0 || k == 0 || stride == 0 || dilation == 0 || groups == 0) {
      throw ShapeError("conv spec: counts, kernel, stride, dilation and groups must be >= 1");
    }
    if (c_in % groups != 0 || c_out % groups != 0) {
      throw ShapeError("conv spec: c_in=" + std::to_string(c_in) + " and c_out=" + std::to_string(c_out) +
                       " must be divisible by groups=" + std::to_string(groups));
    }
  }

  Shape weight_shape() const { return Shape{c_out, c_in / groups, k, k}; }
  Shape bias_shape() const { return Shape{1, c_out, 1, 1}; }

  std::size_t weight_count() const { return c_out * (c_in / groups) * k * k; }
  std::size_t param_count() const { return weight_count() + (bias ? c_out : 0); }

  std::size_t out_extent(std::size_t in) const {
    const std::size_t span = dilation * (k - 1) + 1;
    if (in + 2 * padding < span) {
      throw ShapeError("conv: input extent " + std::to_string(in) + " too small for dilated kernel span " +
                       std::to_string(span));
    }
    return (in + 2 * padding - span) / stride + 1;
  }

  Shape output_shape(const Shape& in) const { return Shape{in.n, c_out, out_extent(in.h), out_extent(in.w)}; }
};

namespace detail {

/// Output index range [lo, hi) along one axis whose input coordinate
/// o*stride + tap - pad falls inside [0, in).
inline std::pair<std::size_t, std::size_t> valid_range(std::size_t out, std::size_t in, std::size_t stride,
                                                       std::size_t tap, std::size_t pad) {
  // need o*stride + tap >= pad  and  o*stride + tap - pad < in
  std::size_t lo = 0;
  if (tap < pad) lo = (pad - tap + stride - 1) / stride;
  if (tap >= pad + in) return {0, 0};
  const std::size_t lim = in + pad - tap;  // o*stride < lim
  std::size_t hi = (lim + stride - 1) / stride;
  if (hi > out) hi = out;
  if (lo > hi) lo = hi;
  return {lo, hi};
}

template <Scalar T>
void check_conv_args(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* b, const ConvSpec& spec) {
  spec.validate();
  if (x.shape().c != spec.c_in) {
    throw ShapeError("conv2d: input " + x.shape().str() + " has " + std::to_string(x.shape().c) +
                     " channels, spec expects " + std::to_string(spec.c_in));
  }
  if (w.shape() != spec.weight_shape()) {
    throw ShapeError("conv2d: weight shape " + w.shape().str() + ", expected " + spec.weight_shape().str());
  }
  if (spec.bias && b == nullptr) throw ShapeError("conv2d: spec requires a bias tensor");
  if (b != nullptr && b->shape() != spec.bias_shape()) {
    throw ShapeError("conv2d: bias shape " + b->shape().str() + ", expected " + spec.bias_shape().str());
  }
}

}  // namespace detail

/// Direct convolution. Each output plane accumulates bias, then input
/// channels, then kernel rows and columns, in double; planes are
/// independent so the result does not depend on the thread count.
template <Scalar T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const std::type_identity_t<Tensor<T>>* b, const ConvSpec& spec) {
  detail::check_conv_args(x, w, b, spec);
  const Shape in = x.shape();
  const Shape os = spec.output_shape(in);
  Tensor<T> out(os);
  const std::size_t cin_g = spec.c_in / spec.groups;
  const std::size_t cout_g = spec.c_out / spec.groups;
  const std::size_t k = spec.k;

  parallel_for(os.n * os.c, [&](std::size_t job) {
    const std::size_t n = job / os.c;
    const std::size_t o = job % os.c;
    const std::size_t g = o / cout_g;
    std::vector<accum_t<T>> acc(os.plane(), b != nullptr ? static_cast<accum_t<T>>((*b)[o]) : accum_t<T>{0});
    for (std::size_t ci = 0; ci < cin_g; ++ci) {
      const std::size_t c = g * cin_g + ci;
      const T* src = x.data().data() + (n * in.c + c) * in.plane();
      const T* wk = w.data().data() + (o * cin_g + ci) * k * k;
      for (std::size_t u = 0; u < k; ++u) {
        const auto [ilo, ihi] = detail::valid_range(os.h, in.h, spec.stride, u * spec.dilation, spec.padding);
        for (std::size_t v = 0; v < k; ++v) {
          const accum_t<T> wt = wk[u * k + v];
          const auto [jlo, jhi] = detail::valid_range(os.w, in.w, spec.stride, v * spec.dilation, spec.padding);
          for (std::size_t i = ilo; i < ihi; ++i) {
            const T* row = src + (i * spec.stride + u * spec.dilation - spec.padding) * in.w;
            accum_t<T>* dst = acc.data() + i * os.w;
            for (std::size_t j = jlo; j < jhi; ++j) {
              dst[j] += wt * row[j * spec.stride + v * spec.dilation - spec.padding];
            }
          }
        }
      }
    }
    T* dst = out.data().data() + (n * os.c + o) * os.plane();
    for (std::size_t p = 0; p < os.plane(); ++p) dst[p] = static_cast<T>(acc[p]);
  });
  return out;
}

template <Scalar T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const std::optional<Tensor<T>>& b, const ConvSpec& spec) {
  return conv2d(x, w, b ? &*b : nullptr, spec);
}

/// Adds d(loss)/d(input) for output adjoint `gy` into `gx`.
template <Scalar T>
void conv2d_backward_input(const Tensor<T>& gy, const Tensor<T>& w, const ConvSpec& spec, Tensor<T>& gx) {
  const Shape in = gx.shape();
  const Shape os = gy.shape();
  const std::size_t cin_g = spec.c_in / spec.groups;
  const std::size_t cout_g = spec.c_out / spec.groups;
  const std::size_t k = spec.k;
  for (std::size_t n = 0; n < os.n; ++n) {
    for (std::size_t o = 0; o < os.c; ++o) {
      const std::size_t g = o / cout_g;
      const T* gsrc = gy.data().data() + (n * os.c + o) * os.plane();
      for (std::size_t ci = 0; ci < cin_g; ++ci) {
        const std::size_t c = g * cin_g + ci;
        T* dst = gx.data().data() + (n * in.c + c) * in.plane();
        const T* wk = w.data().data() + (o * cin_g + ci) * k * k;
        for (std::size_t u = 0; u < k; ++u) {
          const auto [ilo, ihi] = detail::valid_range(os.h, in.h, spec.stride, u * spec.dilation, spec.padding);
          for (std::size_t v = 0; v < k; ++v) {
            const T wt = wk[u * k + v];
            const auto [jlo, jhi] = detail::valid_range(os.w, in.w, spec.stride, v * spec.dilation, spec.padding);
            for (std::size_t i = ilo; i < ihi; ++i) {
              T* row = dst + (i * spec.stride + u * spec.dilation - spec.padding) * in.w;
              const T* grow = gsrc + i * os.w;
              for (std::size_t j = jlo; j < jhi; ++j) {
                row[j * spec.stride + v * spec.dilation - spec.padding] += wt * grow[j];
              }
            }
          }
        }
      }
    }
  }
}

/// Adds d(loss)/d(weight) into `gw`.
template <Scalar T>
void conv2d_backward_weight(const Tensor<T>& gy, const Tensor<T>& x, const ConvSpec& spec, Tensor<T>& gw) {
  const Shape in = x.shape();
  const Shape os = gy.shape();
  const std::size_t cin_g = spec.c_in / spec.groups;
  const std::size_t cout_g = spec.c_out / spec.groups;
  const std::size_t k = spec.k;
  for (std::size_t o = 0; o < os.c; ++o) {
    const std::size_t g = o / cout_g;
    for (std::size_t ci = 0; ci < cin_g; ++ci) {
      const std::size_t c = g * cin_g + ci;
      T* wk = gw.data().data() + (o * cin_g + ci) * k * k;
      for (std::size_t u = 0; u < k; ++u) {
        const auto [ilo, ihi] = detail::valid_range(os.h, in.h, spec.stride, u * spec.dilation, spec.padding);
        for (std::size_t v = 0; v < k; ++v) {
          const auto [jlo, jhi] = detail::valid_range(os.w, in.w, spec.stride, v * spec.dilation, spec.padding);
          T acc = 0;
          for (std::size_t n = 0; n < os.n; ++n) {
            const T* src = x.data().data() + (n * in.c + c) * in.plane();
            const T* gsrc = gy.data().data() + (n * os.c + o) * os.plane();
            for (std::size_t i = ilo; i < ihi; ++i) {
              const T* row = src + (i * spec.stride + u * spec.dilation - spec.padding) * in.w;
              const T* grow = gsrc + i * os.w;
              for (std::size_t j = jlo; j < jhi; ++j) acc += grow[j] * row[j * spec.stride + v * spec.dilation - spec.padding];
            }
          }
          wk[u * k + v] += acc;
        }
      }
    }
  }
}

/// Adds d(loss)/d(bias) into `gb` (shape (1,c_out,1,1)).
template <Scalar T>
void conv2d_backward_bias(const Tensor<T>& gy, Tensor<T>& gb) {
  const Shape os = gy.shape();
  for (std::size_t n = 0; n < os.n; ++n) {
    for (std::size_t o = 0; o < os.c; ++o) {
      const T* g = gy.data().data() + (n * os.c + o) * os.plane();
      T acc = 0;
      for (std::size_t p = 0; p < os.plane(); ++p) acc += g[p];
      gb[o] += acc;
    }
  }
}

}  // namespace vrf::nn
