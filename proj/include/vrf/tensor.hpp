#pragma once

// Dense rank-4 NCHW tensors and the elementwise/reduction kernels built on them.

#include <algorithm>
#include <cassert>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "vrf/scalar.hpp"

namespace vrf {

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Shape {
  std::size_t n = 1;
  std::size_t c = 1;
  std::size_t h = 1;
  std::size_t w = 1;

  constexpr std::size_t numel() const { return n * c * h * w; }
  constexpr std::size_t plane() const { return h * w; }
  constexpr std::size_t index(std::size_t in, std::size_t ic, std::size_t ih,
                              std::size_t iw) const {
    return ((in * c + ic) * h + ih) * w + iw;
  }
  constexpr bool valid() const { return n >= 1 && c >= 1 && h >= 1 && w >= 1; }

  std::string str() const {
    std::ostringstream os;
    os << '(' << n << ',' << c << ',' << h << ',' << w << ')';
    return os.str();
  }

  friend constexpr bool operator==(const Shape&, const Shape&) = default;
};

template <Scalar T>
class Tensor {
 public:
  using value_type = T;

  Tensor() : data_(1, T{0}) {}

  explicit Tensor(Shape shape, T fill = T{0}) : shape_(shape) {
    check_shape(shape);
    data_.assign(shape.numel(), fill);
  }

  Tensor(Shape shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
    check_shape(shape);
    if (data_.size() != shape.numel()) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape.str());
    }
  }

  static Tensor zeros(Shape shape) { return Tensor(shape); }
  static Tensor full(Shape shape, T value) { return Tensor(shape, value); }
  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape()); }

  const Shape& shape() const { return shape_; }
  static constexpr DType dtype()
    requires StorageScalar<T>
  {
    return dtype_of<T>;
  }
  std::size_t numel() const { return data_.size(); }

  std::span<const T> data() const { return data_; }
  std::span<T> data() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return data_[shape_.index(n, c, h, w)];
  }
  const T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return data_[shape_.index(n, c, h, w)];
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return math::isfinite(v); });
  }

  template <Scalar U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(out));
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  static void check_shape(const Shape& s) {
    if (!s.valid()) throw ShapeError("tensor shape components must be >= 1, got " + s.str());
  }

  Shape shape_;
  std::vector<T> data_;
};

// Checked in debug builds on every library-produced forward value.
template <Scalar T>
inline void debug_check_finite([[maybe_unused]] const Tensor<T>& t) {
  assert(t.all_finite() && "non-finite value produced by forward pass");
}

// ---------------------------------------------------------------------------
// Elementwise arithmetic with broadcasting of the right operand.

enum class BinaryOp { add, mul, hadamard };

/// `b` broadcasts onto `a` when every axis of `b` equals the matching axis of
/// `a` or is 1.
inline bool broadcastable(const Shape& a, const Shape& b) {
  auto ok = [](std::size_t x, std::size_t y) { return y == x || y == 1; };
  return ok(a.n, b.n) && ok(a.c, b.c) && ok(a.h, b.h) && ok(a.w, b.w);
}

inline void require_broadcastable(const Shape& a, const Shape& b, const char* what) {
  if (!broadcastable(a, b)) {
    throw ShapeError(std::string(what) + ": shape mismatch " + a.str() + " vs " + b.str());
  }
}

/// Index into `b` for element (n,c,h,w) of a tensor with the broadcast target shape.
inline std::size_t broadcast_index(const Shape& b, std::size_t n, std::size_t c, std::size_t h,
                                   std::size_t w) {
  return b.index(b.n == 1 ? 0 : n, b.c == 1 ? 0 : c, b.h == 1 ? 0 : h, b.w == 1 ? 0 : w);
}

template <Scalar T, class F>
Tensor<T> broadcast_apply(const Tensor<T>& a, const Tensor<T>& b, F&& f) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  Tensor<T> out(sa);
  if (sa == sb) {
    for (std::size_t i = 0; i < a.numel(); ++i) out[i] = f(a[i], b[i]);
    return out;
  }
  std::size_t i = 0;
  for (std::size_t n = 0; n < sa.n; ++n)
    for (std::size_t c = 0; c < sa.c; ++c)
      for (std::size_t h = 0; h < sa.h; ++h)
        for (std::size_t w = 0; w < sa.w; ++w, ++i) out[i] = f(a[i], b[broadcast_index(sb, n, c, h, w)]);
  return out;
}

template <Scalar T>
Tensor<T> elementwise(BinaryOp op, const Tensor<T>& a, const Tensor<T>& b) {
  require_broadcastable(a.shape(), b.shape(), op == BinaryOp::add ? "add" : "hadamard");
  if (op == BinaryOp::add) return broadcast_apply(a, b, [](T x, T y) { return x + y; });
  return broadcast_apply(a, b, [](T x, T y) { return x * y; });
}

template <Scalar T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return elementwise(BinaryOp::add, a, b);
}

template <Scalar T>
Tensor<T> hadamard(const Tensor<T>& a, const Tensor<T>& b) {
  return elementwise(BinaryOp::hadamard, a, b);
}

/// Sums `g` (shaped like the broadcast target) down to `target`.
template <Scalar T>
Tensor<T> reduce_to(const Tensor<T>& g, const Shape& target) {
  if (g.shape() == target) return g;
  Tensor<T> out(target);
  const Shape& s = g.shape();
  std::size_t i = 0;
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c)
      for (std::size_t h = 0; h < s.h; ++h)
        for (std::size_t w = 0; w < s.w; ++w, ++i) out[broadcast_index(target, n, c, h, w)] += g[i];
  return out;
}

template <Scalar T, class F>
Tensor<T> map(const Tensor<T>& x, F&& f) {
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) out[i] = f(x[i]);
  return out;
}

template <Scalar T>
Tensor<T> scale(const Tensor<T>& x, T s) {
  return map(x, [s](T v) { return v * s; });
}

// ---------------------------------------------------------------------------
// Channel-axis reductions: (n,c,h,w) -> (n,1,h,w).

enum class ReduceKind { avg, max };

template <Scalar T>
Tensor<T> reduce_channel(ReduceKind kind, const Tensor<T>& x) {
  const Shape& s = x.shape();
  Tensor<T> out(Shape{s.n, 1, s.h, s.w});
  const std::size_t plane = s.plane();
  for (std::size_t n = 0; n < s.n; ++n) {
    const T* base = x.data().data() + n * s.c * plane;
    T* dst = out.data().data() + n * plane;
    for (std::size_t p = 0; p < plane; ++p) {
      if (kind == ReduceKind::avg) {
        accum_t<T> acc = 0;
        for (std::size_t c = 0; c < s.c; ++c) acc += base[c * plane + p];
        dst[p] = static_cast<T>(acc / static_cast<accum_t<T>>(s.c));
      } else {
        T best = base[p];
        for (std::size_t c = 1; c < s.c; ++c) best = std::max(best, base[c * plane + p]);
        dst[p] = best;
      }
    }
  }
  return out;
}

/// Mean over (h,w) per (n,c): (n,c,h,w) -> (n,c,1,1).
template <Scalar T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  const Shape& s = x.shape();
  Tensor<T> out(Shape{s.n, s.c, 1, 1});
  const std::size_t plane = s.plane();
  for (std::size_t nc = 0; nc < s.n * s.c; ++nc) {
    accum_t<T> acc = 0;
    const T* src = x.data().data() + nc * plane;
    for (std::size_t p = 0; p < plane; ++p) acc += src[p];
    out[nc] = static_cast<T>(acc / static_cast<accum_t<T>>(plane));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Channel concatenation and slicing.

template <Scalar T>
Tensor<T> concat_channels(std::span<const Tensor<T>* const> parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape first = parts.front()->shape();
  std::size_t total_c = 0;
  for (const auto* p : parts) {
    const Shape& s = p->shape();
    if (s.n != first.n || s.h != first.h || s.w != first.w) {
      throw ShapeError("concat: shape mismatch " + first.str() + " vs " + s.str());
    }
    total_c += s.c;
  }
  Tensor<T> out(Shape{first.n, total_c, first.h, first.w});
  const std::size_t plane = first.plane();
  for (std::size_t n = 0; n < first.n; ++n) {
    T* dst = out.data().data() + n * total_c * plane;
    for (const auto* p : parts) {
      const std::size_t len = p->shape().c * plane;
      const T* src = p->data().data() + n * len;
      dst = std::copy(src, src + len, dst);
    }
  }
  return out;
}

template <Scalar T>
Tensor<T> slice_channels(const Tensor<T>& x, std::size_t begin, std::size_t count) {
  const Shape& s = x.shape();
  if (count == 0 || begin + count > s.c) {
    throw ShapeError("slice: channels [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") out of range for " + s.str());
  }
  Tensor<T> out(Shape{s.n, count, s.h, s.w});
  const std::size_t plane = s.plane();
  for (std::size_t n = 0; n < s.n; ++n) {
    const T* src = x.data().data() + (n * s.c + begin) * plane;
    std::copy(src, src + count * plane, out.data().data() + n * count * plane);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Comparison helpers shared by tests, the oracle report and the CLI.

struct DiffStats {
  double max_abs = 0.0;
  double max_rel = 0.0;
  std::size_t worst_index = 0;
};

template <Scalar A, Scalar B>
DiffStats diff(const Tensor<A>& a, const Tensor<B>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("diff: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  }
  DiffStats d;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double x = a[i];
    const double y = b[i];
    const double abs = std::abs(x - y);
    const double rel = abs / std::max(std::abs(y), 1e-8);
    if (abs > d.max_abs) {
      d.max_abs = abs;
      d.worst_index = i;
    }
    d.max_rel = std::max(d.max_rel, rel);
  }
  return d;
}

}  // namespace vrf
