#pragma once

// Element types and the few math functions the kernels need for each.

#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <type_traits>

#if defined(VRF_HAVE_QUADMATH)
#include <quadmath.h>
#endif

namespace vrf {

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

/// Element types that can be stored and serialized.
template <class T>
concept StorageScalar = std::same_as<T, float> || std::same_as<T, double>;

#if defined(VRF_HAVE_QUADMATH)
using quad_t = __float128;
#endif

/// Element types the kernels compute in. The extended types are compute-only:
/// the gradient checker uses them as higher-precision references.
template <class T>
concept Scalar = StorageScalar<T> || std::same_as<T, long double>
#if defined(VRF_HAVE_QUADMATH)
                 || std::same_as<T, quad_t>
#endif
    ;

template <StorageScalar T>
inline constexpr DType dtype_of = std::same_as<T, float> ? DType::f32 : DType::f64;

inline const char* to_string(DType d) { return d == DType::f32 ? "f32" : "f64"; }

inline std::size_t dtype_size(DType d) { return d == DType::f32 ? 4 : 8; }

/// Forward reductions (conv taps, channel means, batch statistics) accumulate
/// in at least double precision.
template <Scalar T>
using accum_t = std::conditional_t<StorageScalar<T>, double, T>;

namespace math {

template <Scalar T>
T exp(T x) {
#if defined(VRF_HAVE_QUADMATH)
  if constexpr (std::same_as<T, quad_t>) return expq(x);
  else
#endif
    return std::exp(x);
}

template <Scalar T>
T sqrt(T x) {
#if defined(VRF_HAVE_QUADMATH)
  if constexpr (std::same_as<T, quad_t>) return sqrtq(x);
  else
#endif
    return std::sqrt(x);
}

template <Scalar T>
bool isfinite(T x) {
#if defined(VRF_HAVE_QUADMATH)
  if constexpr (std::same_as<T, quad_t>) return finiteq(x) != 0;
  else
#endif
    return std::isfinite(x);
}

}  // namespace math

}  // namespace vrf
