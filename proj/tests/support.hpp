#pragma once

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <string>
#include <type_traits>

#include "vrf/vrf.hpp"

namespace vrf::test {

/// Element type of a Tape passed to a generic lambda.
template <class TapeRef>
using scalar_of = typename std::remove_cvref_t<TapeRef>::value_type;

/// loss = sum(y ⊙ w), with w converted to the tape's element type.
template <Scalar R>
Var weighted_sum(Tape<R>& tape, Var y, const Tensor<double>& w) {
  return sum(tape, hadamard(tape, y, tape.constant(w.cast<R>())));
}

template <Scalar R, Scalar T>
nn::BatchNormState<R> cast_state(const nn::BatchNormState<T>& s) {
  nn::BatchNormState<R> out;
  out.gamma = s.gamma.template cast<R>();
  out.beta = s.beta.template cast<R>();
  out.running_mean = s.running_mean.template cast<R>();
  out.running_var = s.running_var.template cast<R>();
  out.eps = s.eps;
  out.momentum = s.momentum;
  out.mode = s.mode;
  return out;
}

template <Scalar T>
Tensor<T> rand(Shape s, std::uint64_t seed, double lo = -2.0, double hi = 2.0) {
  Rng rng(seed);
  return random_uniform<T>(s, rng, lo, hi);
}

/// Sets every parameter of a block to zero; buffers are left alone.
template <Scalar T, class Block>
void zero_parameters(Block& b) {
  for (auto& nt : named_tensors<T>(b)) {
    if (nt.kind == ParamKind::parameter) *nt.tensor = Tensor<T>::zeros_like(*nt.tensor);
  }
}

/// Running mean 0 and variance 1 for every batch norm in a block.
template <Scalar T, class Block>
void identity_bn_stats(Block& b) {
  for (auto& nt : named_tensors<T>(b)) {
    if (nt.name.ends_with("running_mean")) *nt.tensor = Tensor<T>::zeros_like(*nt.tensor);
    if (nt.name.ends_with("running_var")) *nt.tensor = Tensor<T>::full(nt.tensor->shape(), T{1});
  }
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() /
           ("vrf-test-" + name + "-" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace vrf::test
