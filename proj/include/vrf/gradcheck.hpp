#pragma once

// Central finite-difference checks of f64 tape gradients.
//
// The difference quotients are not taken in f64: at h = 1e-6 the forward
// rounding alone puts ~1e-9 of noise on each quotient, which swamps small
// gradient entries. Every coordinate is evaluated in long double; those not
// clearly within kRefineRelErr are re-evaluated in quad precision when it is
// available.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "vrf/layers.hpp"
#include "vrf/rng.hpp"
#include "vrf/tape.hpp"

namespace vrf {

/// Denominator floor for relative errors.
inline constexpr double kRelErrFloor = 1e-8;

/// Long double quotients at or above this relative error get a quad re-check.
inline constexpr double kRefineRelErr = 1e-7;

inline double relative_error(double analytic, double numeric) {
  return std::abs(numeric - analytic) / std::max(std::abs(analytic), kRelErrFloor);
}

#if defined(VRF_HAVE_QUADMATH)
inline constexpr bool kHaveQuad = true;
using refine_t = quad_t;
#else
inline constexpr bool kHaveQuad = false;
using refine_t = long double;
#endif

struct FdResult {
  double max_rel_err = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t refined = 0;  // coordinates re-evaluated in quad precision

  void update(std::size_t i, double a, double n) {
    const double e = relative_error(a, n);
    if (e > max_rel_err || (i == 0 && max_rel_err == 0.0)) {
      max_rel_err = e;
      worst_index = i;
      analytic = a;
      numeric = n;
    }
  }
};

namespace detail {

/// (f(+h) - f(-h)) / 2h with `slot` perturbed in place and restored.
template <Scalar R, class Eval>
double central(R& slot, double h, Eval&& eval) {
  const R orig = slot;
  slot = orig + static_cast<R>(h);
  const R fp = eval();
  slot = orig - static_cast<R>(h);
  const R fm = eval();
  slot = orig;
  return static_cast<double>((fp - fm) / (2 * static_cast<R>(h)));
}

template <Scalar R>
R checked_scalar(const Tensor<R>& v) {
  if (v.numel() != 1) throw ShapeError("finite_diff_check: f must be scalar, got " + v.shape().str());
  if (!math::isfinite(v[0])) throw std::domain_error("finite_diff_check: f returned a non-finite value");
  return v[0];
}

}  // namespace detail

template <class F, class R>
concept ScalarFn = std::is_invocable_r_v<Var, F&, Tape<R>&, Var>;

/// Compares the tape gradient of scalar f at x with (f(x+h e_i) - f(x-h e_i)) / 2h
/// for every coordinate. `f` maps (tape, x) to a scalar Var. A generic `f` is
/// evaluated in extended precision for the quotients.
template <class F>
FdResult finite_diff_check_detailed(F&& f, const Tensor<double>& x, double h = 1e-6) {
  Tensor<double> grad;
  {
    Tape<double> tape;
    const Var in = tape.leaf(x);
    const Var out = f(tape, in);
    if (!math::isfinite(tape.value(out)[0])) throw std::domain_error("finite_diff_check: f is non-finite at x");
    grad = tape.backward(out).of(in);
  }

  auto quotients = [&]<Scalar R>(std::type_identity<R>, auto&& keep) {
    std::vector<double> out(x.numel(), 0.0);
    Tensor<R> probe = x.template cast<R>();
    auto eval = [&] {
      Tape<R> tape;
      return detail::checked_scalar(tape.value(f(tape, tape.leaf(probe))));
    };
    for (std::size_t i = 0; i < x.numel(); ++i) {
      if (keep(i)) out[i] = detail::central(probe[i], h, eval);
    }
    return out;
  };

  using Base = std::conditional_t<ScalarFn<F, long double>, long double, double>;
  std::vector<double> numeric = quotients(std::type_identity<Base>{}, [](std::size_t) { return true; });
  FdResult r;
  if constexpr (kHaveQuad && ScalarFn<F, refine_t>) {
    auto rough = [&](std::size_t i) { return relative_error(grad[i], numeric[i]) >= kRefineRelErr; };
    const std::vector<double> fine = quotients(std::type_identity<refine_t>{}, rough);
    for (std::size_t i = 0; i < x.numel(); ++i) {
      if (rough(i)) {
        numeric[i] = fine[i];
        ++r.refined;
      }
    }
  }
  for (std::size_t i = 0; i < x.numel(); ++i) r.update(i, grad[i], numeric[i]);
  return r;
}

template <class F>
double finite_diff_check(F&& f, const Tensor<double>& x, double h = 1e-6) {
  return finite_diff_check_detailed(std::forward<F>(f), x, h).max_rel_err;
}

// ---------------------------------------------------------------------------
// Whole-block check over every parameter and the input.

struct ParamCheck {
  std::string name;
  std::size_t numel = 0;
  FdResult result;
};

struct GradcheckReport {
  std::vector<ParamCheck> entries;

  double max_rel_err() const {
    double m = 0.0;
    for (const auto& e : entries) m = std::max(m, e.result.max_rel_err);
    return m;
  }

  std::size_t refined() const {
    std::size_t n = 0;
    for (const auto& e : entries) n += e.result.refined;
    return n;
  }

  std::vector<const ParamCheck*> failures(double tol) const {
    std::vector<const ParamCheck*> out;
    for (const auto& e : entries) {
      if (!(e.result.max_rel_err < tol)) out.push_back(&e);
    }
    return out;
  }

  bool passed(double tol) const { return failures(tol).empty(); }
};

struct GradcheckOptions {
  double h = 1e-6;
  nn::Mode mode = nn::Mode::train;
  std::uint64_t seed = 0;                // seeds the loss weighting
  std::optional<OpKind> fault_op;        // negative-control adjoint corruption
  double fault_factor = 1.5;
};

namespace detail {

/// Extended-precision copy of a block plus the input, for loss evaluations.
template <Scalar R, class Block>
struct Reference {
  decltype(std::declval<const Block&>().template rebind<R>()) block;
  Tensor<R> x;
  Tensor<R> weights;
  nn::Mode mode;

  Reference(const Block& b, const Tensor<double>& x0, const Tensor<double>& w, nn::Mode m)
      : block(b.template rebind<R>()), x(x0.cast<R>()), weights(w.cast<R>()), mode(m) {}

  R loss() {
    const Tensor<R> y = run_forward(block, x, mode);
    R acc = 0;
    for (std::size_t i = 0; i < y.numel(); ++i) acc += y[i] * weights[i];
    return acc;
  }

  /// Slot k of tensor t; t == tensors.size() addresses the input.
  R& slot(std::size_t t, std::size_t k) {
    auto tensors = named_tensors<R>(block);
    return t == tensors.size() ? x[k] : (*tensors[t].tensor)[k];
  }
};

}  // namespace detail

/// Checks d(loss)/d(theta) for loss = sum(block(x) ⊙ R), R uniform in [-1, 1].
/// The block must be deterministic in the chosen mode (dropout inactive).
template <class Block>
GradcheckReport gradcheck_block(const Block& block, const Tensor<double>& x, const GradcheckOptions& opt = {}) {
  Block work = block;
  if (run_forward(work, x, opt.mode) != run_forward(work, x, opt.mode)) {
    throw std::invalid_argument("gradcheck: block is not deterministic in this mode (active dropout?)");
  }

  Rng rng(opt.seed);
  Tensor<double> weights;
  Gradients<double> grads;
  Var input{};
  {
    Tape<double> tape;
    if (opt.fault_op) tape.inject_adjoint_fault(*opt.fault_op, opt.fault_factor);
    input = tape.leaf(x);
    const Var y = work.forward(tape, input, opt.mode);
    weights = random_uniform<double>(tape.value(y).shape(), rng);
    const Var loss = sum(tape, hadamard(tape, y, tape.constant(weights)));
    grads = tape.backward(loss);
  }

  detail::Reference<long double, Block> base(work, x, weights, opt.mode);
  std::optional<detail::Reference<refine_t, Block>> fine;

  const auto tensors = named_tensors<double>(work);
  GradcheckReport report;
  for (std::size_t t = 0; t <= tensors.size(); ++t) {
    const bool is_input = t == tensors.size();
    if (!is_input && tensors[t].kind != ParamKind::parameter) continue;
    const Tensor<double> g = is_input ? grads.of(input) : grads.of(*tensors[t].tensor);
    ParamCheck pc{is_input ? "input" : tensors[t].name, g.numel(), {}};
    for (std::size_t k = 0; k < g.numel(); ++k) {
      double n = detail::central(base.slot(t, k), opt.h, [&] { return base.loss(); });
      if (kHaveQuad && relative_error(g[k], n) >= kRefineRelErr) {
        if (!fine) fine.emplace(work, x, weights, opt.mode);
        n = detail::central(fine->slot(t, k), opt.h, [&] { return fine->loss(); });
        ++pc.result.refined;
      }
      pc.result.update(k, g[k], n);
    }
    report.entries.push_back(std::move(pc));
  }
  return report;
}

}  // namespace vrf
