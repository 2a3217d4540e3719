#pragma once

// Analytic parameter / MAC accounting and wall-clock micro-benchmarks.
//
// Reports use FLOPs = 2 * MACs. Conventions for MACs and elementwise ops
// match oracle::OpCounter, which tests use to cross-check every formula.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <iomanip>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "vrf/blocks.hpp"
#include "vrf/parallel.hpp"

namespace vrf::profiler {

/// Two pointwise convolutions c -> hidden -> c with a relu between; the
/// plain feed-forward baseline GConv is compared against.
template <Scalar T>
struct PointwiseFfn {
  Conv2d<T> fc1;
  Conv2d<T> fc2;

  PointwiseFfn(std::size_t channels, std::size_t hidden)
      : fc1(nn::ConvSpec::pointwise(channels, hidden)), fc2(nn::ConvSpec::pointwise(hidden, channels)) {}

  void init(Rng& rng) {
    fc1.init(rng);
    fc2.init(rng);
  }

  Var forward(Tape<T>& tape, Var x, nn::Mode = nn::Mode::eval) const {
    return fc2.forward(tape, activation(tape, nn::Activation::relu, fc1.forward(tape, x)));
  }

  template <class F>
  void visit(F&& f, const std::string& prefix) {
    fc1.visit(f, join_name(prefix, "fc1"));
    fc2.visit(f, join_name(prefix, "fc2"));
  }
};

// ---------------------------------------------------------------------------
// Parameter counts, from configuration alone.

inline std::uint64_t depthwise_weight_count(std::uint64_t channels, std::uint64_t k) { return channels * k * k; }

inline std::uint64_t standard_conv_weight_count(std::uint64_t c_in, std::uint64_t c_out, std::uint64_t k) {
  return c_out * c_in * k * k;
}

inline std::uint64_t conv_params(const nn::ConvSpec& s) { return s.param_count(); }

inline std::uint64_t ffn_params(std::uint64_t c, std::uint64_t hidden) { return (c * hidden + hidden) + (hidden * c + c); }

inline std::uint64_t mscf_params(const MscfConfig& cfg) {
  std::uint64_t p = 0;
  for (std::size_t d : cfg.dilations) p += conv_params(nn::ConvSpec::depthwise(cfg.channels, cfg.dw_kernel, d));
  p += conv_params(nn::ConvSpec::same(2, cfg.n_scales, cfg.mask_kernel));
  if (cfg.use_ca) {
    const std::size_t r = cfg.channels / cfg.ca_ratio;
    p += conv_params(nn::ConvSpec::pointwise(cfg.channels, r)) + conv_params(nn::ConvSpec::pointwise(r, cfg.channels));
  }
  return p;
}

inline std::uint64_t gconv_params(const GconvConfig& cfg) {
  const std::size_t c = cfg.channels;
  const std::size_t h = cfg.hidden_width();
  return conv_params(nn::ConvSpec::pointwise(c, 2 * h)) + conv_params(nn::ConvSpec::depthwise(h, cfg.dw_kernel)) +
         conv_params(nn::ConvSpec::pointwise(h, c));
}

inline std::uint64_t bottleneck_params(const GmcfConfig& cfg, std::size_t width) {
  return mscf_params(cfg.mscf_at(width)) + 2 * width + gconv_params(cfg.gconv_at(width));
}

inline std::uint64_t block_params(const GmcfConfig& cfg) {
  const std::size_t h = cfg.wrapper_hidden();
  return conv_params(nn::ConvSpec::pointwise(cfg.channels, 2 * h)) + cfg.n_bottlenecks * bottleneck_params(cfg, h) +
         conv_params(nn::ConvSpec::pointwise((2 + cfg.n_bottlenecks) * h, cfg.out_channels()));
}

template <Scalar T>
std::uint64_t count_params(const Mscf<T>& b) { return mscf_params(b.config()); }
template <Scalar T>
std::uint64_t count_params(const Gconv<T>& b) { return gconv_params(b.config()); }
template <Scalar T>
std::uint64_t count_params(const GmcfBottleneck<T>& b) {
  return mscf_params(b.mscf.config()) + 2 * b.channels() + gconv_params(b.gconv.config());
}
template <Scalar T>
std::uint64_t count_params(const GmcfBlock<T>& b) { return block_params(b.config()); }
template <Scalar T>
std::uint64_t count_params(const PointwiseFfn<T>& b) { return ffn_params(b.fc1.spec.c_in, b.fc1.spec.c_out); }
template <Scalar T>
std::uint64_t count_params(const AnyBlock<T>& b) {
  return std::visit([](const auto& blk) { return count_params(blk); }, b);
}

// ---------------------------------------------------------------------------
// Operation counts for an input shape.

struct OpCounts {
  std::uint64_t macs = 0;
  std::uint64_t elementwise = 0;

  OpCounts& operator+=(const OpCounts& o) {
    macs += o.macs;
    elementwise += o.elementwise;
    return *this;
  }
};

inline std::uint64_t conv_macs(const nn::ConvSpec& s, const Shape& in) {
  const Shape o = s.output_shape(in);
  return static_cast<std::uint64_t>(o.n) * o.c * o.h * o.w * (s.c_in / s.groups) * s.k * s.k;
}

inline OpCounts mscf_ops(const MscfConfig& cfg, const Shape& x) {
  OpCounts r;
  const std::uint64_t P = static_cast<std::uint64_t>(x.n) * x.h * x.w;
  const std::uint64_t c = cfg.channels;
  const std::uint64_t N = cfg.n_scales;
  for (std::size_t d : cfg.dilations) r.macs += conv_macs(nn::ConvSpec::depthwise(c, cfg.dw_kernel, d), x);
  r.elementwise += 2 * N * c * P;  // channel mean + max over F_cat
  r.macs += conv_macs(nn::ConvSpec::same(2, N, cfg.mask_kernel), Shape{x.n, 2, x.h, x.w});
  r.elementwise += N * P;                // mask sigmoid
  r.elementwise += (2 * N - 1) * c * P;  // weighted sum of scales
  r.elementwise += c * P;                // gate by input
  if (cfg.use_ca) {
    const std::uint64_t cr = c / cfg.ca_ratio;
    r.elementwise += c * P;  // global average pool
    r.macs += static_cast<std::uint64_t>(x.n) * (c * cr + cr * c);
    r.elementwise += x.n * cr + x.n * c;  // relu, sigmoid
    r.elementwise += c * P;               // channel reweighting
  }
  return r;
}

inline OpCounts gconv_ops(const GconvConfig& cfg, const Shape& x, nn::Mode mode) {
  OpCounts r;
  const std::uint64_t P = static_cast<std::uint64_t>(x.n) * x.h * x.w;
  const std::uint64_t c = cfg.channels;
  const std::uint64_t h = cfg.hidden_width();
  r.macs += P * c * 2 * h;
  r.macs += P * h * cfg.dw_kernel * cfg.dw_kernel;
  r.elementwise += h * P;  // activation
  r.elementwise += h * P;  // gate by value branch
  r.macs += P * h * c;
  if (mode == nn::Mode::train && cfg.dropout > 0.0) r.elementwise += c * P;
  r.elementwise += c * P;  // residual
  return r;
}

inline OpCounts bottleneck_ops(const GmcfConfig& cfg, std::size_t width, const Shape& x, nn::Mode mode) {
  const Shape s{x.n, width, x.h, x.w};
  const std::uint64_t cP = static_cast<std::uint64_t>(s.numel());
  OpCounts r = mscf_ops(cfg.mscf_at(width), s);
  r.elementwise += cP;  // batch norm
  if (mode == nn::Mode::train && cfg.dropout > 0.0) r.elementwise += cP;
  r.elementwise += cP;  // first shortcut
  r += gconv_ops(cfg.gconv_at(width), s, mode);
  return r;
}

inline OpCounts block_ops(const GmcfConfig& cfg, const Shape& x, nn::Mode mode) {
  const std::size_t h = cfg.wrapper_hidden();
  const std::uint64_t P = static_cast<std::uint64_t>(x.n) * x.h * x.w;
  OpCounts r;
  r.macs += P * cfg.channels * 2 * h;
  for (std::size_t i = 0; i < cfg.n_bottlenecks; ++i) r += bottleneck_ops(cfg, h, x, mode);
  r.macs += P * (2 + cfg.n_bottlenecks) * h * cfg.out_channels();
  return r;
}

inline OpCounts ffn_ops(std::uint64_t c, std::uint64_t hidden, const Shape& x) {
  const std::uint64_t P = static_cast<std::uint64_t>(x.n) * x.h * x.w;
  return OpCounts{P * (c * hidden + hidden * c), P * hidden};
}

template <Scalar T>
OpCounts count_ops(const AnyBlock<T>& b, const Shape& x, nn::Mode mode = nn::Mode::eval) {
  switch (kind_of(b)) {
    case BlockKind::mscf: return mscf_ops(std::get<Mscf<T>>(b).config(), x);
    case BlockKind::gconv: return gconv_ops(std::get<Gconv<T>>(b).config(), x, mode);
    case BlockKind::gmcf: {
      const auto& g = std::get<GmcfBottleneck<T>>(b);
      OpCounts r = mscf_ops(g.mscf.config(), x);
      const std::uint64_t cP = x.numel();
      r.elementwise += cP;
      if (mode == nn::Mode::train && g.drop.p > 0.0) r.elementwise += cP;
      r.elementwise += cP;
      r += gconv_ops(g.gconv.config(), x, mode);
      return r;
    }
    case BlockKind::gmcf_block: return block_ops(std::get<GmcfBlock<T>>(b).config(), x, mode);
  }
  throw std::invalid_argument("profiler: unknown block");
}

template <Scalar T>
std::uint64_t count_macs(const AnyBlock<T>& b, const Shape& x) {
  return count_ops(b, x).macs;
}

// ---------------------------------------------------------------------------
// Timing.

struct BenchStats {
  std::vector<std::int64_t> samples_ns;
  double median_ns = 0.0;
  double iqr_ns = 0.0;
  std::size_t warmup = 1;
  bool single_threaded = true;
};

inline double quantile(std::vector<std::int64_t> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return static_cast<double>(v[lo]) * (1.0 - frac) + static_cast<double>(v[hi]) * frac;
}

/// Times `fn` `reps` times after one warmup call, pinned to one thread.
template <class F>
BenchStats bench(F&& fn, std::size_t reps) {
  if (reps < 3) throw std::invalid_argument("bench: reps must be >= 3, got " + std::to_string(reps));
  ScopedThreadLimit single(1);
  BenchStats st;
  fn();
  for (std::size_t i = 0; i < reps; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    st.samples_ns.push_back(std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count());
  }
  st.median_ns = quantile(st.samples_ns, 0.5);
  st.iqr_ns = quantile(st.samples_ns, 0.75) - quantile(st.samples_ns, 0.25);
  return st;
}

// ---------------------------------------------------------------------------

struct CostReport {
  std::string block;
  Shape input;
  std::uint64_t params = 0;
  std::uint64_t macs = 0;
  std::uint64_t elementwise_ops = 0;
  std::optional<BenchStats> timing;

  std::uint64_t flops() const { return 2 * macs; }

  /// Counts and timing live in separate objects so timing can be dropped
  /// when comparing reports.
  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["block"] = block;
    j["input_shape"] = {input.n, input.c, input.h, input.w};
    j["counts"] = {{"params", params},
                   {"macs", macs},
                   {"flops", flops()},
                   {"flop_convention", "FLOPs = 2 * MACs"},
                   {"elementwise_ops", elementwise_ops}};
    if (timing) {
      j["timing"] = {{"samples_ns", timing->samples_ns},
                     {"median_ns", timing->median_ns},
                     {"iqr_ns", timing->iqr_ns},
                     {"warmup", timing->warmup},
                     {"single_threaded", timing->single_threaded}};
    }
    return j;
  }
};

inline std::string render_table(const std::vector<CostReport>& rows) {
  std::ostringstream os;
  os << "# FLOPs = 2 * MACs; batch as given in input shape\n";
  os << std::left << std::setw(14) << "block" << std::right << std::setw(14) << "params" << std::setw(16) << "MACs"
     << std::setw(16) << "FLOPs" << std::setw(14) << "elementwise" << std::setw(14) << "median_us" << '\n';
  for (const auto& r : rows) {
    os << std::left << std::setw(14) << r.block << std::right << std::setw(14) << r.params << std::setw(16) << r.macs
       << std::setw(16) << r.flops() << std::setw(14) << r.elementwise_ops << std::setw(14);
    if (r.timing) {
      os << std::fixed << std::setprecision(1) << r.timing->median_ns / 1000.0;
    } else {
      os << "-";
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace vrf::profiler
