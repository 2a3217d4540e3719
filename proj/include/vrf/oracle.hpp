#pragma once

// Brute-force reference implementations.
//
// Everything here is written as direct loops with double arithmetic and
// shares nothing with the fast path except the Tensor container, the
// ConvSpec descriptor and the parameter values read from a block. Each
// primitive rounds its result to the tensor dtype, mirroring the op
// boundaries of the fast path.

#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "vrf/blocks.hpp"
#include "vrf/tensor.hpp"

namespace vrf::oracle {

/// Operation tally. Convolutions count every kernel tap (including taps on
/// zero padding) as one MAC and exclude bias adds; elementwise ops count one
/// per output element, channel/spatial reductions one per input element,
/// concat/slice count nothing.
struct OpCounter {
  std::uint64_t macs = 0;
  std::uint64_t elementwise = 0;
};

namespace {
inline void tally(OpCounter* c, std::uint64_t macs, std::uint64_t ew) {
  if (c != nullptr) {
    c->macs += macs;
    c->elementwise += ew;
  }
}
}  // namespace

template <Scalar T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const std::type_identity_t<Tensor<T>>* b, const nn::ConvSpec& spec,
                 OpCounter* counter = nullptr) {
  const Shape in = x.shape();
  if (in.c != spec.c_in || spec.c_in % spec.groups != 0 || spec.c_out % spec.groups != 0) {
    throw ShapeError("oracle conv2d: input " + in.str() + " inconsistent with spec");
  }
  if (w.shape() != Shape{spec.c_out, spec.c_in / spec.groups, spec.k, spec.k}) {
    throw ShapeError("oracle conv2d: bad weight shape " + w.shape().str());
  }
  const long pad = static_cast<long>(spec.padding);
  const long span = static_cast<long>(spec.dilation * (spec.k - 1) + 1);
  const long ho = (static_cast<long>(in.h) + 2 * pad - span) / static_cast<long>(spec.stride) + 1;
  const long wo = (static_cast<long>(in.w) + 2 * pad - span) / static_cast<long>(spec.stride) + 1;
  if (ho < 1 || wo < 1) throw ShapeError("oracle conv2d: empty output");
  Tensor<T> out(Shape{in.n, spec.c_out, static_cast<std::size_t>(ho), static_cast<std::size_t>(wo)});
  const std::size_t cin_g = spec.c_in / spec.groups;
  const std::size_t cout_g = spec.c_out / spec.groups;
  std::uint64_t taps = 0;
  for (std::size_t n = 0; n < in.n; ++n) {
    for (std::size_t o = 0; o < spec.c_out; ++o) {
      for (long i = 0; i < ho; ++i) {
        for (long j = 0; j < wo; ++j) {
          double acc = 0.0;
          for (std::size_t ci = 0; ci < cin_g; ++ci) {
            const std::size_t c = (o / cout_g) * cin_g + ci;
            for (std::size_t u = 0; u < spec.k; ++u) {
              for (std::size_t v = 0; v < spec.k; ++v) {
                ++taps;
                const long r = i * static_cast<long>(spec.stride) + static_cast<long>(u * spec.dilation) - pad;
                const long q = j * static_cast<long>(spec.stride) + static_cast<long>(v * spec.dilation) - pad;
                if (r < 0 || q < 0 || r >= static_cast<long>(in.h) || q >= static_cast<long>(in.w)) continue;
                acc += static_cast<double>(w.at(o, ci, u, v)) *
                       static_cast<double>(x.at(n, c, static_cast<std::size_t>(r), static_cast<std::size_t>(q)));
              }
            }
          }
          if (b != nullptr) acc += static_cast<double>((*b)[o]);
          out.at(n, o, static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = static_cast<T>(acc);
        }
      }
    }
  }
  tally(counter, taps, 0);
  return out;
}

template <Scalar T>
Tensor<T> conv2d(const Tensor<T>& x, const Conv2d<T>& layer, OpCounter* counter = nullptr) {
  return conv2d(x, layer.weight, layer.bias ? &*layer.bias : nullptr, layer.spec, counter);
}

inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

template <Scalar T, class F>
Tensor<T> pointwise(const Tensor<T>& x, OpCounter* counter, F&& f) {
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) out[i] = static_cast<T>(f(static_cast<double>(x[i])));
  tally(counter, 0, x.numel());
  return out;
}

template <Scalar T>
Tensor<T> sigmoid(const Tensor<T>& x, OpCounter* c = nullptr) {
  return pointwise(x, c, [](double v) { return sigmoid(v); });
}

template <Scalar T>
Tensor<T> relu(const Tensor<T>& x, OpCounter* c = nullptr) {
  return pointwise(x, c, [](double v) { return v > 0.0 ? v : 0.0; });
}

template <Scalar T>
Tensor<T> sigmoid_gate(const Tensor<T>& x, OpCounter* c = nullptr) {
  return pointwise(x, c, [](double v) { return v * sigmoid(1.702 * v); });
}

template <Scalar T>
Tensor<T> activation(nn::Activation kind, const Tensor<T>& x, OpCounter* c = nullptr) {
  switch (kind) {
    case nn::Activation::relu: return relu(x, c);
    case nn::Activation::sigmoid: return sigmoid(x, c);
    case nn::Activation::sigmoid_gate: return sigmoid_gate(x, c);
  }
  throw std::invalid_argument("oracle: unknown activation");
}

/// a op b with b's size-1 axes stretched to a's shape.
template <Scalar T, class F>
Tensor<T> binary(const Tensor<T>& a, const Tensor<T>& b, OpCounter* counter, F&& f) {
  const Shape sa = a.shape();
  const Shape sb = b.shape();
  auto fits = [](std::size_t x, std::size_t y) { return x == y || y == 1; };
  if (!fits(sa.n, sb.n) || !fits(sa.c, sb.c) || !fits(sa.h, sb.h) || !fits(sa.w, sb.w)) {
    throw ShapeError("oracle: cannot broadcast " + sb.str() + " onto " + sa.str());
  }
  Tensor<T> out(sa);
  for (std::size_t n = 0; n < sa.n; ++n)
    for (std::size_t c = 0; c < sa.c; ++c)
      for (std::size_t h = 0; h < sa.h; ++h)
        for (std::size_t w = 0; w < sa.w; ++w) {
          const double bv = b.at(sb.n == 1 ? 0 : n, sb.c == 1 ? 0 : c, sb.h == 1 ? 0 : h, sb.w == 1 ? 0 : w);
          out.at(n, c, h, w) = static_cast<T>(f(static_cast<double>(a.at(n, c, h, w)), bv));
        }
  tally(counter, 0, sa.numel());
  return out;
}

template <Scalar T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b, OpCounter* c = nullptr) {
  return binary(a, b, c, [](double x, double y) { return x * y; });
}

template <Scalar T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b, OpCounter* c = nullptr) {
  return binary(a, b, c, [](double x, double y) { return x + y; });
}

template <Scalar T>
Tensor<T> channel_mean(const Tensor<T>& x, OpCounter* counter = nullptr) {
  const Shape s = x.shape();
  Tensor<T> out(Shape{s.n, 1, s.h, s.w});
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t h = 0; h < s.h; ++h)
      for (std::size_t w = 0; w < s.w; ++w) {
        double acc = 0.0;
        for (std::size_t c = 0; c < s.c; ++c) acc += x.at(n, c, h, w);
        out.at(n, 0, h, w) = static_cast<T>(acc / static_cast<double>(s.c));
      }
  tally(counter, 0, s.numel());
  return out;
}

template <Scalar T>
Tensor<T> channel_max(const Tensor<T>& x, OpCounter* counter = nullptr) {
  const Shape s = x.shape();
  Tensor<T> out(Shape{s.n, 1, s.h, s.w});
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t h = 0; h < s.h; ++h)
      for (std::size_t w = 0; w < s.w; ++w) {
        T m = x.at(n, 0, h, w);
        for (std::size_t c = 1; c < s.c; ++c) {
          if (x.at(n, c, h, w) > m) m = x.at(n, c, h, w);
        }
        out.at(n, 0, h, w) = m;
      }
  tally(counter, 0, s.numel());
  return out;
}

template <Scalar T>
Tensor<T> spatial_mean(const Tensor<T>& x, OpCounter* counter = nullptr) {
  const Shape s = x.shape();
  Tensor<T> out(Shape{s.n, s.c, 1, 1});
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c) {
      double acc = 0.0;
      for (std::size_t h = 0; h < s.h; ++h)
        for (std::size_t w = 0; w < s.w; ++w) acc += x.at(n, c, h, w);
      out.at(n, c, 0, 0) = static_cast<T>(acc / static_cast<double>(s.h * s.w));
    }
  tally(counter, 0, s.numel());
  return out;
}

template <Scalar T>
Tensor<T> stack_channels(const std::vector<Tensor<T>>& parts) {
  const Shape s0 = parts.at(0).shape();
  std::size_t total = 0;
  for (const auto& p : parts) total += p.shape().c;
  Tensor<T> out(Shape{s0.n, total, s0.h, s0.w});
  std::size_t offset = 0;
  for (const auto& p : parts) {
    for (std::size_t n = 0; n < s0.n; ++n)
      for (std::size_t c = 0; c < p.shape().c; ++c)
        for (std::size_t h = 0; h < s0.h; ++h)
          for (std::size_t w = 0; w < s0.w; ++w) out.at(n, offset + c, h, w) = p.at(n, c, h, w);
    offset += p.shape().c;
  }
  return out;
}

template <Scalar T>
Tensor<T> take_channels(const Tensor<T>& x, std::size_t begin, std::size_t count) {
  const Shape s = x.shape();
  Tensor<T> out(Shape{s.n, count, s.h, s.w});
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < count; ++c)
      for (std::size_t h = 0; h < s.h; ++h)
        for (std::size_t w = 0; w < s.w; ++w) out.at(n, c, h, w) = x.at(n, begin + c, h, w);
  return out;
}

/// Batch norm from first principles; train mode uses biased batch variance
/// and leaves the running statistics untouched.
template <Scalar T>
Tensor<T> batch_norm(const Tensor<T>& x, const nn::BatchNormState<T>& st, nn::Mode mode, OpCounter* counter = nullptr) {
  const Shape s = x.shape();
  Tensor<T> out(s);
  for (std::size_t c = 0; c < s.c; ++c) {
    double mean = st.running_mean[c];
    double var = st.running_var[c];
    if (mode == nn::Mode::train) {
      const double cnt = static_cast<double>(s.n * s.h * s.w);
      double acc = 0.0;
      for (std::size_t n = 0; n < s.n; ++n)
        for (std::size_t h = 0; h < s.h; ++h)
          for (std::size_t w = 0; w < s.w; ++w) acc += x.at(n, c, h, w);
      mean = acc / cnt;
      double sq = 0.0;
      for (std::size_t n = 0; n < s.n; ++n)
        for (std::size_t h = 0; h < s.h; ++h)
          for (std::size_t w = 0; w < s.w; ++w) sq += (x.at(n, c, h, w) - mean) * (x.at(n, c, h, w) - mean);
      var = sq / cnt;
    }
    const double denom = std::sqrt(var + st.eps);
    for (std::size_t n = 0; n < s.n; ++n)
      for (std::size_t h = 0; h < s.h; ++h)
        for (std::size_t w = 0; w < s.w; ++w) {
          out.at(n, c, h, w) =
              static_cast<T>(st.gamma[c] * ((x.at(n, c, h, w) - mean) / denom) + static_cast<double>(st.beta[c]));
        }
  }
  tally(counter, 0, s.numel());
  return out;
}

inline void require_inactive_dropout(const nn::DropoutState& d, nn::Mode mode) {
  if (mode == nn::Mode::train && d.p > 0.0) {
    throw std::invalid_argument("oracle: active dropout is not reproducible by the oracle");
  }
}

// ---------------------------------------------------------------------------
// Blocks, straight-line.

template <Scalar T>
Tensor<T> mscf(const Mscf<T>& block, const Tensor<T>& x, OpCounter* c = nullptr) {
  const MscfConfig& cfg = block.config();
  if (x.shape().c != cfg.channels) throw ShapeError("oracle mscf: channel mismatch");
  std::vector<Tensor<T>> feats;
  for (const auto& dw : block.dw) feats.push_back(conv2d(x, dw, c));
  const Tensor<T> fcat = stack_channels(feats);
  const Tensor<T> pooled = stack_channels<T>({channel_mean(fcat, c), channel_max(fcat, c)});
  const Tensor<T> mask = sigmoid(conv2d(pooled, block.sa.conv, c), c);
  Tensor<T> fused = mul(feats[0], take_channels(mask, 0, 1), c);
  for (std::size_t i = 1; i < feats.size(); ++i) fused = add(fused, mul(feats[i], take_channels(mask, i, 1), c), c);
  Tensor<T> y = mul(fused, x, c);
  if (block.ca) {
    const Tensor<T> squeezed = spatial_mean(y, c);
    const Tensor<T> hidden = relu(conv2d(squeezed, block.ca->reduce, c), c);
    const Tensor<T> weights = sigmoid(conv2d(hidden, block.ca->expand, c), c);
    y = mul(y, weights, c);
  }
  return y;
}

template <Scalar T>
Tensor<T> gconv(const Gconv<T>& block, const Tensor<T>& x, nn::Mode mode, OpCounter* c = nullptr) {
  require_inactive_dropout(block.drop, mode);
  const std::size_t h = block.hidden();
  const Tensor<T> projected = conv2d(x, block.proj, c);
  const Tensor<T> xp = take_channels(projected, 0, h);
  const Tensor<T> v = take_channels(projected, h, h);
  const Tensor<T> g = activation(block.config().activation, conv2d(xp, block.dw, c), c);
  const Tensor<T> restored = conv2d(mul(g, v, c), block.restore, c);
  return add(x, restored, c);
}

template <Scalar T>
Tensor<T> gmcf(const GmcfBottleneck<T>& block, const Tensor<T>& x, nn::Mode mode, OpCounter* c = nullptr) {
  require_inactive_dropout(block.drop, mode);
  const Tensor<T> normed = batch_norm(mscf(block.mscf, x, c), block.bn.state, mode, c);
  const Tensor<T> y1 = add(x, normed, c);
  return gconv(block.gconv, y1, mode, c);
}

template <Scalar T>
Tensor<T> gmcf_block(const GmcfBlock<T>& block, const Tensor<T>& x, nn::Mode mode, OpCounter* c = nullptr) {
  const std::size_t h = block.hidden();
  const Tensor<T> y = conv2d(x, block.cv1, c);
  std::vector<Tensor<T>> parts{take_channels(y, 0, h), take_channels(y, h, h)};
  for (const auto& b : block.m) parts.push_back(gmcf(b, parts.back(), mode, c));
  return conv2d(stack_channels(parts), block.cv2, c);
}

template <Scalar T>
Tensor<T> block(const AnyBlock<T>& b, const Tensor<T>& x, nn::Mode mode = nn::Mode::eval, OpCounter* c = nullptr) {
  switch (kind_of(b)) {
    case BlockKind::mscf: return mscf(std::get<Mscf<T>>(b), x, c);
    case BlockKind::gconv: return gconv(std::get<Gconv<T>>(b), x, mode, c);
    case BlockKind::gmcf: return gmcf(std::get<GmcfBottleneck<T>>(b), x, mode, c);
    case BlockKind::gmcf_block: return gmcf_block(std::get<GmcfBlock<T>>(b), x, mode, c);
  }
  throw std::invalid_argument("oracle: unknown block");
}

// ---------------------------------------------------------------------------

struct OracleReport {
  std::string op;
  double max_abs = 0.0;
  double max_rel = 0.0;
  std::vector<std::string> input_shapes;
  std::uint64_t seed = 0;
  bool passed = false;

  std::string to_json_line() const {
    nlohmann::ordered_json j;
    j["op"] = op;
    j["max_abs_diff"] = max_abs;
    j["max_rel_diff"] = max_rel;
    j["input_shapes"] = input_shapes;
    j["seed"] = seed;
    j["passed"] = passed;
    return j.dump();
  }
};

}  // namespace vrf::oracle
