#pragma once

// MSCF, GConv, the GMCF bottleneck and its C2f-style wrapper.

#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "vrf/attention.hpp"
#include "vrf/layers.hpp"

namespace vrf {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct MscfConfig {
  std::size_t channels = 0;
  std::size_t n_scales = 3;
  std::vector<std::size_t> dilations{3, 5, 7};
  std::size_t dw_kernel = 3;
  std::size_t mask_kernel = 7;
  std::size_t ca_ratio = 4;
  bool use_ca = true;

  void validate() const {
    if (channels == 0) throw ConfigError("mscf: channels must be >= 1");
    if (n_scales == 0) throw ConfigError("mscf: n_scales must be >= 1");
    if (dilations.size() != n_scales) {
      throw ConfigError("mscf: " + std::to_string(dilations.size()) + " dilations given for n_scales=" +
                        std::to_string(n_scales));
    }
    for (std::size_t d : dilations) {
      if (d == 0) throw ConfigError("mscf: dilation must be >= 1");
    }
    if (dw_kernel % 2 == 0) throw ConfigError("mscf: dw_kernel must be odd");
    if (mask_kernel % 2 == 0) throw ConfigError("mscf: mask_kernel must be odd");
    if (use_ca && (ca_ratio == 0 || channels % ca_ratio != 0)) {
      throw ConfigError("mscf: channels " + std::to_string(channels) + " not divisible by ca_ratio " +
                        std::to_string(ca_ratio));
    }
  }
};

struct GconvConfig {
  std::size_t channels = 0;
  std::optional<std::size_t> hidden;  // defaults to floor(2c/3)
  std::size_t dw_kernel = 3;
  double dropout = 0.0;
  nn::Activation activation = nn::Activation::sigmoid_gate;

  std::size_t hidden_width() const { return hidden.value_or(2 * channels / 3); }

  void validate() const {
    if (channels == 0) throw ConfigError("gconv: channels must be >= 1");
    if (hidden_width() == 0) {
      throw ConfigError("gconv: hidden width must be >= 1 (channels=" + std::to_string(channels) + ")");
    }
    if (dw_kernel % 2 == 0) throw ConfigError("gconv: dw_kernel must be odd");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("gconv: dropout must be in [0, 1)");
  }
};

struct GmcfConfig {
  std::size_t channels = 0;
  MscfConfig mscf;    // channels overridden by the bottleneck width
  GconvConfig gconv;  // channels overridden by the bottleneck width
  double bn_eps = 1e-5;
  double bn_momentum = 0.1;
  double dropout = 0.0;
  std::size_t n_bottlenecks = 1;
  double hidden_ratio = 0.5;
  std::optional<std::size_t> c_out;  // wrapper output width, defaults to channels

  std::size_t out_channels() const { return c_out.value_or(channels); }

  /// Width of the split branches and bottlenecks inside the wrapper.
  std::size_t wrapper_hidden() const {
    const double hid = hidden_ratio * static_cast<double>(out_channels());
    if (hid < 1.0 || std::floor(hid) != hid) {
      throw ConfigError("gmcf-block: hidden width " + std::to_string(hidden_ratio) + " * " +
                        std::to_string(out_channels()) + " is not a positive integer");
    }
    return static_cast<std::size_t>(hid);
  }

  MscfConfig mscf_at(std::size_t width) const {
    MscfConfig m = mscf;
    m.channels = width;
    return m;
  }

  GconvConfig gconv_at(std::size_t width) const {
    GconvConfig g = gconv;
    g.channels = width;
    return g;
  }

  void validate_bottleneck(std::size_t width) const {
    if (width == 0) throw ConfigError("gmcf: channels must be >= 1");
    mscf_at(width).validate();
    gconv_at(width).validate();
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("gmcf: dropout must be in [0, 1)");
    if (bn_eps <= 0.0) throw ConfigError("gmcf: bn_eps must be > 0");
  }
};

// ---------------------------------------------------------------------------

/// Multi-scale context fusion: dilated depthwise branches weighted by a
/// spatial selection mask, gated by the input, then channel attention.
template <Scalar T>
class Mscf {
 public:
  std::vector<Conv2d<T>> dw;
  SpatialAttention<T> sa;
  std::optional<ChannelAttention<T>> ca;

  explicit Mscf(MscfConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    for (std::size_t d : cfg_.dilations) dw.emplace_back(nn::ConvSpec::depthwise(cfg_.channels, cfg_.dw_kernel, d));
    sa = SpatialAttention<T>(cfg_.n_scales, cfg_.mask_kernel);
    if (cfg_.use_ca) ca.emplace(cfg_.channels, cfg_.ca_ratio);
  }

  const MscfConfig& config() const { return cfg_; }

  void init(Rng& rng) {
    for (auto& conv : dw) conv.init(rng);
    sa.init(rng);
    if (ca) ca->init(rng);
  }

  Var forward(Tape<T>& tape, Var x, nn::Mode = nn::Mode::eval) const {
    const Shape s = tape.value(x).shape();
    if (s.c != cfg_.channels) {
      throw ShapeError("mscf: input " + s.str() + " has " + std::to_string(s.c) + " channels, config expects " +
                       std::to_string(cfg_.channels));
    }
    std::vector<Var> features;
    for (const auto& conv : dw) features.push_back(conv.forward(tape, x));
    const Var mask = sa.forward(tape, concat_channels(tape, features));

    // Mask channel i is broadcast across every feature channel of F_i.
    Var fused{};
    for (std::size_t i = 0; i < features.size(); ++i) {
      const Var term = hadamard(tape, features[i], slice_channels(tape, mask, i, 1));
      fused = i == 0 ? term : add(tape, fused, term);
    }
    Var y = hadamard(tape, fused, x);
    if (ca) y = hadamard(tape, y, ca->forward(tape, y));
    return y;
  }

  /// Same block with parameters converted to element type U.
  template <Scalar U>
  Mscf<U> rebind() const {
    Mscf<U> out(cfg_);
    copy_tensors<U, T>(out, *this);
    return out;
  }

  template <class F>
  void visit(F&& f, const std::string& prefix) {
    for (std::size_t i = 0; i < dw.size(); ++i) dw[i].visit(f, join_name(prefix, "dw." + std::to_string(i)));
    sa.visit(f, join_name(prefix, "sa"));
    if (ca) ca->visit(f, join_name(prefix, "ca"));
  }

 private:
  MscfConfig cfg_;
};

/// Gated depthwise feed-forward with an identity shortcut.
template <Scalar T>
class Gconv {
 public:
  Conv2d<T> proj;     // c -> 2c'
  Conv2d<T> dw;       // depthwise on c'
  Conv2d<T> restore;  // c' -> c
  nn::DropoutState drop;

  explicit Gconv(GconvConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    const std::size_t h = cfg_.hidden_width();
    proj = Conv2d<T>(nn::ConvSpec::pointwise(cfg_.channels, 2 * h));
    dw = Conv2d<T>(nn::ConvSpec::depthwise(h, cfg_.dw_kernel));
    restore = Conv2d<T>(nn::ConvSpec::pointwise(h, cfg_.channels));
    drop.p = cfg_.dropout;
  }

  const GconvConfig& config() const { return cfg_; }
  std::size_t hidden() const { return cfg_.hidden_width(); }

  void init(Rng& rng) {
    proj.init(rng);
    dw.init(rng);
    restore.init(rng);
    drop.rng = rng.fork();
  }

  /// The transform path, without the residual add.
  Var transform(Tape<T>& tape, Var x, nn::Mode mode) {
    const Shape s = tape.value(x).shape();
    if (s.c != cfg_.channels) {
      throw ShapeError("gconv: input " + s.str() + " has " + std::to_string(s.c) + " channels, config expects " +
                       std::to_string(cfg_.channels));
    }
    const std::size_t h = hidden();
    const Var projected = proj.forward(tape, x);
    if (tape.value(projected).shape().c != 2 * h) {
      throw ShapeError("gconv: projection produced " + std::to_string(tape.value(projected).shape().c) +
                       " channels, expected " + std::to_string(2 * h));
    }
    const Var xp = slice_channels(tape, projected, 0, h);
    const Var value = slice_channels(tape, projected, h, h);
    const Var gated = activation(tape, cfg_.activation, dw.forward(tape, xp));
    const Var mixed = hadamard(tape, gated, value);
    drop.mode = mode;
    return dropout(tape, restore.forward(tape, mixed), drop);
  }

  Var forward(Tape<T>& tape, Var x, nn::Mode mode = nn::Mode::eval) {
    return add(tape, x, transform(tape, x, mode));
  }

  /// Same block with parameters converted to element type U.
  template <Scalar U>
  Gconv<U> rebind() const {
    Gconv<U> out(cfg_);
    out.drop = drop;
    copy_tensors<U, T>(out, *this);
    return out;
  }

  template <class F>
  void visit(F&& f, const std::string& prefix) {
    proj.visit(f, join_name(prefix, "proj"));
    dw.visit(f, join_name(prefix, "dw"));
    restore.visit(f, join_name(prefix, "restore"));
  }

 private:
  GconvConfig cfg_;
};

/// MSCF -> BN -> dropout with a shortcut around the three, followed by GConv
/// whose own residual forms the second shortcut.
template <Scalar T>
class GmcfBottleneck {
 public:
  Mscf<T> mscf;
  BatchNorm2d<T> bn;
  nn::DropoutState drop;
  Gconv<T> gconv;

  GmcfBottleneck(const GmcfConfig& cfg, std::size_t width)
      : mscf((cfg.validate_bottleneck(width), cfg.mscf_at(width))),
        bn(width, cfg.bn_eps, cfg.bn_momentum),
        gconv(cfg.gconv_at(width)),
        cfg_(cfg),
        width_(width) {
    drop.p = cfg.dropout;
  }

  explicit GmcfBottleneck(const GmcfConfig& cfg) : GmcfBottleneck(cfg, cfg.channels) {}

  std::size_t channels() const { return width_; }

  void init(Rng& rng) {
    mscf.init(rng);
    bn.init(rng);
    drop.rng = rng.fork();
    gconv.init(rng);
  }

  Var forward(Tape<T>& tape, Var x, nn::Mode mode = nn::Mode::eval) {
    const Var normed = bn.forward(tape, mscf.forward(tape, x), mode);
    drop.mode = mode;
    const Var y1 = add(tape, x, dropout(tape, normed, drop));
    return gconv.forward(tape, y1, mode);
  }

  /// Same block with parameters converted to element type U.
  template <Scalar U>
  GmcfBottleneck<U> rebind() const {
    GmcfBottleneck<U> out(cfg_, width_);
    out.drop = drop;
    out.gconv.drop = gconv.drop;
    copy_tensors<U, T>(out, *this);
    return out;
  }

  template <class F>
  void visit(F&& f, const std::string& prefix) {
    mscf.visit(f, join_name(prefix, "mscf"));
    bn.visit(f, join_name(prefix, "bn"));
    gconv.visit(f, join_name(prefix, "gconv"));
  }

 private:
  GmcfConfig cfg_;
  std::size_t width_;
};

/// C2f-style wrapper: split projection, chained GMCF bottlenecks with every
/// intermediate kept, channel concat, pointwise fuse.
template <Scalar T>
class GmcfBlock {
 public:
  Conv2d<T> cv1;  // c_in -> 2*hidden
  std::vector<GmcfBottleneck<T>> m;
  Conv2d<T> cv2;  // (2+n)*hidden -> c_out

  explicit GmcfBlock(GmcfConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.channels == 0) throw ConfigError("gmcf-block: channels must be >= 1");
    const std::size_t h = cfg_.wrapper_hidden();
    cv1 = Conv2d<T>(nn::ConvSpec::pointwise(cfg_.channels, 2 * h));
    for (std::size_t i = 0; i < cfg_.n_bottlenecks; ++i) m.emplace_back(cfg_, h);
    cv2 = Conv2d<T>(nn::ConvSpec::pointwise((2 + cfg_.n_bottlenecks) * h, cfg_.out_channels()));
  }

  const GmcfConfig& config() const { return cfg_; }
  std::size_t hidden() const { return cfg_.wrapper_hidden(); }

  void init(Rng& rng) {
    cv1.init(rng);
    for (auto& b : m) b.init(rng);
    cv2.init(rng);
  }

  Var forward(Tape<T>& tape, Var x, nn::Mode mode = nn::Mode::eval) {
    const Shape s = tape.value(x).shape();
    if (s.c != cfg_.channels) {
      throw ShapeError("gmcf-block: input " + s.str() + " has " + std::to_string(s.c) +
                       " channels, config expects " + std::to_string(cfg_.channels));
    }
    const std::size_t h = hidden();
    const Var y = cv1.forward(tape, x);
    std::vector<Var> parts{slice_channels(tape, y, 0, h), slice_channels(tape, y, h, h)};
    for (auto& b : m) parts.push_back(b.forward(tape, parts.back(), mode));
    return cv2.forward(tape, concat_channels(tape, parts));
  }

  /// Same block with parameters converted to element type U.
  template <Scalar U>
  GmcfBlock<U> rebind() const {
    GmcfBlock<U> out(cfg_);
    for (std::size_t i = 0; i < m.size(); ++i) {
      out.m[i].drop = m[i].drop;
      out.m[i].gconv.drop = m[i].gconv.drop;
    }
    copy_tensors<U, T>(out, *this);
    return out;
  }

  template <class F>
  void visit(F&& f, const std::string& prefix) {
    cv1.visit(f, join_name(prefix, "cv1"));
    for (std::size_t i = 0; i < m.size(); ++i) m[i].visit(f, join_name(prefix, "m." + std::to_string(i)));
    cv2.visit(f, join_name(prefix, "cv2"));
  }

 private:
  GmcfConfig cfg_;
};

// ---------------------------------------------------------------------------

enum class BlockKind { mscf, gconv, gmcf, gmcf_block };

inline const char* to_string(BlockKind k) {
  switch (k) {
    case BlockKind::mscf: return "mscf";
    case BlockKind::gconv: return "gconv";
    case BlockKind::gmcf: return "gmcf";
    case BlockKind::gmcf_block: return "gmcf-block";
  }
  return "?";
}

inline std::optional<BlockKind> block_from_name(std::string_view name) {
  for (BlockKind k : {BlockKind::mscf, BlockKind::gconv, BlockKind::gmcf, BlockKind::gmcf_block}) {
    if (name == to_string(k)) return k;
  }
  return std::nullopt;
}

inline constexpr BlockKind kAllBlocks[] = {BlockKind::mscf, BlockKind::gconv, BlockKind::gmcf, BlockKind::gmcf_block};

/// All block configurations share one document; each kind reads its part.
struct ModuleConfig {
  std::size_t channels = 0;
  MscfConfig mscf;
  GconvConfig gconv;
  GmcfConfig gmcf;

  static ModuleConfig with_channels(std::size_t c) {
    ModuleConfig m;
    m.set_channels(c);
    return m;
  }

  void set_channels(std::size_t c) {
    channels = c;
    mscf.channels = c;
    gconv.channels = c;
    gmcf.channels = c;
  }
};

template <Scalar T>
using AnyBlock = std::variant<Mscf<T>, Gconv<T>, GmcfBottleneck<T>, GmcfBlock<T>>;

template <Scalar T>
AnyBlock<T> make_block(BlockKind kind, const ModuleConfig& cfg) {
  switch (kind) {
    case BlockKind::mscf: return Mscf<T>(cfg.mscf);
    case BlockKind::gconv: return Gconv<T>(cfg.gconv);
    case BlockKind::gmcf: return GmcfBottleneck<T>(cfg.gmcf);
    case BlockKind::gmcf_block: return GmcfBlock<T>(cfg.gmcf);
  }
  throw ConfigError("unknown block kind");
}

template <Scalar T>
BlockKind kind_of(const AnyBlock<T>& b) {
  return static_cast<BlockKind>(b.index());
}

}  // namespace vrf
