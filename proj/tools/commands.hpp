#pragma once

// Subcommands of the `vrf` executable. run_cli() is the whole program; main()
// only forwards the standard streams, so tests drive it in-process.
//
// Exit codes: 0 pass, 1 check failure, 2 usage or configuration error.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "vrf/vrf.hpp"

namespace vrf::cli {

enum ExitCode : int { kPass = 0, kFail = 1, kUsage = 2 };

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using ojson = nlohmann::ordered_json;

/// Flags shared by every subcommand; unset values fall back to the config's
/// "run" section, then to per-command defaults.
struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> dtype;
  std::optional<double> tol;
  std::optional<std::string> out;
  std::optional<std::string> block;
  std::optional<std::string> shape;
  std::optional<std::string> mode;
  std::optional<std::size_t> channels;
};

struct Defaults {
  DType dtype = DType::f64;
  double tol = 1e-5;
  nn::Mode mode = nn::Mode::eval;
  std::size_t spatial = 6;
  bool require_block = false;
};

/// Fully resolved run; every path is absolute.
struct RunConfig {
  ModuleConfig module;
  std::vector<BlockKind> blocks;
  std::uint64_t seed = 0;
  DType dtype = DType::f64;
  Shape shape;
  double tol = 0.0;
  nn::Mode mode = nn::Mode::eval;
  std::optional<std::filesystem::path> out;
};

inline Shape parse_shape_flag(const std::string& text) {
  std::vector<std::size_t> dims;
  std::string token;
  std::istringstream in(text);
  while (std::getline(in, token, ',')) {
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(token, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != token.size() || v == 0) throw UsageError("--shape: expected n,c,h,w with positive integers");
    dims.push_back(static_cast<std::size_t>(v));
  }
  if (dims.size() != 4) throw UsageError("--shape: expected exactly four dimensions n,c,h,w");
  return Shape{dims[0], dims[1], dims[2], dims[3]};
}

inline RunConfig resolve(const CommonFlags& f, const Defaults& d) {
  RunConfig r;
  RunSettings run;
  std::optional<Shape> shape;
  if (f.shape) shape = parse_shape_flag(*f.shape);

  if (!f.config.empty()) {
    try {
      ConfigDocument doc = load_config(f.config);
      r.module = doc.module;
      run = doc.run;
    } catch (const ConfigError& e) {
      throw UsageError(e.what());
    }
    if (f.channels && *f.channels != r.module.channels) {
      throw UsageError("--channels " + std::to_string(*f.channels) + " conflicts with config channels " +
                       std::to_string(r.module.channels));
    }
  } else {
    std::size_t c = f.channels ? *f.channels : shape ? shape->c : 8;
    if (c == 0) throw UsageError("--channels must be >= 1");
    r.module = ModuleConfig::with_channels(c);
  }

  if (f.block) {
    auto k = block_from_name(*f.block);
    if (!k) throw UsageError("--block: unknown block '" + *f.block + "' (mscf, gconv, gmcf, gmcf-block)");
    r.blocks = {*k};
  } else if (run.block) {
    r.blocks = {*run.block};
  } else if (d.require_block) {
    throw UsageError("missing block name: pass --block {mscf,gconv,gmcf,gmcf-block}");
  } else {
    r.blocks.assign(std::begin(kAllBlocks), std::end(kAllBlocks));
  }

  r.seed = f.seed ? *f.seed : run.seed.value_or(0);
  if (f.dtype) {
    auto dt = dtype_from_name(*f.dtype);
    if (!dt) throw UsageError("--dtype: expected f32 or f64");
    r.dtype = *dt;
  } else {
    r.dtype = run.dtype.value_or(d.dtype);
  }
  r.tol = f.tol ? *f.tol : run.tol.value_or(d.tol);
  if (!(r.tol >= 0.0)) throw UsageError("--tol must be >= 0");
  if (f.mode) {
    if (*f.mode != "train" && *f.mode != "eval") throw UsageError("--mode: expected train or eval");
    r.mode = *f.mode == "train" ? nn::Mode::train : nn::Mode::eval;
  } else {
    r.mode = run.mode.value_or(d.mode);
  }

  if (!shape) shape = run.input_shape;
  r.shape = shape ? *shape : Shape{1, r.module.channels, d.spatial, d.spatial};
  if (r.shape.c != r.module.channels) {
    throw UsageError("input shape " + r.shape.str() + " does not match " + std::to_string(r.module.channels) +
                     " configured channels");
  }

  if (f.out) {
    r.out = std::filesystem::absolute(*f.out);
  } else if (run.out) {
    const std::filesystem::path p(*run.out);
    r.out = p.is_absolute() ? p : std::filesystem::absolute(std::filesystem::path(f.config).parent_path() / p);
  }
  return r;
}

/// JSON lines go to `out` as they are produced; the table follows them.
/// With an output directory both are also written to report.jsonl/report.txt.
class Reporter {
 public:
  Reporter(std::ostream& out, std::ostream& err) : out_(out), err_(err) {}

  void line(const ojson& j) {
    const std::string s = j.dump();
    out_ << s << '\n';
    lines_.push_back(s);
  }

  void table(const std::string& t) {
    out_ << '\n' << t;
    table_ += t;
  }

  std::ostream& err() { return err_; }

  void save(const std::optional<std::filesystem::path>& dir, const std::string& stem = "report") const {
    if (!dir) return;
    std::filesystem::create_directories(*dir);
    std::ofstream jl(*dir / (stem + ".jsonl"), std::ios::trunc);
    for (const auto& s : lines_) jl << s << '\n';
    std::ofstream tt(*dir / (stem + ".txt"), std::ios::trunc);
    tt << table_;
  }

 private:
  std::ostream& out_;
  std::ostream& err_;
  std::vector<std::string> lines_;
  std::string table_;
};

inline std::string sci(double v) {
  std::ostringstream os;
  os << std::scientific << std::setprecision(3) << v;
  return os.str();
}

inline ojson shape_json(const Shape& s) { return ojson::array({s.n, s.c, s.h, s.w}); }

/// Block and input drawn from independent sub-streams of `seed`.
template <Scalar T>
struct Instance {
  AnyBlock<T> block;
  Tensor<T> x;
};

template <Scalar T>
Instance<T> make_instance(BlockKind kind, const ModuleConfig& module, const Shape& shape, std::uint64_t seed) {
  Rng root(seed);
  Rng brng = root.fork();
  Rng xrng = root.fork();
  Instance<T> inst{make_block<T>(kind, module), Tensor<T>{}};
  std::visit([&](auto& b) { b.init(brng); }, inst.block);
  inst.x = random_uniform<T>(shape, xrng, -2.0, 2.0);
  return inst;
}

template <Scalar T>
Tensor<T> forward_any(AnyBlock<T>& block, const Tensor<T>& x, nn::Mode mode) {
  return std::visit([&](auto& b) { return run_forward(b, x, mode); }, block);
}

// ---------------------------------------------------------------------------
// gradcheck

struct GradcheckFlags {
  std::optional<std::string> fault_op;
  double fault_factor = 1.5;
};

inline int cmd_gradcheck(const RunConfig& r, const GradcheckFlags& g, Reporter& rep) {
  if (r.dtype != DType::f64) throw UsageError("gradcheck runs in f64 only (f32 finite differences are too noisy)");
  GradcheckOptions opt;
  opt.mode = r.mode;
  opt.seed = r.seed;
  opt.fault_factor = g.fault_factor;
  if (g.fault_op) {
    opt.fault_op = op_from_name(*g.fault_op);
    if (!opt.fault_op) throw UsageError("--inject-fault: unknown op '" + *g.fault_op + "'");
  }

  std::ostringstream table;
  table << std::left << std::setw(12) << "block" << std::setw(28) << "parameter" << std::right << std::setw(8)
        << "numel" << std::setw(14) << "max_rel_err" << std::setw(8) << "status" << '\n';
  bool all_ok = true;
  for (BlockKind kind : r.blocks) {
    auto inst = make_instance<double>(kind, r.module, r.shape, r.seed);
    const GradcheckReport report =
        std::visit([&](const auto& b) { return gradcheck_block(b, inst.x, opt); }, inst.block);
    for (const auto& e : report.entries) {
      const bool ok = e.result.max_rel_err < r.tol;
      rep.line({{"command", "gradcheck"},
                {"block", to_string(kind)},
                {"param", e.name},
                {"numel", e.numel},
                {"max_rel_err", e.result.max_rel_err},
                {"worst_index", e.result.worst_index},
                {"analytic", e.result.analytic},
                {"numeric", e.result.numeric},
                {"refined", e.result.refined},
                {"tol", r.tol},
                {"passed", ok}});
      table << std::left << std::setw(12) << to_string(kind) << std::setw(28) << e.name << std::right << std::setw(8)
            << e.numel << std::setw(14) << sci(e.result.max_rel_err) << std::setw(8) << (ok ? "ok" : "FAIL") << '\n';
      if (!ok) {
        rep.err() << "gradcheck: " << to_string(kind) << " parameter '" << e.name << "' max rel err "
                  << sci(e.result.max_rel_err) << " >= tol " << sci(r.tol) << " at index " << e.result.worst_index
                  << '\n';
      }
    }
    const bool ok = report.passed(r.tol);
    all_ok = all_ok && ok;
    rep.line({{"command", "gradcheck"},
              {"block", to_string(kind)},
              {"summary", true},
              {"input_shape", shape_json(r.shape)},
              {"seed", r.seed},
              {"mode", r.mode == nn::Mode::train ? "train" : "eval"},
              {"h", opt.h},
              {"max_rel_err", report.max_rel_err()},
              {"tol", r.tol},
              {"passed", ok}});
  }
  rep.table(table.str());
  rep.save(r.out, "gradcheck");
  return all_ok ? kPass : kFail;
}

// ---------------------------------------------------------------------------
// oracle-diff

/// Random conv spec over k in {1,3,7}, dilation in {1,3,5,7}, groups in {1,c}.
struct ConvCase {
  nn::ConvSpec spec;
  Shape input;
};

inline ConvCase random_conv_case(Rng& rng) {
  static constexpr std::size_t kKernels[] = {1, 3, 7};
  static constexpr std::size_t kDilations[] = {1, 3, 5, 7};
  auto pick = [&](std::size_t n) { return static_cast<std::size_t>(rng.next_u64() % n); };
  ConvCase cc;
  const std::size_t c = 1 + pick(6);
  const std::size_t k = kKernels[pick(3)];
  const std::size_t d = kDilations[pick(4)];
  const bool grouped = pick(2) == 1;
  cc.spec.c_in = c;
  cc.spec.c_out = grouped ? c : 1 + pick(6);
  cc.spec.groups = grouped ? c : 1;
  cc.spec.k = k;
  cc.spec.dilation = d;
  cc.spec.stride = 1 + pick(2);
  cc.spec.bias = pick(2) == 1;
  cc.input = Shape{1 + pick(2), c, 3 + pick(10), 3 + pick(10)};
  const std::size_t span = d * (k - 1) + 1;
  const std::size_t same = (span - 1) / 2;
  const bool fits = std::min(cc.input.h, cc.input.w) >= span;
  cc.spec.padding = (!fits || pick(2) == 1) ? same : 0;
  return cc;
}

inline std::string spec_str(const nn::ConvSpec& s) {
  std::ostringstream os;
  os << "conv2d(c_in=" << s.c_in << ",c_out=" << s.c_out << ",k=" << s.k << ",d=" << s.dilation
     << ",g=" << s.groups << ",s=" << s.stride << ",p=" << s.padding << (s.bias ? ",bias" : "") << ')';
  return os.str();
}

struct OracleDiffFlags {
  std::size_t specs = 200;
};

template <Scalar T>
int oracle_diff_typed(const RunConfig& r, const OracleDiffFlags& f, Reporter& rep) {
  Rng rng(r.seed);
  double conv_worst = 0.0;
  std::size_t conv_fail = 0;
  for (std::size_t i = 0; i < f.specs; ++i) {
    const ConvCase cc = random_conv_case(rng);
    const Tensor<T> x = random_uniform<T>(cc.input, rng, -2.0, 2.0);
    const Tensor<T> w = random_uniform<T>(cc.spec.weight_shape(), rng);
    std::optional<Tensor<T>> b;
    if (cc.spec.bias) b = random_uniform<T>(cc.spec.bias_shape(), rng);
    const Tensor<T> fast = nn::conv2d(x, w, b ? &*b : nullptr, cc.spec);
    const Tensor<T> ref = oracle::conv2d(x, w, b ? &*b : nullptr, cc.spec);
    const DiffStats d = diff(fast, ref);
    oracle::OracleReport o{spec_str(cc.spec), d.max_abs, d.max_rel, {cc.input.str(), cc.spec.weight_shape().str()},
                           r.seed, d.max_abs < r.tol};
    rep.line(ojson::parse(o.to_json_line()));
    conv_worst = std::max(conv_worst, d.max_abs);
    if (!o.passed) ++conv_fail;
  }

  std::ostringstream table;
  table << "# oracle-diff dtype=" << to_string(dtype_of<T>) << " seed=" << r.seed << " tol=" << sci(r.tol)
        << " (pass iff max_abs < tol)\n";
  table << std::left << std::setw(16) << "case" << std::right << std::setw(8) << "count" << std::setw(14) << "max_abs"
        << std::setw(8) << "status" << '\n';
  table << std::left << std::setw(16) << "conv2d" << std::right << std::setw(8) << f.specs << std::setw(14)
        << sci(conv_worst) << std::setw(8) << (conv_fail == 0 ? "ok" : "FAIL") << '\n';

  bool all_ok = conv_fail == 0;
  for (BlockKind kind : r.blocks) {
    auto inst = make_instance<T>(kind, r.module, r.shape, r.seed);
    const Tensor<T> ref = oracle::block(inst.block, inst.x, r.mode);
    const Tensor<T> fast = forward_any(inst.block, inst.x, r.mode);
    const DiffStats d = diff(fast, ref);
    oracle::OracleReport o{to_string(kind), d.max_abs, d.max_rel, {r.shape.str()}, r.seed, d.max_abs < r.tol};
    rep.line(ojson::parse(o.to_json_line()));
    all_ok = all_ok && o.passed;
    table << std::left << std::setw(16) << to_string(kind) << std::right << std::setw(8) << 1 << std::setw(14)
          << sci(d.max_abs) << std::setw(8) << (o.passed ? "ok" : "FAIL") << '\n';
    if (!o.passed) rep.err() << "oracle-diff: " << to_string(kind) << " max abs diff " << sci(d.max_abs) << '\n';
  }
  if (conv_fail != 0) rep.err() << "oracle-diff: " << conv_fail << " of " << f.specs << " conv specs diverged\n";
  rep.table(table.str());
  rep.save(r.out, "oracle-diff");
  return all_ok ? kPass : kFail;
}

inline int cmd_oracle_diff(const RunConfig& r, const OracleDiffFlags& f, Reporter& rep) {
  return r.dtype == DType::f32 ? oracle_diff_typed<float>(r, f, rep) : oracle_diff_typed<double>(r, f, rep);
}

// ---------------------------------------------------------------------------
// profile

struct ProfileFlags {
  std::size_t reps = 5;
  bool compare_ffn = false;
  bool no_timing = false;
};

template <Scalar T>
int profile_typed(const RunConfig& r, const ProfileFlags& f, Reporter& rep) {
  using profiler::CostReport;
  const BlockKind kind = r.blocks.front();
  auto inst = make_instance<T>(kind, r.module, r.shape, r.seed);

  CostReport row;
  row.block = to_string(kind);
  row.input = r.shape;
  row.params = profiler::count_params(inst.block);
  const auto ops = profiler::count_ops(inst.block, r.shape, r.mode);
  row.macs = ops.macs;
  row.elementwise_ops = ops.elementwise;
  if (!f.no_timing) row.timing = profiler::bench([&] { (void)forward_any(inst.block, inst.x, r.mode); }, f.reps);

  bool ok = true;
  ojson j = row.to_json();
  const std::uint64_t instantiated =
      std::visit([](auto& b) { return static_cast<std::uint64_t>(parameter_elements<T>(b)); }, inst.block);
  j["counts"]["instantiated_params"] = instantiated;
  if (instantiated != row.params) {
    ok = false;
    rep.err() << "profile: formula params " << row.params << " != instantiated " << instantiated << '\n';
  }
  if (r.out) {
    const auto dir = *r.out / (std::string(to_string(kind)) + "-params");
    std::visit([&](auto& b) { write_manifest<T>(dir, b); }, inst.block);
    const std::uint64_t from_bytes = manifest_parameter_elements(dir);
    j["counts"]["manifest_params"] = from_bytes;
    if (from_bytes != row.params) {
      ok = false;
      rep.err() << "profile: formula params " << row.params << " != manifest bytes " << from_bytes << '\n';
    }
  }
  rep.line(j);
  std::vector<CostReport> rows{row};

  if (f.compare_ffn) {
    const std::size_t c = r.module.channels;
    profiler::PointwiseFfn<T> ffn(c, 2 * c);
    Rng rng(r.seed);
    ffn.init(rng);
    CostReport frow;
    frow.block = "ffn";
    frow.input = r.shape;
    frow.params = profiler::ffn_params(c, 2 * c);
    const auto fops = profiler::ffn_ops(c, 2 * c, r.shape);
    frow.macs = fops.macs;
    frow.elementwise_ops = fops.elementwise;
    if (!f.no_timing) frow.timing = profiler::bench([&] { (void)run_forward(ffn, inst.x, r.mode); }, f.reps);
    rep.line(frow.to_json());
    rows.push_back(frow);
    const bool smaller = row.params < frow.params;
    rep.line({{"command", "profile"},
              {"comparison", "gconv-vs-ffn"},
              {"channels", c},
              {"gconv_params", row.params},
              {"ffn_params", frow.params},
              {"ffn_hidden", 2 * c},
              {"gconv_smaller", smaller}});
    if (!smaller) {
      ok = false;
      rep.err() << "profile: gconv params " << row.params << " not below ffn params " << frow.params << '\n';
    }
  }
  rep.table(profiler::render_table(rows));
  rep.save(r.out, "profile");
  return ok ? kPass : kFail;
}

inline int cmd_profile(const RunConfig& r, const ProfileFlags& f, Reporter& rep) {
  if (f.reps < 3 && !f.no_timing) throw UsageError("--reps must be >= 3");
  if (f.compare_ffn && r.blocks.front() != BlockKind::gconv) throw UsageError("--compare-ffn needs --block gconv");
  return r.dtype == DType::f32 ? profile_typed<float>(r, f, rep) : profile_typed<double>(r, f, rep);
}

// ---------------------------------------------------------------------------
// golden

inline constexpr const char* kGoldenConfig = "config.json";
inline constexpr const char* kGoldenInput = "input.vrft";
inline constexpr const char* kGoldenOutput = "output.vrft";
inline constexpr const char* kGoldenParams = "params";

/// Location of the first byte where `actual` departs from `expected`.
struct ByteDiff {
  std::string where;  // "size", "header" or "payload"
  std::size_t byte = 0;
  std::size_t element = 0;
};

inline std::optional<ByteDiff> first_byte_diff(const std::vector<std::uint8_t>& expected,
                                               const std::vector<std::uint8_t>& actual, std::size_t elem_size) {
  const std::size_t n = std::min(expected.size(), actual.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (expected[i] != actual[i]) {
      if (i < kVrftHeaderSize) return ByteDiff{"header", i, 0};
      return ByteDiff{"payload", i, (i - kVrftHeaderSize) / elem_size};
    }
  }
  if (expected.size() != actual.size()) return ByteDiff{"size", n, 0};
  return std::nullopt;
}

inline void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::trunc);
  if (!out) throw FormatError("cannot write " + p.string());
  out << s;
}

template <Scalar T>
void golden_generate_block(const RunConfig& r, BlockKind kind, const std::filesystem::path& dir, Reporter& rep) {
  std::filesystem::create_directories(dir);
  auto inst = make_instance<T>(kind, r.module, r.shape, r.seed);
  ojson cfg = module_config_to_json(r.module);
  cfg["run"] = {{"block", to_string(kind)},
                {"seed", r.seed},
                {"dtype", to_string(dtype_of<T>)},
                {"input_shape", shape_json(r.shape)},
                {"mode", r.mode == nn::Mode::train ? "train" : "eval"}};
  write_text(dir / kGoldenConfig, cfg.dump(2) + "\n");
  write_vrft(dir / kGoldenInput, inst.x);
  std::visit([&](auto& b) { write_manifest<T>(dir / kGoldenParams, b); }, inst.block);
  const Tensor<T> y = forward_any(inst.block, inst.x, r.mode);
  write_vrft(dir / kGoldenOutput, y);
  rep.line({{"command", "golden-generate"},
            {"block", to_string(kind)},
            {"dir", dir.string()},
            {"dtype", to_string(dtype_of<T>)},
            {"output_shape", shape_json(y.shape())}});
}

struct GoldenFlags {
  bool oracle = false;
};

struct Mismatch {
  std::string file;
  std::string detail;
  std::optional<ByteDiff> at;
};

template <Scalar T>
void golden_verify_typed(const ConfigDocument& doc, const std::filesystem::path& dir, const GoldenFlags& f,
                         double tol, std::vector<Mismatch>& bad) {
  const BlockKind kind = *doc.run.block;
  const Shape shape = *doc.run.input_shape;
  const nn::Mode mode = doc.run.mode.value_or(nn::Mode::eval);
  auto inst = make_instance<T>(kind, doc.module, shape, doc.run.seed.value_or(0));

  auto check_file = [&](const std::string& rel, const auto& tensor) {
    std::vector<std::uint8_t> actual;
    try {
      actual = read_file_bytes(dir / rel);
    } catch (const std::exception& e) {
      bad.push_back({rel, e.what(), std::nullopt});
      return;
    }
    if (auto d = first_byte_diff(encode_vrft(tensor), actual, sizeof(T))) bad.push_back({rel, "bytes differ", d});
  };

  check_file(kGoldenInput, inst.x);
  std::visit(
      [&](auto& b) {
        try {
          auto fresh = b;
          load_manifest<T>(dir / kGoldenParams, fresh);
        } catch (const std::exception& e) {
          bad.push_back({std::string(kGoldenParams) + "/" + kManifestFile, e.what(), std::nullopt});
        }
        for (const auto& e : read_manifest(dir / kGoldenParams)) {
          for (const auto& nt : named_tensors<T>(b)) {
            if (nt.name == e.name) check_file(std::string(kGoldenParams) + "/" + e.file, *nt.tensor);
          }
        }
      },
      inst.block);

  if (!f.oracle) {
    check_file(kGoldenOutput, forward_any(inst.block, inst.x, mode));
    return;
  }
  // Oracle mode: independent recomputation compared within `tol`.
  const Tensor<T> ref = oracle::block(inst.block, inst.x, mode);
  try {
    const Tensor<T> stored = read_vrft_as<T>(dir / kGoldenOutput);
    if (stored.shape() != ref.shape()) {
      bad.push_back({kGoldenOutput, "shape " + stored.shape().str() + " != " + ref.shape().str(), std::nullopt});
      return;
    }
    const DiffStats d = diff(stored, ref);
    if (!(d.max_abs < tol)) {
      std::size_t worst = 0;
      double w = -1.0;
      for (std::size_t i = 0; i < ref.numel(); ++i) {
        const double e = std::abs(static_cast<double>(stored[i]) - static_cast<double>(ref[i]));
        if (!(e <= w)) {
          w = e;
          worst = i;
        }
      }
      bad.push_back({kGoldenOutput, "oracle diff " + sci(d.max_abs) + " >= tol " + sci(tol),
                     ByteDiff{"payload", kVrftHeaderSize + worst * sizeof(T), worst}});
    }
  } catch (const std::exception& e) {
    bad.push_back({kGoldenOutput, e.what(), std::nullopt});
  }
}

inline int cmd_golden(const std::string& direction, const RunConfig& r, const GoldenFlags& f, Reporter& rep) {
  const std::filesystem::path root = r.out ? *r.out : std::filesystem::absolute("golden");
  if (direction == "generate") {
    for (BlockKind kind : r.blocks) {
      const auto dir = root / to_string(kind);
      if (r.dtype == DType::f32) {
        golden_generate_block<float>(r, kind, dir, rep);
      } else {
        golden_generate_block<double>(r, kind, dir, rep);
      }
    }
    return kPass;
  }

  if (!std::filesystem::is_directory(root)) throw UsageError("golden verify: no directory " + root.string());
  std::ostringstream table;
  table << "# golden verify " << (f.oracle ? "(oracle path, tol " + sci(r.tol) + ")" : "(bit-exact)") << '\n';
  bool all_ok = true;
  for (BlockKind kind : r.blocks) {
    const auto dir = root / to_string(kind);
    if (!std::filesystem::is_directory(dir)) continue;
    std::vector<Mismatch> bad;
    try {
      const ConfigDocument doc = load_config(dir / kGoldenConfig);
      if (!doc.run.block || !doc.run.input_shape || !doc.run.dtype) {
        throw ConfigError("golden config needs run.block, run.dtype and run.input_shape");
      }
      if (*doc.run.dtype == DType::f32) {
        golden_verify_typed<float>(doc, dir, f, r.tol, bad);
      } else {
        golden_verify_typed<double>(doc, dir, f, r.tol, bad);
      }
    } catch (const std::exception& e) {
      bad.push_back({kGoldenConfig, e.what(), std::nullopt});
    }
    for (const auto& m : bad) {
      ojson j = {{"command", "golden-verify"}, {"block", to_string(kind)}, {"file", m.file}, {"status", "mismatch"},
                 {"detail", m.detail}};
      if (m.at) {
        j["where"] = m.at->where;
        j["byte_offset"] = m.at->byte;
        if (m.at->where == "payload") j["first_diff_element"] = m.at->element;
      }
      rep.line(j);
      rep.err() << "golden: " << to_string(kind) << "/" << m.file << ": " << m.detail;
      if (m.at && m.at->where == "payload") rep.err() << " at element " << m.at->element;
      if (m.at) rep.err() << " (byte " << m.at->byte << ")";
      rep.err() << '\n';
    }
    rep.line({{"command", "golden-verify"},
              {"block", to_string(kind)},
              {"summary", true},
              {"mismatches", bad.size()},
              {"passed", bad.empty()}});
    table << std::left << std::setw(14) << to_string(kind) << (bad.empty() ? "ok" : "FAIL") << '\n';
    all_ok = all_ok && bad.empty();
  }
  rep.table(table.str());
  return all_ok ? kPass : kFail;
}

// ---------------------------------------------------------------------------

inline void add_common(CLI::App* app, CommonFlags& f) {
  app->add_option("--config", f.config, "JSON config file")->check(CLI::ExistingFile);
  app->add_option("--seed", f.seed, "RNG seed");
  app->add_option("--dtype", f.dtype, "f32 or f64");
  app->add_option("--tol", f.tol, "pass threshold (strict <)");
  app->add_option("--out", f.out, "output directory");
  app->add_option("--block", f.block, "mscf, gconv, gmcf or gmcf-block");
  app->add_option("--shape", f.shape, "input shape n,c,h,w");
  app->add_option("--mode", f.mode, "train or eval");
  app->add_option("--channels", f.channels, "channel count when no config is given");
}

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"vrf: block kernels, gradient checks, oracle diffs, profiles and golden files"};
  app.require_subcommand(1);
  CommonFlags common;

  auto* grad = app.add_subcommand("gradcheck", "finite-difference check of every parameter and input gradient");
  add_common(grad, common);
  GradcheckFlags gflags;
  grad->add_option("--inject-fault", gflags.fault_op, "scale the adjoint of this op kind (negative control)");
  grad->add_option("--fault-factor", gflags.fault_factor, "scale used by --inject-fault");

  auto* odiff = app.add_subcommand("oracle-diff", "fast kernels vs the loop oracle over a random grid");
  add_common(odiff, common);
  OracleDiffFlags oflags;
  odiff->add_option("--specs", oflags.specs, "number of random conv specs");

  auto* prof = app.add_subcommand("profile", "parameter, MAC and timing report for one block");
  add_common(prof, common);
  ProfileFlags pflags;
  prof->add_option("--reps", pflags.reps, "timed repetitions (>= 3)");
  prof->add_flag("--compare-ffn", pflags.compare_ffn, "add a pointwise FFN row with hidden 2c");
  prof->add_flag("--no-timing", pflags.no_timing, "skip timing");

  auto* golden = app.add_subcommand("golden", "generate or verify golden VRFT files");
  add_common(golden, common);
  std::string direction;
  golden->add_option("direction", direction, "generate or verify")
      ->required()
      ->check(CLI::IsMember({"generate", "verify"}));
  GoldenFlags goflags;
  golden->add_flag("--oracle", goflags.oracle, "verify through the oracle path within --tol");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kPass : kUsage;
  }

  Reporter rep(out, err);
  try {
    if (grad->parsed()) return cmd_gradcheck(resolve(common, {DType::f64, 1e-5, nn::Mode::train}), gflags, rep);
    if (odiff->parsed()) return cmd_oracle_diff(resolve(common, {DType::f32, 1e-6, nn::Mode::eval}), oflags, rep);
    if (prof->parsed()) {
      return cmd_profile(resolve(common, {DType::f32, 0.0, nn::Mode::eval, 32, true}), pflags, rep);
    }
    if (golden->parsed()) return cmd_golden(direction, resolve(common, {DType::f64, 1e-6, nn::Mode::eval}), goflags, rep);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kUsage;
  } catch (const ShapeError& e) {
    err << "shape error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFail;
  }
  return kUsage;
}

}  // namespace vrf::cli
