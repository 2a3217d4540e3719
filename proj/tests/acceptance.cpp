// Acceptance gate: one PASS/FAIL line per criterion, non-zero exit on any FAIL.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "commands.hpp"
#include "vrf/vrf.hpp"

using namespace vrf;

namespace {

struct Outcome {
  bool ok = true;
  std::string detail;

  void require(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      if (!detail.empty()) detail += "; ";
      detail += what;
    }
  }
};

std::string num(double v) {
  std::ostringstream os;
  os.precision(3);
  os << std::scientific << v;
  return os.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

template <class Block>
Block seeded(Block b, std::uint64_t seed) {
  Rng rng(seed);
  b.init(rng);
  return b;
}

template <Scalar T>
Tensor<T> input(Shape s, std::uint64_t seed) {
  Rng rng(seed);
  return random_uniform<T>(s, rng, -2.0, 2.0);
}

// 1. Every parameter and input gradient of every block against central differences.
Outcome gradients() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  for (std::size_t c : {8u, 16u}) {
    for (BlockKind k : kAllBlocks) {
      auto any = make_block<double>(k, ModuleConfig::with_channels(c));
      const auto x = input<double>(Shape{1, c, 6, 6}, 100 + c);
      std::visit(
          [&](auto& b) {
            Rng rng(c);
            b.init(rng);
            GradcheckOptions opt;
            opt.h = 1e-6;
            opt.seed = c;
            const auto r = gradcheck_block(b, x, opt);
            worst = std::max(worst, r.max_rel_err());
            for (const auto* f : r.failures(1e-5)) {
              o.require(false, std::string(to_string(k)) + " c=" + std::to_string(c) + " " + f->name + " " +
                                   num(f->result.max_rel_err));
            }
          },
          any);
    }
  }
  const double secs = seconds_since(t0);
  o.require(secs < 120.0, "runtime " + std::to_string(secs) + "s");
  if (o.ok) o.detail = "max rel err " + num(worst) + " < 1e-5, " + std::to_string(secs) + "s";
  return o;
}

// 2. Fast kernels against the loop oracle, f32.
Outcome oracle_equivalence() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(2024);
  double conv_worst = 0.0;
  const std::size_t n_specs = 256;
  std::size_t grouped = 0;
  for (std::size_t i = 0; i < n_specs; ++i) {
    const auto cc = cli::random_conv_case(rng);
    grouped += cc.spec.groups > 1;
    const auto x = random_uniform<float>(cc.input, rng, -2.0, 2.0);
    const auto w = random_uniform<float>(cc.spec.weight_shape(), rng);
    std::optional<Tensor<float>> b;
    if (cc.spec.bias) b = random_uniform<float>(cc.spec.bias_shape(), rng);
    const auto d = diff(nn::conv2d(x, w, b ? &*b : nullptr, cc.spec), oracle::conv2d(x, w, b ? &*b : nullptr, cc.spec));
    conv_worst = std::max(conv_worst, d.max_abs);
  }
  o.require(conv_worst < 1e-6, "conv max abs " + num(conv_worst));
  o.require(grouped > 0, "no grouped specs sampled");

  double block_worst = 0.0;
  for (BlockKind k : kAllBlocks) {
    auto any = make_block<float>(k, ModuleConfig::with_channels(16));
    std::visit([&](auto& b) { Rng r(7); b.init(r); }, any);
    const auto x = input<float>(Shape{2, 16, 8, 8}, 8);
    const auto fast = std::visit([&](auto& b) { return run_forward(b, x, nn::Mode::eval); }, any);
    const double d = diff(fast, oracle::block(any, x, nn::Mode::eval)).max_abs;
    o.require(d < 1e-6, std::string(to_string(k)) + " " + num(d));
    block_worst = std::max(block_worst, d);
  }
  const double secs = seconds_since(t0);
  o.require(secs < 300.0, "runtime " + std::to_string(secs) + "s");
  if (o.ok) {
    o.detail = std::to_string(n_specs) + " specs max " + num(conv_worst) + ", blocks max " + num(block_worst) +
               " < 1e-6";
  }
  return o;
}

// 3. Depthwise C'k^2 versus standard C'^2 k^2, by formula and by manifest bytes.
Outcome complexity(const std::filesystem::path& tmp) {
  Outcome o;
  const std::uint64_t k = 3;
  for (std::uint64_t c : {8u, 16u, 64u, 256u}) {
    const auto dw_spec = nn::ConvSpec::same(c, c, k, 1, c, false);
    const auto std_spec = nn::ConvSpec::same(c, c, k, 1, 1, false);
    const auto dw = profiler::conv_params(dw_spec);
    const auto st = profiler::conv_params(std_spec);
    o.require(dw == c * k * k, "depthwise formula c=" + std::to_string(c));
    o.require(st == c * c * k * k, "standard formula c=" + std::to_string(c));
    o.require(dw * c == st, "ratio c=" + std::to_string(c));

    Conv2d<float> dw_layer(dw_spec), std_layer(std_spec);
    const auto dir = tmp / ("complexity-" + std::to_string(c));
    write_manifest<float>(dir / "dw", dw_layer);
    write_manifest<float>(dir / "std", std_layer);
    const auto dw_bytes = manifest_parameter_elements(dir / "dw");
    const auto std_bytes = manifest_parameter_elements(dir / "std");
    o.require(dw_bytes == dw && std_bytes == st, "manifest counts c=" + std::to_string(c));
    o.require(std_bytes == c * dw_bytes, "manifest ratio c=" + std::to_string(c));
  }
  if (o.ok) o.detail = "ratio 1/C' exact for C' in {8,16,64,256}, formula and manifest";
  return o;
}

// 4. Shape preservation and zero-weight identities.
Outcome invariants() {
  Outcome o;
  for (BlockKind k : kAllBlocks) {
    for (Shape s : {Shape{1, 8, 6, 6}, Shape{2, 8, 5, 9}, Shape{2, 8, 1, 1}}) {
      auto any = make_block<double>(k, ModuleConfig::with_channels(8));
      std::visit([&](auto& b) { Rng r(3); b.init(r); }, any);
      for (auto mode : {nn::Mode::eval, nn::Mode::train}) {
        const auto y = std::visit([&](auto& b) { return run_forward(b, input<double>(s, 4), mode); }, any);
        o.require(y.shape() == s, std::string(to_string(k)) + " " + s.str() + " -> " + y.shape().str());
      }
    }
  }

  const auto x = input<double>(Shape{2, 8, 6, 6}, 5);
  Gconv<double> g(ModuleConfig::with_channels(8).gconv);
  o.require(run_forward(g, x, nn::Mode::eval) == x, "zero-weight gconv not identity");

  GmcfBottleneck<double> b(ModuleConfig::with_channels(8).gmcf);
  for (auto& nt : named_tensors<double>(b)) {
    if (nt.kind == ParamKind::parameter) *nt.tensor = Tensor<double>::zeros_like(*nt.tensor);
  }
  b.bn.state.running_mean = Tensor<double>::zeros_like(b.bn.state.running_mean);
  b.bn.state.running_var = Tensor<double>::full(b.bn.state.running_var.shape(), 1.0);
  o.require(run_forward(b, x, nn::Mode::eval) == x, "zero-weight gmcf bottleneck not identity");
  if (o.ok) o.detail = "shapes preserved for dilations [3,5,7]; identities bit-exact";
  return o;
}

// 5. Gate values and mask range.
Outcome gate_semantics() {
  Outcome o;
  const double g0 = nn::sigmoid_gate(0.0);
  const double g1 = nn::sigmoid_gate(1.0);
  const double ref = 1.0 / (1.0 + std::exp(-1.702));
  o.require(g0 == 0.0, "gate(0) = " + num(g0));
  o.require(std::abs(g1 - 0.845795) <= 1e-6, "gate(1) = " + num(g1));
  o.require(std::abs(g1 - ref) <= 1e-15, "gate(1) != sigma(1.702)");

  auto m = seeded(Mscf<double>(ModuleConfig::with_channels(8).mscf), 9);
  Rng rng(10);
  double lo = 1.0, hi = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const auto x = random_uniform<double>(Shape{1, 8, 5, 5}, rng, -2.0, 2.0);
    std::vector<Tensor<double>> feats;
    std::vector<const Tensor<double>*> ptrs;
    for (const auto& conv : m.dw) feats.push_back(conv(x));
    for (const auto& f : feats) ptrs.push_back(&f);
    const auto mask = m.sa(concat_channels<double>(ptrs));
    for (double v : mask.data()) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  o.require(lo > 0.0 && hi < 1.0, "mask range [" + num(lo) + ", " + num(hi) + "]");
  if (o.ok) o.detail = "gate(1)=" + std::to_string(g1) + ", mask in [" + num(lo) + ", " + num(hi) + "]";
  return o;
}

// 6. Golden generate, verify, and a located failure after corrupting one byte.
Outcome golden(const std::filesystem::path& tmp) {
  Outcome o;
  const auto dir = tmp / "golden";
  auto run = [&](std::vector<std::string> args, std::string* err = nullptr) {
    args.insert(args.begin(), "vrf");
    for (const char* a : {"--out", "", "--channels", "8", "--seed", "11"}) args.emplace_back(a);
    args[args.size() - 5] = dir.string();
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, e;
    const int code = cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, e);
    if (err) *err = out.str() + e.str();
    return code;
  };
  o.require(run({"golden", "generate"}) == 0, "generate failed");
  o.require(run({"golden", "verify"}) == 0, "clean verify failed");
  o.require(run({"golden", "verify", "--oracle"}) == 0, "oracle verify failed");

  std::size_t located = 0, tried = 0;
  for (const char* blk : {"mscf", "gconv", "gmcf", "gmcf-block"}) {
    for (const char* file : {"output.vrft", "input.vrft"}) {
      const auto path = dir / blk / file;
      std::string bytes;
      {
        std::ifstream in(path, std::ios::binary);
        bytes.assign(std::istreambuf_iterator<char>(in), {});
      }
      const std::size_t elem = (bytes.size() - kVrftHeaderSize) / 8 / 2;
      const std::size_t at = kVrftHeaderSize + elem * 8 + 1;
      bytes[at] = static_cast<char>(bytes[at] ^ 0x01);
      std::ofstream(path, std::ios::binary | std::ios::trunc) << bytes;
      std::string msg;
      ++tried;
      const int code = run({"golden", "verify"}, &msg);
      if (code == 1 && msg.find("element " + std::to_string(elem)) != std::string::npos) ++located;
      bytes[at] = static_cast<char>(bytes[at] ^ 0x01);
      std::ofstream(path, std::ios::binary | std::ios::trunc) << bytes;
    }
  }
  o.require(located == tried, std::to_string(tried - located) + " corruptions not located");
  o.require(run({"golden", "verify"}) == 0, "verify after restore failed");
  if (o.ok) o.detail = "round trip bit-exact; " + std::to_string(tried) + "/" + std::to_string(tried) + " corruptions located";
  return o;
}

// 7. GConv against a pointwise FFN with hidden 2c at c=256.
Outcome efficiency() {
  Outcome o;
  Gconv<float> g(ModuleConfig::with_channels(256).gconv);
  profiler::PointwiseFfn<float> ffn(256, 512);
  const auto pg = profiler::count_params(g);
  const auto pf = profiler::count_params(ffn);
  o.require(g.hidden() == 170, "hidden " + std::to_string(g.hidden()));
  o.require(pg == 132'856 && pf == 262'912, "counts " + std::to_string(pg) + " / " + std::to_string(pf));
  o.require(pg == parameter_elements<float>(g) && pf == parameter_elements<float>(ffn), "instantiated mismatch");
  o.require(pg < pf, "gconv not smaller");
  if (o.ok) o.detail = "gconv " + std::to_string(pg) + " < ffn " + std::to_string(pf);
  return o;
}

}  // namespace

int main() {
  const auto tmp = std::filesystem::temp_directory_path() / "vrf-acceptance";
  std::filesystem::remove_all(tmp);
  std::filesystem::create_directories(tmp);

  struct Criterion {
    const char* name;
    std::function<Outcome()> run;
  };
  const Criterion criteria[] = {
      {"1 gradient suite", gradients},
      {"2 oracle equivalence", oracle_equivalence},
      {"3 complexity ratio", [&] { return complexity(tmp); }},
      {"4 shape and identity invariants", invariants},
      {"5 gate semantics", gate_semantics},
      {"6 golden round trip", [&] { return golden(tmp); }},
      {"7 efficiency direction", efficiency},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.ok = false;
      o.detail = std::string("exception: ") + e.what();
    }
    failed += !o.ok;
    std::cout << (o.ok ? "PASS" : "FAIL") << "  " << c.name << ": " << o.detail << std::endl;
  }
  std::filesystem::remove_all(tmp);
  return failed == 0 ? 0 : 1;
}
