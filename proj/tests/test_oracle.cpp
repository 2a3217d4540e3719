#include "commands.hpp"
#include "support.hpp"

using namespace vrf;
using test::rand;

TEST(Oracle, IdentityKernel) {
  const auto spec = nn::ConvSpec::same(1, 1, 3);
  Tensor<double> w(spec.weight_shape());
  w.at(0, 0, 1, 1) = 1.0;
  const auto x = rand<double>(Shape{1, 1, 5, 5}, 1);
  EXPECT_EQ(oracle::conv2d(x, w, nullptr, spec), x);
}

TEST(Oracle, PointwiseSum) {
  const auto spec = nn::ConvSpec::pointwise(2, 1, false);
  Tensor<double> w(spec.weight_shape(), {1.0, 2.0});
  Tensor<double> x(Shape{1, 2, 1, 1}, {3.0, 4.0});
  EXPECT_EQ(oracle::conv2d(x, w, nullptr, spec)[0], 11.0);
}

template <class T>
double worst_random_conv(std::size_t cases, std::uint64_t seed, std::size_t* strided) {
  Rng rng(seed);
  double worst = 0.0;
  for (std::size_t i = 0; i < cases; ++i) {
    const auto cc = cli::random_conv_case(rng);
    if (cc.spec.stride > 1) ++*strided;
    const auto x = random_uniform<T>(cc.input, rng, -2.0, 2.0);
    const auto w = random_uniform<T>(cc.spec.weight_shape(), rng);
    std::optional<Tensor<T>> b;
    if (cc.spec.bias) b = random_uniform<T>(cc.spec.bias_shape(), rng);
    const auto fast = nn::conv2d(x, w, b ? &*b : nullptr, cc.spec);
    const auto ref = oracle::conv2d(x, w, b ? &*b : nullptr, cc.spec);
    EXPECT_EQ(fast.shape(), ref.shape()) << cli::spec_str(cc.spec);
    worst = std::max(worst, diff(fast, ref).max_abs);
  }
  return worst;
}

TEST(Oracle, RandomConvSpecs) {
  std::size_t strided = 0;
  EXPECT_LT(worst_random_conv<float>(200, 1, &strided), 1e-6);
  EXPECT_LT(worst_random_conv<double>(200, 2, &strided), 1e-12);
  EXPECT_GT(strided, 0u);
}

TEST(Oracle, BlockIdentities) {
  Gconv<double> g(ModuleConfig::with_channels(6).gconv);
  const auto x = rand<double>(Shape{1, 6, 4, 4}, 3);
  EXPECT_EQ(oracle::gconv(g, x, nn::Mode::eval), x);

  Mscf<double> m(ModuleConfig::with_channels(8).mscf);
  Rng rng(4);
  m.init(rng);
  const auto y = oracle::mscf(m, Tensor<double>(Shape{1, 8, 5, 5}));
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(Oracle, RejectsActiveDropout) {
  auto cfg = ModuleConfig::with_channels(6).gconv;
  cfg.dropout = 0.2;
  Gconv<double> g(cfg);
  const auto x = rand<double>(Shape{1, 6, 4, 4}, 5);
  EXPECT_THROW(oracle::gconv(g, x, nn::Mode::train), std::invalid_argument);
  EXPECT_NO_THROW(oracle::gconv(g, x, nn::Mode::eval));
}

TEST(OpCounter, PointwiseMacs) {
  const auto spec = nn::ConvSpec::pointwise(64, 128);
  const Tensor<float> x(Shape{1, 64, 32, 32});
  const Tensor<float> w(spec.weight_shape());
  oracle::OpCounter c;
  oracle::conv2d(x, w, nullptr, spec, &c);
  EXPECT_EQ(c.macs, 8'388'608u);
  EXPECT_EQ(profiler::conv_macs(spec, x.shape()), 8'388'608u);
}

TEST(OpCounter, ResidualAdd) {
  const Tensor<float> a(Shape{1, 64, 32, 32});
  oracle::OpCounter c;
  oracle::add(a, a, &c);
  EXPECT_EQ(c.elementwise, 65'536u);
  EXPECT_EQ(c.macs, 0u);
}

TEST(OpCounter, PaddingTapsCount) {
  const auto spec = nn::ConvSpec::depthwise(2, 3, 5);
  const Tensor<double> x(Shape{1, 2, 4, 4});
  oracle::OpCounter c;
  oracle::conv2d(x, Tensor<double>(spec.weight_shape()), nullptr, spec, &c);
  EXPECT_EQ(c.macs, 2u * 16u * 9u);
}

TEST(OpCounter, AnalyticCountsMatchOracle) {
  struct Case {
    std::size_t c;
    Shape x;
    std::size_t n_bottlenecks;
  };
  const Case cases[] = {{8, {1, 8, 6, 6}, 1}, {16, {2, 16, 5, 7}, 2}, {32, {1, 32, 4, 4}, 0}, {256, {1, 256, 20, 20}, 1}};
  for (const auto& cs : cases) {
    auto cfg = ModuleConfig::with_channels(cs.c);
    cfg.gmcf.n_bottlenecks = cs.n_bottlenecks;
    for (BlockKind k : kAllBlocks) {
      if (cs.c == 256 && k != BlockKind::gconv) continue;
      const auto b = make_block<float>(k, cfg);
      const Tensor<float> x(cs.x);
      oracle::OpCounter counter;
      oracle::block(b, x, nn::Mode::eval, &counter);
      const auto counts = profiler::count_ops(b, cs.x);
      EXPECT_EQ(counts.macs, counter.macs) << to_string(k) << " c=" << cs.c;
      EXPECT_EQ(counts.elementwise, counter.elementwise) << to_string(k) << " c=" << cs.c;
    }
  }
}

TEST(OracleReport, JsonLine) {
  oracle::OracleReport r{"gconv", 1.5e-7, 2e-6, {"(1,6,4,4)"}, 7, true};
  const auto j = nlohmann::json::parse(r.to_json_line());
  EXPECT_EQ(j["op"], "gconv");
  EXPECT_EQ(j["max_abs_diff"], 1.5e-7);
  EXPECT_EQ(j["max_rel_diff"], 2e-6);
  EXPECT_EQ(j["input_shapes"][0], "(1,6,4,4)");
  EXPECT_EQ(j["seed"], 7);
  EXPECT_EQ(j["passed"], true);
}
