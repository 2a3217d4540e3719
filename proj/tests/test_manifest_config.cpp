#include <fstream>

#include "support.hpp"

using namespace vrf;

namespace {

GmcfBlock<double> sample_block(std::uint64_t seed) {
  GmcfBlock<double> b(ModuleConfig::with_channels(8).gmcf);
  Rng rng(seed);
  b.init(rng);
  return b;
}

void expect_config_error(const std::string& text, const std::string& fragment) {
  try {
    parse_config_text(text);
    ADD_FAILURE() << "accepted: " << text;
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find(fragment), std::string::npos) << e.what();
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// manifest

TEST(Manifest, RoundTrip) {
  const auto dir = test::temp_dir("manifest");
  auto src = sample_block(1);
  write_manifest<double>(dir, src);
  auto dst = sample_block(2);
  load_manifest<double>(dir, dst);
  const auto a = named_tensors<double>(src);
  const auto b = named_tensors<double>(dst);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(*a[i].tensor, *b[i].tensor) << a[i].name;
}

TEST(Manifest, BuffersAreListedButNotCounted) {
  const auto dir = test::temp_dir("manifest-buffers");
  GmcfBottleneck<float> b(ModuleConfig::with_channels(8).gmcf);
  write_manifest<float>(dir, b);
  std::size_t buffers = 0;
  for (const auto& e : read_manifest(dir)) buffers += e.kind == ParamKind::buffer;
  EXPECT_EQ(buffers, 2u);
  EXPECT_EQ(manifest_parameter_elements(dir), parameter_elements<float>(b));
  EXPECT_EQ(manifest_parameter_elements(dir), profiler::count_params(b));
}

TEST(Manifest, Errors) {
  const auto dir = test::temp_dir("manifest-errors");
  auto src = sample_block(3);
  write_manifest<double>(dir, src);

  // wrong dtype
  auto f32 = src.rebind<float>();
  EXPECT_THROW(load_manifest<float>(dir, f32), FormatError);

  // shape mismatch against a wider block
  GmcfBlock<double> wide(ModuleConfig::with_channels(16).gmcf);
  EXPECT_THROW(load_manifest<double>(dir, wide), FormatError);

  // missing entry
  {
    std::ifstream in(dir / kManifestFile);
    std::string all((std::istreambuf_iterator<char>(in)), {});
    const auto pos = all.find("param cv2.bias");
    all.replace(pos, std::string("param cv2.bias").size(), "param cv2.other");
    std::ofstream(dir / kManifestFile) << all;
  }
  try {
    load_manifest<double>(dir, src);
    ADD_FAILURE();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("cv2.bias"), std::string::npos);
  }

  std::ofstream(dir / kManifestFile) << "param only_two\n";
  EXPECT_THROW(read_manifest(dir), FormatError);
  std::ofstream(dir / kManifestFile) << "weird a b\n";
  EXPECT_THROW(read_manifest(dir), FormatError);
  EXPECT_THROW(read_manifest(dir / "nope"), FormatError);
}

// ---------------------------------------------------------------------------
// configuration documents

TEST(ConfigDoc, Defaults) {
  const auto doc = parse_config_text(R"({"channels": 16})");
  const auto& m = doc.module;
  EXPECT_EQ(m.channels, 16u);
  EXPECT_EQ(m.mscf.channels, 16u);
  EXPECT_EQ(m.mscf.dilations, (std::vector<std::size_t>{3, 5, 7}));
  EXPECT_EQ(m.mscf.mask_kernel, 7u);
  EXPECT_EQ(m.mscf.ca_ratio, 4u);
  EXPECT_TRUE(m.mscf.use_ca);
  EXPECT_EQ(m.gconv.hidden_width(), 10u);
  EXPECT_EQ(m.gconv.activation, nn::Activation::sigmoid_gate);
  EXPECT_EQ(m.gconv.dropout, 0.0);
  EXPECT_EQ(m.gmcf.bn_eps, 1e-5);
  EXPECT_EQ(m.gmcf.bn_momentum, 0.1);
  EXPECT_EQ(m.gmcf.n_bottlenecks, 1u);
  EXPECT_EQ(m.gmcf.channels, 16u);
  EXPECT_FALSE(doc.run.block.has_value());
}

TEST(ConfigDoc, UnknownKeysRejectedAtEveryLevel) {
  expect_config_error(R"({"channels": 8, "extra": 1})", "extra");
  expect_config_error(R"({"channels": 8, "mscf": {"scales": 3}})", "scales");
  expect_config_error(R"({"channels": 8, "gconv": {"hiden": 3}})", "hiden");
  expect_config_error(R"({"channels": 8, "gmcf": {"eps": 1}})", "eps");
  expect_config_error(R"({"channels": 8, "run": {"seeds": 1}})", "seeds");
}

TEST(ConfigDoc, TypeAndValueErrors) {
  expect_config_error(R"({})", "channels");
  expect_config_error(R"({"channels": 0})", "channels");
  expect_config_error(R"({"channels": "8"})", "channels");
  expect_config_error(R"({"channels": 8, "mscf": {"n_scales": 2}})", "n_scales");
  expect_config_error(R"({"channels": 8, "mscf": {"dilations": [3, -1, 7]}})", "dilations");
  expect_config_error(R"({"channels": 8, "gconv": {"activation": "tanh"}})", "tanh");
  expect_config_error(R"({"channels": 8, "run": {"dtype": "f16"}})", "f16");
  expect_config_error(R"({"channels": 8, "run": {"mode": "infer"}})", "mode");
  expect_config_error(R"({"channels": 8, "run": {"block": "resnet"}})", "resnet");
  expect_config_error(R"({"channels": 8, "run": {"tol": -1}})", "tol");
  expect_config_error(R"({"channels": 8, )", "parse");
}

TEST(ConfigDoc, RunSection) {
  const auto doc = parse_config_text(R"({"channels": 6,
    "run": {"block": "gconv", "seed": 7, "dtype": "f64", "input_shape": [1, 6, 4, 4],
            "tol": 1e-6, "mode": "train", "out": "reports"}})");
  EXPECT_EQ(doc.run.block, BlockKind::gconv);
  EXPECT_EQ(doc.run.seed, 7u);
  EXPECT_EQ(doc.run.dtype, DType::f64);
  EXPECT_EQ(doc.run.input_shape, (Shape{1, 6, 4, 4}));
  EXPECT_EQ(doc.run.tol, 1e-6);
  EXPECT_EQ(doc.run.mode, nn::Mode::train);
  EXPECT_EQ(doc.run.out, "reports");
}

TEST(ConfigDoc, SubsectionsPropagateIntoBottleneck) {
  const auto doc = parse_config_text(R"({"channels": 8,
    "mscf": {"n_scales": 2, "dilations": [1, 2], "use_ca": false},
    "gconv": {"hidden": 3, "activation": "relu"},
    "gmcf": {"n_bottlenecks": 3, "c_out": 16}})");
  const auto& g = doc.module.gmcf;
  EXPECT_EQ(g.mscf.dilations, (std::vector<std::size_t>{1, 2}));
  EXPECT_FALSE(g.mscf.use_ca);
  EXPECT_EQ(g.gconv.hidden, 3u);
  EXPECT_EQ(g.gconv.activation, nn::Activation::relu);
  EXPECT_EQ(g.out_channels(), 16u);
  GmcfBlock<double> b(g);
  EXPECT_EQ(b.m.size(), 3u);
}

TEST(ConfigDoc, JsonRoundTrip) {
  const auto doc = parse_config_text(R"({"channels": 12,
    "mscf": {"n_scales": 4, "dilations": [1, 3, 5, 7], "ca_ratio": 3},
    "gconv": {"hidden": 5, "dropout": 0.25, "activation": "sigmoid"},
    "gmcf": {"bn_eps": 1e-3, "n_bottlenecks": 2, "hidden_ratio": 0.25, "c_out": 16}})");
  const auto again = parse_config(nlohmann::json::parse(module_config_to_json(doc.module).dump()));
  EXPECT_EQ(module_config_to_json(again.module), module_config_to_json(doc.module));
  EXPECT_EQ(again.module.gconv.dropout, 0.25);
  EXPECT_EQ(again.module.gmcf.hidden_ratio, 0.25);
}

TEST(ConfigDoc, LoadFromFile) {
  const auto dir = test::temp_dir("config");
  std::ofstream(dir / "c.json") << R"({"channels": 8, "bogus": true})";
  try {
    load_config(dir / "c.json");
    ADD_FAILURE();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("c.json"), std::string::npos);
  }
  EXPECT_THROW(load_config(dir / "missing.json"), ConfigError);
}
