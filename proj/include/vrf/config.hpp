#pragma once

// JSON module/run configuration. Unknown keys are rejected at every level.
//
// {
//   "channels": 8,
//   "mscf":  {"n_scales": 3, "dilations": [3, 5, 7], "dw_kernel": 3,
//             "mask_kernel": 7, "ca_ratio": 4, "use_ca": true},
//   "gconv": {"hidden": 5, "dw_kernel": 3, "dropout": 0.0,
//             "activation": "sigmoid_gate"},
//   "gmcf":  {"bn_eps": 1e-5, "bn_momentum": 0.1, "dropout": 0.0,
//             "n_bottlenecks": 1, "hidden_ratio": 0.5, "c_out": 8},
//   "run":   {"block": "gconv", "seed": 7, "dtype": "f64",
//             "input_shape": [1, 6, 4, 4], "tol": 1e-5, "mode": "train",
//             "out": "golden"}
// }
//
// Every key is optional except "channels". MSCF and GConv settings also
// apply inside GMCF bottlenecks, at the bottleneck's width.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <string>

#include "json.hpp"
#include "vrf/blocks.hpp"

namespace vrf {

struct RunSettings {
  std::optional<BlockKind> block;
  std::optional<std::uint64_t> seed;
  std::optional<DType> dtype;
  std::optional<Shape> input_shape;
  std::optional<double> tol;
  std::optional<nn::Mode> mode;
  std::optional<std::string> out;
};

struct ConfigDocument {
  ModuleConfig module;
  RunSettings run;
};

namespace detail {

using json = nlohmann::json;

inline void require_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || it.key() == a;
    if (!ok) throw ConfigError(where + ": unknown key '" + it.key() + "'");
  }
}

template <class V>
void read(const json& j, const char* key, V& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<V>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

inline std::size_t read_count(const json& j, const char* key, std::size_t fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_number_unsigned()) throw ConfigError(where + "." + key + ": expected a non-negative integer");
  return v.get<std::size_t>();
}

inline Shape parse_shape(const json& v, const std::string& where) {
  if (!v.is_array() || v.size() != 4) throw ConfigError(where + ": expected [n, c, h, w]");
  std::size_t d[4];
  for (std::size_t i = 0; i < 4; ++i) {
    if (!v[i].is_number_unsigned() || v[i].get<std::size_t>() == 0) {
      throw ConfigError(where + ": dimensions must be positive integers");
    }
    d[i] = v[i].get<std::size_t>();
  }
  return Shape{d[0], d[1], d[2], d[3]};
}

}  // namespace detail

inline std::optional<DType> dtype_from_name(std::string_view s) {
  if (s == "f32") return DType::f32;
  if (s == "f64") return DType::f64;
  return std::nullopt;
}

inline std::optional<nn::Activation> activation_from_name(std::string_view s) {
  for (auto a : {nn::Activation::relu, nn::Activation::sigmoid, nn::Activation::sigmoid_gate}) {
    if (s == nn::to_string(a)) return a;
  }
  return std::nullopt;
}

inline ConfigDocument parse_config(const nlohmann::json& j) {
  using detail::read;
  using detail::read_count;
  detail::require_keys(j, "config", {"channels", "mscf", "gconv", "gmcf", "run"});
  ConfigDocument doc;
  if (!j.contains("channels")) throw ConfigError("config: missing required key 'channels'");
  const std::size_t channels = read_count(j, "channels", 0, "config");
  if (channels == 0) throw ConfigError("config.channels: must be >= 1");

  ModuleConfig& m = doc.module;
  if (j.contains("mscf")) {
    const auto& s = j.at("mscf");
    detail::require_keys(s, "mscf", {"n_scales", "dilations", "dw_kernel", "mask_kernel", "ca_ratio", "use_ca"});
    m.mscf.n_scales = read_count(s, "n_scales", m.mscf.n_scales, "mscf");
    if (s.contains("dilations")) {
      const auto& d = s.at("dilations");
      if (!d.is_array()) throw ConfigError("mscf.dilations: expected an array");
      m.mscf.dilations.clear();
      for (const auto& v : d) {
        if (!v.is_number_unsigned()) throw ConfigError("mscf.dilations: expected positive integers");
        m.mscf.dilations.push_back(v.get<std::size_t>());
      }
    } else if (m.mscf.n_scales != m.mscf.dilations.size()) {
      throw ConfigError("mscf: n_scales changed without giving dilations");
    }
    m.mscf.dw_kernel = read_count(s, "dw_kernel", m.mscf.dw_kernel, "mscf");
    m.mscf.mask_kernel = read_count(s, "mask_kernel", m.mscf.mask_kernel, "mscf");
    m.mscf.ca_ratio = read_count(s, "ca_ratio", m.mscf.ca_ratio, "mscf");
    read(s, "use_ca", m.mscf.use_ca, "mscf");
  }
  if (j.contains("gconv")) {
    const auto& s = j.at("gconv");
    detail::require_keys(s, "gconv", {"hidden", "dw_kernel", "dropout", "activation"});
    if (s.contains("hidden")) m.gconv.hidden = read_count(s, "hidden", 0, "gconv");
    m.gconv.dw_kernel = read_count(s, "dw_kernel", m.gconv.dw_kernel, "gconv");
    read(s, "dropout", m.gconv.dropout, "gconv");
    if (s.contains("activation")) {
      std::string a;
      read(s, "activation", a, "gconv");
      auto act = activation_from_name(a);
      if (!act) throw ConfigError("gconv.activation: unknown activation '" + a + "'");
      m.gconv.activation = *act;
    }
  }
  m.gmcf.mscf = m.mscf;
  m.gmcf.gconv = m.gconv;
  if (j.contains("gmcf")) {
    const auto& s = j.at("gmcf");
    detail::require_keys(s, "gmcf", {"bn_eps", "bn_momentum", "dropout", "n_bottlenecks", "hidden_ratio", "c_out"});
    read(s, "bn_eps", m.gmcf.bn_eps, "gmcf");
    read(s, "bn_momentum", m.gmcf.bn_momentum, "gmcf");
    read(s, "dropout", m.gmcf.dropout, "gmcf");
    m.gmcf.n_bottlenecks = read_count(s, "n_bottlenecks", m.gmcf.n_bottlenecks, "gmcf");
    read(s, "hidden_ratio", m.gmcf.hidden_ratio, "gmcf");
    if (s.contains("c_out")) m.gmcf.c_out = read_count(s, "c_out", 0, "gmcf");
  }
  m.set_channels(channels);

  if (j.contains("run")) {
    const auto& s = j.at("run");
    detail::require_keys(s, "run", {"block", "seed", "dtype", "input_shape", "tol", "mode", "out"});
    if (s.contains("block")) {
      std::string b;
      read(s, "block", b, "run");
      doc.run.block = block_from_name(b);
      if (!doc.run.block) throw ConfigError("run.block: unknown block '" + b + "'");
    }
    if (s.contains("seed")) {
      if (!s.at("seed").is_number_unsigned()) throw ConfigError("run.seed: expected a non-negative integer");
      doc.run.seed = s.at("seed").get<std::uint64_t>();
    }
    if (s.contains("dtype")) {
      std::string d;
      read(s, "dtype", d, "run");
      doc.run.dtype = dtype_from_name(d);
      if (!doc.run.dtype) throw ConfigError("run.dtype: expected f32 or f64, got '" + d + "'");
    }
    if (s.contains("input_shape")) doc.run.input_shape = detail::parse_shape(s.at("input_shape"), "run.input_shape");
    if (s.contains("tol")) {
      double t = 0;
      read(s, "tol", t, "run");
      if (!(t >= 0.0)) throw ConfigError("run.tol: must be >= 0");
      doc.run.tol = t;
    }
    if (s.contains("mode")) {
      std::string md;
      read(s, "mode", md, "run");
      if (md != "train" && md != "eval") throw ConfigError("run.mode: expected train or eval");
      doc.run.mode = md == "train" ? nn::Mode::train : nn::Mode::eval;
    }
    if (s.contains("out")) {
      std::string o;
      read(s, "out", o, "run");
      doc.run.out = o;
    }
  }
  return doc;
}

inline ConfigDocument parse_config_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  return parse_config(j);
}

inline ConfigDocument load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config_text(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

/// Inverse of parse_config for the module part.
inline nlohmann::ordered_json module_config_to_json(const ModuleConfig& m) {
  nlohmann::ordered_json j;
  j["channels"] = m.channels;
  j["mscf"] = {{"n_scales", m.mscf.n_scales},   {"dilations", m.mscf.dilations}, {"dw_kernel", m.mscf.dw_kernel},
               {"mask_kernel", m.mscf.mask_kernel}, {"ca_ratio", m.mscf.ca_ratio},   {"use_ca", m.mscf.use_ca}};
  nlohmann::ordered_json g = {{"dw_kernel", m.gconv.dw_kernel},
                              {"dropout", m.gconv.dropout},
                              {"activation", nn::to_string(m.gconv.activation)}};
  if (m.gconv.hidden) g["hidden"] = *m.gconv.hidden;
  j["gconv"] = g;
  nlohmann::ordered_json b = {{"bn_eps", m.gmcf.bn_eps},
                              {"bn_momentum", m.gmcf.bn_momentum},
                              {"dropout", m.gmcf.dropout},
                              {"n_bottlenecks", m.gmcf.n_bottlenecks},
                              {"hidden_ratio", m.gmcf.hidden_ratio}};
  if (m.gmcf.c_out) b["c_out"] = *m.gmcf.c_out;
  j["gmcf"] = b;
  return j;
}

}  // namespace vrf
