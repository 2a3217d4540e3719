#pragma once

// Parameter manifests: one VRFT file per tensor plus a plain-text index.
//
//   # vrf-manifest v1
//   param dw.0.weight dw.0.weight.vrft
//   buffer bn.running_mean bn.running_mean.vrft
//
// Lines are "<kind> <name> <file>", kind in {param, buffer}, file relative
// to the manifest's directory. '#' starts a comment line.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "vrf/layers.hpp"
#include "vrf/vrft.hpp"

namespace vrf {

inline constexpr const char* kManifestFile = "manifest.txt";

struct ManifestEntry {
  ParamKind kind;
  std::string name;
  std::string file;
};

template <StorageScalar T, class Block>
void write_manifest(const std::filesystem::path& dir, Block& block) {
  std::filesystem::create_directories(dir);
  std::ofstream index(dir / kManifestFile, std::ios::trunc);
  if (!index) throw FormatError("cannot write " + (dir / kManifestFile).string());
  index << "# vrf-manifest v1\n";
  for (const auto& nt : named_tensors<T>(block)) {
    const std::string file = nt.name + ".vrft";
    write_vrft(dir / file, *nt.tensor);
    index << (nt.kind == ParamKind::parameter ? "param" : "buffer") << ' ' << nt.name << ' ' << file << '\n';
  }
}

inline std::vector<ManifestEntry> read_manifest(const std::filesystem::path& dir) {
  std::ifstream in(dir / kManifestFile);
  if (!in) throw FormatError("cannot open " + (dir / kManifestFile).string());
  std::vector<ManifestEntry> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string kind, name, file, extra;
    if (!(ls >> kind >> name >> file) || (ls >> extra)) {
      throw FormatError("manifest line " + std::to_string(lineno) + ": expected '<kind> <name> <file>'");
    }
    if (kind != "param" && kind != "buffer") {
      throw FormatError("manifest line " + std::to_string(lineno) + ": unknown kind '" + kind + "'");
    }
    out.push_back({kind == "param" ? ParamKind::parameter : ParamKind::buffer, name, file});
  }
  return out;
}

/// Replaces every tensor of `block` with the manifest's copy. The manifest
/// must list exactly the block's tensors, with matching shapes and dtype.
template <StorageScalar T, class Block>
void load_manifest(const std::filesystem::path& dir, Block& block) {
  std::map<std::string, ManifestEntry> entries;
  for (auto& e : read_manifest(dir)) entries.emplace(e.name, e);
  const auto tensors = named_tensors<T>(block);
  if (entries.size() != tensors.size()) {
    throw FormatError("manifest lists " + std::to_string(entries.size()) + " tensors, block has " +
                      std::to_string(tensors.size()));
  }
  for (const auto& nt : tensors) {
    auto it = entries.find(nt.name);
    if (it == entries.end()) throw FormatError("manifest is missing tensor '" + nt.name + "'");
    Tensor<T> t = read_vrft_as<T>(dir / it->second.file);
    if (t.shape() != nt.tensor->shape()) {
      throw FormatError("manifest tensor '" + nt.name + "' has shape " + t.shape().str() + ", expected " +
                        nt.tensor->shape().str());
    }
    *nt.tensor = std::move(t);
  }
}

/// Parameter element count derived from file sizes and header dtypes.
inline std::uint64_t manifest_parameter_elements(const std::filesystem::path& dir) {
  std::uint64_t total = 0;
  for (const auto& e : read_manifest(dir)) {
    if (e.kind != ParamKind::parameter) continue;
    const auto path = dir / e.file;
    const auto bytes = std::filesystem::file_size(path);
    std::ifstream in(path, std::ios::binary);
    char header[kVrftHeaderSize];
    if (bytes < kVrftHeaderSize || !in.read(header, kVrftHeaderSize)) throw FormatError("truncated " + path.string());
    const std::uint64_t elem = header[5] == 0 ? 4 : 8;
    total += (bytes - kVrftHeaderSize) / elem;
  }
  return total;
}

}  // namespace vrf
