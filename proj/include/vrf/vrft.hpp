#pragma once

// "VRFT" golden-tensor binary format.
//
//   offset  size  field
//   0       4     magic "VRFT"
//   4       1     version (1)
//   5       1     dtype (0 = f32, 1 = f64)
//   6       1     rank (4)
//   7       16    dims n, c, h, w as little-endian u32
//   23      ...   row-major payload, little-endian IEEE-754

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "vrf/tensor.hpp"

namespace vrf {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::array<char, 4> kVrftMagic = {'V', 'R', 'F', 'T'};
inline constexpr std::uint8_t kVrftVersion = 1;
inline constexpr std::size_t kVrftHeaderSize = 23;

using AnyTensor = std::variant<Tensor<float>, Tensor<double>>;

namespace detail {

template <class U>
void put_le(std::vector<std::uint8_t>& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

template <class U>
U get_le(const std::uint8_t* p) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(p[i]) << (8 * i);
  return v;
}

template <StorageScalar T>
using bits_t = std::conditional_t<std::same_as<T, float>, std::uint32_t, std::uint64_t>;

}  // namespace detail

template <StorageScalar T>
std::vector<std::uint8_t> encode_vrft(const Tensor<T>& t) {
  const Shape& s = t.shape();
  for (std::size_t d : {s.n, s.c, s.h, s.w}) {
    if (d > std::numeric_limits<std::uint32_t>::max()) throw FormatError("VRFT: dimension exceeds u32");
  }
  std::vector<std::uint8_t> out;
  out.reserve(kVrftHeaderSize + t.numel() * sizeof(T));
  out.insert(out.end(), kVrftMagic.begin(), kVrftMagic.end());
  out.push_back(kVrftVersion);
  out.push_back(static_cast<std::uint8_t>(dtype_of<T>));
  out.push_back(4);
  for (std::size_t d : {s.n, s.c, s.h, s.w}) detail::put_le(out, static_cast<std::uint32_t>(d));
  for (T v : t.data()) detail::put_le(out, std::bit_cast<detail::bits_t<T>>(v));
  return out;
}

struct VrftHeader {
  DType dtype;
  Shape shape;
};

inline VrftHeader decode_vrft_header(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kVrftHeaderSize) throw FormatError("VRFT: truncated header");
  if (std::memcmp(bytes.data(), kVrftMagic.data(), 4) != 0) throw FormatError("VRFT: bad magic");
  if (bytes[4] != kVrftVersion) {
    throw FormatError("VRFT: unsupported version " + std::to_string(bytes[4]));
  }
  if (bytes[5] > 1) throw FormatError("VRFT: unknown dtype code " + std::to_string(bytes[5]));
  if (bytes[6] != 4) throw FormatError("VRFT: rank must be 4, got " + std::to_string(bytes[6]));
  VrftHeader h{static_cast<DType>(bytes[5]), {}};
  const std::uint8_t* p = bytes.data() + 7;
  h.shape = Shape{detail::get_le<std::uint32_t>(p), detail::get_le<std::uint32_t>(p + 4),
                  detail::get_le<std::uint32_t>(p + 8), detail::get_le<std::uint32_t>(p + 12)};
  if (!h.shape.valid()) throw FormatError("VRFT: zero dimension in " + h.shape.str());
  const std::size_t want = kVrftHeaderSize + h.shape.numel() * dtype_size(h.dtype);
  if (bytes.size() != want) {
    throw FormatError("VRFT: payload size " + std::to_string(bytes.size()) + " bytes, expected " +
                      std::to_string(want));
  }
  return h;
}

template <StorageScalar T>
Tensor<T> decode_vrft_payload(std::span<const std::uint8_t> bytes, const Shape& shape) {
  Tensor<T> t(shape);
  const std::uint8_t* p = bytes.data() + kVrftHeaderSize;
  for (auto& v : t.data()) {
    v = std::bit_cast<T>(detail::get_le<detail::bits_t<T>>(p));
    p += sizeof(T);
  }
  return t;
}

inline AnyTensor decode_vrft(std::span<const std::uint8_t> bytes) {
  const VrftHeader h = decode_vrft_header(bytes);
  if (h.dtype == DType::f32) return decode_vrft_payload<float>(bytes, h.shape);
  return decode_vrft_payload<double>(bytes, h.shape);
}

template <StorageScalar T>
Tensor<T> decode_vrft_as(std::span<const std::uint8_t> bytes) {
  const VrftHeader h = decode_vrft_header(bytes);
  if (h.dtype != dtype_of<T>) {
    throw FormatError(std::string("VRFT: dtype ") + to_string(h.dtype) + ", expected " +
                      to_string(dtype_of<T>));
  }
  return decode_vrft_payload<T>(bytes, h.shape);
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

template <StorageScalar T>
void write_vrft(const std::filesystem::path& path, const Tensor<T>& t) {
  write_file_bytes(path, encode_vrft(t));
}

template <StorageScalar T>
Tensor<T> read_vrft_as(const std::filesystem::path& path) {
  try {
    return decode_vrft_as<T>(read_file_bytes(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

inline AnyTensor read_vrft(const std::filesystem::path& path) {
  try {
    return decode_vrft(read_file_bytes(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace vrf
