#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "optdiag/core.hpp"

namespace optdiag {

// Binary parameter snapshot, all integers and floats little-endian:
//   8 bytes magic "OPTDCKPT" | u32 version | u64 dim | u64 model digest | dim x f64
struct Checkpoint {
  static constexpr std::array<char, 8> kMagic = {'O', 'P', 'T', 'D', 'C', 'K', 'P', 'T'};
  static constexpr std::uint32_t kVersion = 1;

  std::uint64_t model_digest = 0;
  ParamVector values;
};

namespace detail {

template <class U>
void put_le(std::vector<unsigned char>& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

template <class U>
U get_le(const unsigned char* p) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(p[i]) << (8 * i);
  return v;
}

}  // namespace detail

inline std::vector<unsigned char> encode_checkpoint(const Checkpoint& ck) {
  std::vector<unsigned char> out(Checkpoint::kMagic.begin(), Checkpoint::kMagic.end());
  detail::put_le<std::uint32_t>(out, Checkpoint::kVersion);
  detail::put_le<std::uint64_t>(out, ck.values.size());
  detail::put_le<std::uint64_t>(out, ck.model_digest);
  for (double v : ck.values) detail::put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  return out;
}

// Decodes and checks the header. When `expected_digest` / `expected_dim` are
// given, a mismatch is an error.
inline Checkpoint decode_checkpoint(const std::vector<unsigned char>& bytes,
                                    std::optional<std::uint64_t> expected_digest = std::nullopt,
                                    std::optional<std::size_t> expected_dim = std::nullopt) {
  constexpr std::size_t kHeader = 8 + 4 + 8 + 8;
  if (bytes.size() < kHeader || std::memcmp(bytes.data(), Checkpoint::kMagic.data(), 8) != 0) {
    throw ParseError("checkpoint: bad magic");
  }
  const auto version = detail::get_le<std::uint32_t>(bytes.data() + 8);
  if (version != Checkpoint::kVersion) throw ParseError("checkpoint: unsupported version " + std::to_string(version));
  const auto dim = detail::get_le<std::uint64_t>(bytes.data() + 12);
  Checkpoint ck;
  ck.model_digest = detail::get_le<std::uint64_t>(bytes.data() + 20);
  if (bytes.size() != kHeader + 8 * dim) throw ParseError("checkpoint: truncated or oversized payload");
  if (expected_dim && dim != *expected_dim) {
    throw ParseError("checkpoint: dimension " + std::to_string(dim) + " does not match model dimension " +
                     std::to_string(*expected_dim));
  }
  if (expected_digest && ck.model_digest != *expected_digest) throw ParseError("checkpoint: model digest mismatch");
  ck.values.resize(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    ck.values[i] = std::bit_cast<double>(detail::get_le<std::uint64_t>(bytes.data() + kHeader + 8 * i));
  }
  return ck;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  const auto bytes = encode_checkpoint(ck);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("checkpoint: cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("checkpoint: write failed for " + path);
}

inline Checkpoint load_checkpoint(const std::string& path, std::optional<std::uint64_t> expected_digest = std::nullopt,
                                  std::optional<std::size_t> expected_dim = std::nullopt) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("checkpoint: cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes, expected_digest, expected_dim);
}

}  // namespace optdiag
