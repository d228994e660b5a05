#pragma once

// Independent reference for the customs stamps: arbitrary-precision
// arithmetic for the time expansion, OpenSSL for SHA-256.

#include <boost/multiprecision/cpp_int.hpp>
#include <openssl/sha.h>

#include <array>
#include <cstdint>

namespace oracle {

using Block = std::array<std::uint8_t, 32>;
using boost::multiprecision::cpp_int;

inline Block sha256(const Block& in) {
  Block out{};
  SHA256(in.data(), in.size(), out.data());
  return out;
}

inline std::uint64_t mask(std::uint64_t t) { return t - (t % 16); }

/// masked * (1 + 2^64 + 2^128 + 2^192), as 32 little-endian octets.
inline Block time256(std::uint64_t masked) {
  cpp_int one = 1;
  cpp_int factor = one + (one << 64) + (one << 128) + (one << 192);
  cpp_int v = cpp_int(masked) * factor;
  Block out{};
  for (std::size_t i = 0; i < 32; ++i) {
    out[i] = static_cast<std::uint8_t>(v & 0xFF);
    v >>= 8;
  }
  return out;
}

inline Block xor_blocks(const Block& a, const Block& b) {
  Block out{};
  for (std::size_t i = 0; i < 32; ++i) out[i] = a[i] ^ b[i];
  return out;
}

inline Block visa(std::uint64_t now, const Block& cvk) { return sha256(xor_blocks(time256(mask(now)), cvk)); }

inline Block pass(const Block& visa_value, const Block& cpk) { return sha256(xor_blocks(cpk, visa_value)); }

}  // namespace oracle
