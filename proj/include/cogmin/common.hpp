#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cogmin {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

/// 32-octet value: SHA-256 output, identity digest, customs key or stamp.
using Digest = std::array<std::uint8_t, 32>;

inline constexpr Digest kZeroDigest{};

/// Every domain error raised by the library carries one of these codes.
enum class Errc {
  // codec
  TruncatedInput,
  UnknownCriticalType,
  NonCanonicalEncoding,
  LengthMismatch,
  InvariantViolation,
  UnknownAlgorithm,
  // identifier
  NoValidIdentifier,
  NoTranslation,
  BadIdentifierSyntax,
  // forwarding
  NoRoute,
  // customs
  RevokedKey,
  ExpiredKey,
  UnknownSubject,
  // identity
  DuplicateBiometric,
  BannedIdentity,
  UnknownIdentity,
  // registry
  BadSignature,
  Unauthorized,
  Duplicate,
  NotFound,
  NoQuorum,
  InvalidProposal,
  // simnet
  ScenarioInvalid,
  UnknownAttackKind,
  // shared
  Io,
};

std::string_view to_string(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what);
  explicit Error(Errc code);

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

std::string to_hex(ByteView bytes);
/// Accepts upper or lower case; throws Error(BadIdentifierSyntax) on odd length or non-hex.
Bytes from_hex(std::string_view hex);
Digest digest_from_hex(std::string_view hex);

inline ByteView as_view(const Digest& d) noexcept { return {d.data(), d.size()}; }
inline ByteView as_view(const Bytes& b) noexcept { return {b.data(), b.size()}; }

template <std::size_t N>
std::array<std::uint8_t, N> to_array(ByteView bytes) {
  if (bytes.size() != N) {
    throw Error(Errc::LengthMismatch, "expected " + std::to_string(N) + " octets, got " +
                                          std::to_string(bytes.size()));
  }
  std::array<std::uint8_t, N> out{};
  std::copy(bytes.begin(), bytes.end(), out.begin());
  return out;
}

void put_be64(Bytes& out, std::uint64_t v);
std::uint64_t get_be64(ByteView in);

}  // namespace cogmin
