#include "cogmin/common.hpp"

#include <algorithm>

namespace cogmin {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::TruncatedInput: return "TruncatedInput";
    case Errc::UnknownCriticalType: return "UnknownCriticalType";
    case Errc::NonCanonicalEncoding: return "NonCanonicalEncoding";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::InvariantViolation: return "InvariantViolation";
    case Errc::UnknownAlgorithm: return "UnknownAlgorithm";
    case Errc::NoValidIdentifier: return "NoValidIdentifier";
    case Errc::NoTranslation: return "NoTranslation";
    case Errc::BadIdentifierSyntax: return "BadIdentifierSyntax";
    case Errc::NoRoute: return "NoRoute";
    case Errc::RevokedKey: return "RevokedKey";
    case Errc::ExpiredKey: return "ExpiredKey";
    case Errc::UnknownSubject: return "UnknownSubject";
    case Errc::DuplicateBiometric: return "DuplicateBiometric";
    case Errc::BannedIdentity: return "BannedIdentity";
    case Errc::UnknownIdentity: return "UnknownIdentity";
    case Errc::BadSignature: return "BadSignature";
    case Errc::Unauthorized: return "Unauthorized";
    case Errc::Duplicate: return "Duplicate";
    case Errc::NotFound: return "NotFound";
    case Errc::NoQuorum: return "NoQuorum";
    case Errc::InvalidProposal: return "InvalidProposal";
    case Errc::ScenarioInvalid: return "ScenarioInvalid";
    case Errc::UnknownAttackKind: return "UnknownAttackKind";
    case Errc::Io: return "Io";
  }
  return "Unknown";
}

Error::Error(Errc code, const std::string& what)
    : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

Error::Error(Errc code) : std::runtime_error(std::string(to_string(code))), code_(code) {}

std::string to_hex(ByteView bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (auto b : bytes) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 0x0f]);
  }
  return out;
}

namespace {
int nibble(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}
}  // namespace

Bytes from_hex(std::string_view hex) {
  if (hex.size() % 2 != 0) throw Error(Errc::BadIdentifierSyntax, "odd-length hex string");
  Bytes out;
  out.reserve(hex.size() / 2);
  for (std::size_t i = 0; i < hex.size(); i += 2) {
    int hi = nibble(hex[i]);
    int lo = nibble(hex[i + 1]);
    if (hi < 0 || lo < 0) throw Error(Errc::BadIdentifierSyntax, "invalid hex digit");
    out.push_back(static_cast<std::uint8_t>((hi << 4) | lo));
  }
  return out;
}

Digest digest_from_hex(std::string_view hex) {
  auto raw = from_hex(hex);
  if (raw.size() != 32) throw Error(Errc::BadIdentifierSyntax, "expected 64 hex characters");
  return to_array<32>(raw);
}

void put_be64(Bytes& out, std::uint64_t v) {
  for (int shift = 56; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
}

std::uint64_t get_be64(ByteView in) {
  if (in.size() != 8) throw Error(Errc::LengthMismatch, "expected 8-octet integer");
  std::uint64_t v = 0;
  for (auto b : in) v = (v << 8) | b;
  return v;
}

}  // namespace cogmin
