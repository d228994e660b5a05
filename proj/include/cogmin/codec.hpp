#pragma once

#include "cogmin/common.hpp"
#include "cogmin/identifier.hpp"

#include <optional>
#include <vector>

namespace cogmin {

/// Wire type codes. Codes >= 0x80 are non-critical: preserved if unknown.
namespace tlv {
inline constexpr std::uint8_t kInterest = 0x05;
inline constexpr std::uint8_t kData = 0x06;
inline constexpr std::uint8_t kGpPkt = 0x07;

inline constexpr std::uint8_t kIdentifierArea = 0x10;
inline constexpr std::uint8_t kSignatureArea = 0x11;
inline constexpr std::uint8_t kReadOnlyArea = 0x12;
inline constexpr std::uint8_t kVariableArea = 0x13;

inline constexpr std::uint8_t kIdentifier = 0x20;
inline constexpr std::uint8_t kIdType = 0x21;
inline constexpr std::uint8_t kIdValue = 0x22;

inline constexpr std::uint8_t kSigAlgorithm = 0x30;
inline constexpr std::uint8_t kSignerId = 0x31;
inline constexpr std::uint8_t kSignatureValue = 0x32;

inline constexpr std::uint8_t kTimestamp = 0x40;
inline constexpr std::uint8_t kCyberVisa = 0x41;
inline constexpr std::uint8_t kCyberPass = 0x42;
inline constexpr std::uint8_t kNonce = 0x43;

inline constexpr std::uint8_t kPayload = 0x50;
inline constexpr std::uint8_t kHopLimit = 0x51;

inline constexpr std::uint8_t kFirstNonCritical = 0x80;

/// Signature algorithm 0x01: Ed25519 over the signed portion.
inline constexpr std::uint8_t kAlgEd25519 = 0x01;

/// An element whose value has not been interpreted.
struct Element {
  std::uint8_t type = 0;
  Bytes value;
  friend bool operator==(const Element&, const Element&) = default;
};

/// Borrowed view of one element inside a larger buffer.
struct ElementView {
  std::uint8_t type = 0;
  ByteView value;
};

/// Length prefix: < 253 in one octet; 253, 254, 255 announce a 2-, 4- or
/// 8-octet big-endian length. Only the shortest form is canonical.
void write_length(Bytes& out, std::uint64_t length);
void write_element(Bytes& out, std::uint8_t type, ByteView value);
void write_element(Bytes& out, std::uint8_t type, std::uint64_t be_value, std::size_t width);

/// Sequential reader over a buffer of concatenated elements. Running past the
/// end raises `overrun` (TruncatedInput at top level, LengthMismatch nested).
class Reader {
 public:
  explicit Reader(ByteView buffer, Errc overrun = Errc::LengthMismatch)
      : buf_(buffer), overrun_(overrun) {}

  bool done() const noexcept { return pos_ == buf_.size(); }
  std::size_t remaining() const noexcept { return buf_.size() - pos_; }
  /// Type octet of the next element; requires !done().
  std::uint8_t peek_type() const { return buf_[pos_]; }
  ElementView next();

 private:
  std::uint64_t read_length();

  ByteView buf_;
  std::size_t pos_ = 0;
  Errc overrun_;
};

/// Positional record fields used by registry messages and audit records.
inline constexpr std::uint8_t kFieldUint = 0x69;   // 8-octet big-endian
inline constexpr std::uint8_t kFieldBytes = 0x6A;
inline constexpr std::uint8_t kFieldText = 0x6B;

void write_uint(Bytes& out, std::uint64_t v);
void write_bytes(Bytes& out, ByteView v);
void write_text(Bytes& out, std::string_view v);

/// Reads positional fields in order; any deviation is NonCanonicalEncoding.
class FieldReader {
 public:
  explicit FieldReader(ByteView value) : reader_(value) {}
  std::uint64_t uint();
  ByteView bytes();
  Digest digest();
  std::string text();
  ElementView element(std::uint8_t expected_type);
  bool done() const noexcept { return reader_.done(); }
  bool next_is(std::uint8_t type) const { return !reader_.done() && reader_.peek_type() == type; }
  /// Throws LengthMismatch if fields remain.
  void finish() const;

 private:
  Reader reader_;
};

}  // namespace tlv

enum class PacketKind : std::uint8_t {
  Interest = tlv::kInterest,
  Data = tlv::kData,
  GPPkt = tlv::kGpPkt,
};

std::string_view to_string(PacketKind kind);

using Nonce = std::array<std::uint8_t, 8>;

struct SignatureBlock {
  std::uint8_t algorithm = tlv::kAlgEd25519;
  Digest signer_id{};
  Bytes signature;
  std::vector<tlv::Element> extensions;
  friend bool operator==(const SignatureBlock&, const SignatureBlock&) = default;
};

struct ReadOnlyArea {
  std::uint64_t timestamp = 0;  // UNIX seconds
  std::optional<Digest> cyber_visa;
  std::optional<Digest> cyber_pass;
  Nonce nonce{};
  std::vector<tlv::Element> extensions;
  friend bool operator==(const ReadOnlyArea&, const ReadOnlyArea&) = default;
};

struct VariableArea {
  Bytes payload;
  std::uint8_t hop_limit = 64;
  std::vector<tlv::Element> extensions;
  friend bool operator==(const VariableArea&, const VariableArea&) = default;
};

/// One network-layer datagram. Areas are serialised in the fixed order
/// identifier, signature, read-only, variable; unknown non-critical elements
/// trail the known fields of the area (or packet) that carried them.
struct MinPacket {
  PacketKind kind = PacketKind::Interest;
  std::vector<Identifier> identifiers;
  std::optional<SignatureBlock> signature;
  ReadOnlyArea readonly;
  VariableArea variable;
  std::vector<tlv::Element> extensions;

  /// First identifier; PIT and CS key on it.
  const Identifier& name() const { return identifiers.at(0); }

  friend bool operator==(const MinPacket&, const MinPacket&) = default;
};

/// Throws Error(InvariantViolation) if `p` cannot be encoded.
void check_invariants(const MinPacket& p);

Bytes encode_packet(const MinPacket& p);

/// Total over arbitrary input: returns the packet whose canonical encoding is
/// exactly `bytes` or throws Error with one of TruncatedInput,
/// UnknownCriticalType, NonCanonicalEncoding, LengthMismatch,
/// UnknownAlgorithm, InvariantViolation.
MinPacket decode_packet(ByteView bytes);

/// One 0x20 identifier element (type, length and value).
Bytes encode_identifier(const Identifier& id);
/// Inverse of encode_identifier given the element's value octets.
Identifier decode_identifier(ByteView element_value);

/// Octets covered by the packet signature: the kind octet, the identifier
/// area, the read-only area reduced to its nonce and extensions, and the
/// variable area reduced to its payload and extensions. Fields rewritten in
/// transit (timestamp, customs stamps, hop limit) are excluded.
Bytes signed_portion(const MinPacket& p);

/// Hop-invariant packet digest: SHA-256 of the signed portion followed by
/// the signature value (if any).
Digest packet_digest(const MinPacket& p);

}  // namespace cogmin
