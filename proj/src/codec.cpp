#include "cogmin/codec.hpp"

#include "cogmin/crypto.hpp"

#include <algorithm>

namespace cogmin {

namespace tlv {

void write_length(Bytes& out, std::uint64_t length) {
  auto put = [&](std::uint64_t v, int octets) {
    for (int i = octets - 1; i >= 0; --i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  };
  if (length < 253) {
    out.push_back(static_cast<std::uint8_t>(length));
  } else if (length <= 0xffff) {
    out.push_back(253);
    put(length, 2);
  } else if (length <= 0xffffffffull) {
    out.push_back(254);
    put(length, 4);
  } else {
    out.push_back(255);
    put(length, 8);
  }
}

void write_element(Bytes& out, std::uint8_t type, ByteView value) {
  out.push_back(type);
  write_length(out, value.size());
  out.insert(out.end(), value.begin(), value.end());
}

void write_element(Bytes& out, std::uint8_t type, std::uint64_t be_value, std::size_t width) {
  out.push_back(type);
  write_length(out, width);
  for (std::size_t i = width; i-- > 0;) out.push_back(static_cast<std::uint8_t>(be_value >> (8 * i)));
}

std::uint64_t Reader::read_length() {
  if (pos_ >= buf_.size()) throw Error(overrun_, "missing length octet");
  std::uint8_t first = buf_[pos_++];
  if (first < 253) return first;
  std::size_t octets = first == 253 ? 2 : first == 254 ? 4 : 8;
  if (remaining() < octets) throw Error(overrun_, "truncated length field");
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < octets; ++i) v = (v << 8) | buf_[pos_++];
  std::uint64_t minimum = first == 253 ? 253 : first == 254 ? 0x10000ull : 0x100000000ull;
  if (v < minimum) throw Error(Errc::NonCanonicalEncoding, "length not in shortest form");
  return v;
}

ElementView Reader::next() {
  if (done()) throw Error(overrun_, "expected an element");
  std::uint8_t type = buf_[pos_++];
  std::uint64_t len = read_length();
  if (len > remaining()) throw Error(overrun_, "element value overruns buffer");
  ElementView e{type, buf_.subspan(pos_, static_cast<std::size_t>(len))};
  pos_ += static_cast<std::size_t>(len);
  return e;
}

void write_uint(Bytes& out, std::uint64_t v) { write_element(out, kFieldUint, v, 8); }
void write_bytes(Bytes& out, ByteView v) { write_element(out, kFieldBytes, v); }
void write_text(Bytes& out, std::string_view v) {
  write_element(out, kFieldText,
                ByteView(reinterpret_cast<const std::uint8_t*>(v.data()), v.size()));
}

ElementView FieldReader::element(std::uint8_t expected_type) {
  auto e = reader_.next();
  if (e.type != expected_type) {
    throw Error(Errc::NonCanonicalEncoding, "unexpected field type 0x" + to_hex(ByteView(&e.type, 1)));
  }
  return e;
}

std::uint64_t FieldReader::uint() {
  auto e = element(kFieldUint);
  if (e.value.size() != 8) throw Error(Errc::LengthMismatch, "integer field must be 8 octets");
  return get_be64(e.value);
}

ByteView FieldReader::bytes() { return element(kFieldBytes).value; }

Digest FieldReader::digest() {
  auto v = bytes();
  if (v.size() != 32) throw Error(Errc::LengthMismatch, "digest field must be 32 octets");
  return to_array<32>(v);
}

std::string FieldReader::text() {
  auto v = element(kFieldText).value;
  return std::string(v.begin(), v.end());
}

void FieldReader::finish() const {
  if (!reader_.done()) throw Error(Errc::LengthMismatch, "unexpected trailing fields");
}

}  // namespace tlv

std::string_view to_string(PacketKind kind) {
  switch (kind) {
    case PacketKind::Interest: return "Interest";
    case PacketKind::Data: return "Data";
    case PacketKind::GPPkt: return "GPPkt";
  }
  return "?";
}

namespace {

bool is_known_code(std::uint8_t t) {
  switch (t) {
    case tlv::kInterest: case tlv::kData: case tlv::kGpPkt:
    case tlv::kIdentifierArea: case tlv::kSignatureArea: case tlv::kReadOnlyArea:
    case tlv::kVariableArea: case tlv::kIdentifier: case tlv::kIdType: case tlv::kIdValue:
    case tlv::kSigAlgorithm: case tlv::kSignerId: case tlv::kSignatureValue:
    case tlv::kTimestamp: case tlv::kCyberVisa: case tlv::kCyberPass: case tlv::kNonce:
    case tlv::kPayload: case tlv::kHopLimit:
      return true;
    default:
      return false;
  }
}

[[noreturn]] void reject_code(std::uint8_t t, std::string_view where) {
  if (is_known_code(t)) {
    throw Error(Errc::NonCanonicalEncoding, "misplaced or repeated element 0x" +
                                                to_hex(ByteView(&t, 1)) + " in " + std::string(where));
  }
  throw Error(Errc::UnknownCriticalType,
              "unknown critical element 0x" + to_hex(ByteView(&t, 1)) + " in " + std::string(where));
}

/// Splits an area into its schema fields (which must appear in schema order,
/// at most once) and trailing non-critical extensions.
template <std::size_t N>
std::array<std::optional<ByteView>, N> split_area(ByteView value,
                                                  const std::array<std::uint8_t, N>& schema,
                                                  std::vector<tlv::Element>& extensions,
                                                  std::string_view where) {
  std::array<std::optional<ByteView>, N> fields{};
  std::size_t next_slot = 0;
  bool in_extensions = false;
  tlv::Reader r(value);
  while (!r.done()) {
    auto e = r.next();
    if (e.type >= tlv::kFirstNonCritical) {
      in_extensions = true;
      extensions.push_back({e.type, Bytes(e.value.begin(), e.value.end())});
      continue;
    }
    auto it = std::find(schema.begin() + static_cast<std::ptrdiff_t>(next_slot), schema.end(), e.type);
    if (in_extensions || it == schema.end()) reject_code(e.type, where);
    auto slot = static_cast<std::size_t>(it - schema.begin());
    fields[slot] = e.value;
    next_slot = slot + 1;
  }
  return fields;
}

ByteView require(const std::optional<ByteView>& f, std::string_view what) {
  if (!f) throw Error(Errc::InvariantViolation, "missing " + std::string(what));
  return *f;
}

ByteView fixed(ByteView v, std::size_t width, std::string_view what) {
  if (v.size() != width) {
    throw Error(Errc::LengthMismatch, std::string(what) + " must be " + std::to_string(width) +
                                          " octets");
  }
  return v;
}

void write_extensions(Bytes& out, const std::vector<tlv::Element>& ext) {
  for (const auto& e : ext) tlv::write_element(out, e.type, e.value);
}

Identifier decode_identifier_value(ByteView value) {
  tlv::Reader r(value);
  if (r.done()) throw Error(Errc::InvariantViolation, "empty identifier");
  auto type_el = r.next();
  if (type_el.type != tlv::kIdType) reject_code(type_el.type, "identifier");
  fixed(type_el.value, 1, "identifier type");
  std::vector<Bytes> comps;
  while (!r.done()) {
    auto c = r.next();
    if (c.type != tlv::kIdValue) reject_code(c.type, "identifier");
    comps.emplace_back(c.value.begin(), c.value.end());
  }
  return Identifier(static_cast<IdType>(type_el.value[0]), std::move(comps));
}

void encode_identifier_into(Bytes& out, const Identifier& id) {
  Bytes inner;
  std::uint8_t t = static_cast<std::uint8_t>(id.type());
  tlv::write_element(inner, tlv::kIdType, ByteView(&t, 1));
  for (const auto& c : id.components()) tlv::write_element(inner, tlv::kIdValue, c);
  tlv::write_element(out, tlv::kIdentifier, inner);
}

Bytes identifier_area(const MinPacket& p) {
  Bytes inner;
  for (const auto& id : p.identifiers) encode_identifier_into(inner, id);
  Bytes out;
  tlv::write_element(out, tlv::kIdentifierArea, inner);
  return out;
}

void check_extensions(const std::vector<tlv::Element>& ext) {
  for (const auto& e : ext) {
    if (e.type < tlv::kFirstNonCritical) {
      throw Error(Errc::InvariantViolation, "extension elements must use codes >= 0x80");
    }
  }
}

Bytes readonly_area(const ReadOnlyArea& ro, bool signing_view) {
  Bytes inner;
  if (!signing_view) {
    tlv::write_element(inner, tlv::kTimestamp, ro.timestamp, 8);
    if (ro.cyber_visa) tlv::write_element(inner, tlv::kCyberVisa, as_view(*ro.cyber_visa));
    if (ro.cyber_pass) tlv::write_element(inner, tlv::kCyberPass, as_view(*ro.cyber_pass));
  }
  tlv::write_element(inner, tlv::kNonce, ByteView(ro.nonce));
  write_extensions(inner, ro.extensions);
  Bytes out;
  tlv::write_element(out, tlv::kReadOnlyArea, inner);
  return out;
}

Bytes variable_area(const VariableArea& va, bool signing_view) {
  Bytes inner;
  tlv::write_element(inner, tlv::kPayload, va.payload);
  if (!signing_view) tlv::write_element(inner, tlv::kHopLimit, va.hop_limit, 1);
  write_extensions(inner, va.extensions);
  Bytes out;
  tlv::write_element(out, tlv::kVariableArea, inner);
  return out;
}

}  // namespace

Identifier decode_identifier(ByteView element_value) { return decode_identifier_value(element_value); }

Bytes encode_identifier(const Identifier& id) {
  id.validate();
  Bytes out;
  encode_identifier_into(out, id);
  return out;
}

void check_invariants(const MinPacket& p) {
  switch (p.kind) {
    case PacketKind::Interest: case PacketKind::Data: case PacketKind::GPPkt: break;
    default: throw Error(Errc::InvariantViolation, "unknown packet kind");
  }
  if (p.identifiers.empty()) throw Error(Errc::InvariantViolation, "identifier area is empty");
  for (const auto& id : p.identifiers) id.validate();
  if (p.kind != PacketKind::Interest && !p.signature) {
    throw Error(Errc::InvariantViolation,
                std::string(to_string(p.kind)) + " packet requires a signature area");
  }
  if (p.signature && p.signature->algorithm != tlv::kAlgEd25519) {
    throw Error(Errc::UnknownAlgorithm, "signature algorithm not supported");
  }
  if (p.signature && p.signature->signature.size() != 64) {
    throw Error(Errc::InvariantViolation, "Ed25519 signature must be 64 octets");
  }
  if (p.readonly.cyber_pass && !p.readonly.cyber_visa) {
    throw Error(Errc::InvariantViolation, "CyberPass present without CyberVisa");
  }
  check_extensions(p.readonly.extensions);
  check_extensions(p.variable.extensions);
  check_extensions(p.extensions);
  if (p.signature) check_extensions(p.signature->extensions);
}

Bytes encode_packet(const MinPacket& p) {
  check_invariants(p);
  Bytes body = identifier_area(p);
  if (p.signature) {
    const auto& s = *p.signature;
    Bytes inner;
    tlv::write_element(inner, tlv::kSigAlgorithm, s.algorithm, 1);
    tlv::write_element(inner, tlv::kSignerId, as_view(s.signer_id));
    tlv::write_element(inner, tlv::kSignatureValue, s.signature);
    write_extensions(inner, s.extensions);
    tlv::write_element(body, tlv::kSignatureArea, inner);
  }
  auto ro = readonly_area(p.readonly, false);
  body.insert(body.end(), ro.begin(), ro.end());
  auto va = variable_area(p.variable, false);
  body.insert(body.end(), va.begin(), va.end());
  write_extensions(body, p.extensions);

  Bytes out;
  tlv::write_element(out, static_cast<std::uint8_t>(p.kind), body);
  return out;
}

MinPacket decode_packet(ByteView bytes) {
  if (bytes.empty()) throw Error(Errc::TruncatedInput, "empty input");
  tlv::Reader top(bytes, Errc::TruncatedInput);
  auto outer = top.next();
  if (!top.done()) throw Error(Errc::LengthMismatch, "trailing octets after packet");
  if (outer.type != tlv::kInterest && outer.type != tlv::kData && outer.type != tlv::kGpPkt) {
    throw Error(Errc::UnknownCriticalType, "not a packet type");
  }

  MinPacket p;
  p.kind = static_cast<PacketKind>(outer.type);

  static constexpr std::array<std::uint8_t, 4> kAreas{tlv::kIdentifierArea, tlv::kSignatureArea,
                                                      tlv::kReadOnlyArea, tlv::kVariableArea};
  auto areas = split_area(outer.value, kAreas, p.extensions, "packet");

  {
    tlv::Reader r(require(areas[0], "identifier area"));
    while (!r.done()) {
      auto e = r.next();
      if (e.type != tlv::kIdentifier) reject_code(e.type, "identifier area");
      p.identifiers.push_back(decode_identifier_value(e.value));
    }
  }

  if (areas[1]) {
    SignatureBlock s;
    static constexpr std::array<std::uint8_t, 3> kSig{tlv::kSigAlgorithm, tlv::kSignerId,
                                                      tlv::kSignatureValue};
    auto f = split_area(*areas[1], kSig, s.extensions, "signature area");
    s.algorithm = fixed(require(f[0], "signature algorithm"), 1, "signature algorithm")[0];
    if (s.algorithm != tlv::kAlgEd25519) throw Error(Errc::UnknownAlgorithm, "signature algorithm");
    s.signer_id = to_array<32>(fixed(require(f[1], "signer id"), 32, "signer id"));
    auto sig = fixed(require(f[2], "signature"), 64, "Ed25519 signature");
    s.signature.assign(sig.begin(), sig.end());
    p.signature = std::move(s);
  }

  {
    static constexpr std::array<std::uint8_t, 4> kRo{tlv::kTimestamp, tlv::kCyberVisa,
                                                     tlv::kCyberPass, tlv::kNonce};
    auto f = split_area(require(areas[2], "read-only area"), kRo, p.readonly.extensions,
                        "read-only area");
    p.readonly.timestamp = get_be64(fixed(require(f[0], "timestamp"), 8, "timestamp"));
    if (f[1]) p.readonly.cyber_visa = to_array<32>(fixed(*f[1], 32, "CyberVisa"));
    if (f[2]) p.readonly.cyber_pass = to_array<32>(fixed(*f[2], 32, "CyberPass"));
    p.readonly.nonce = to_array<8>(fixed(require(f[3], "nonce"), 8, "nonce"));
  }

  {
    static constexpr std::array<std::uint8_t, 2> kVa{tlv::kPayload, tlv::kHopLimit};
    auto f = split_area(require(areas[3], "variable area"), kVa, p.variable.extensions,
                        "variable area");
    auto payload = require(f[0], "payload");
    p.variable.payload.assign(payload.begin(), payload.end());
    p.variable.hop_limit = fixed(require(f[1], "hop limit"), 1, "hop limit")[0];
  }

  check_invariants(p);
  return p;
}

Bytes signed_portion(const MinPacket& p) {
  Bytes out{static_cast<std::uint8_t>(p.kind)};
  auto ids = identifier_area(p);
  out.insert(out.end(), ids.begin(), ids.end());
  auto ro = readonly_area(p.readonly, true);
  out.insert(out.end(), ro.begin(), ro.end());
  auto va = variable_area(p.variable, true);
  out.insert(out.end(), va.begin(), va.end());
  return out;
}

Digest packet_digest(const MinPacket& p) {
  auto portion = signed_portion(p);
  if (!p.signature) return crypto::sha256(portion);
  return crypto::sha256({as_view(portion), as_view(p.signature->signature)});
}

}  // namespace cogmin
