#include "cogmin/identity.hpp"

#include <algorithm>
#include <istream>
#include <ostream>

namespace cogmin::identity {

Digest identity_digest(const crypto::PublicKey& key) { return crypto::sha256(ByteView(key)); }

Enrollment generate_identity(const RegistryView& view, LedgerSink& sink,
                             const Digest& real_info_digest, const Digest& biometric_digest,
                             std::string domain, std::optional<crypto::Seed> seed) {
  if (view.biometric_banned(biometric_digest)) {
    throw Error(Errc::DuplicateBiometric, "biometric digest belongs to a banned identity");
  }
  auto kp = seed ? crypto::keypair_from_seed(*seed) : crypto::generate_keypair();
  IdentityRecord rec{identity_digest(kp.public_key), kp.public_key, real_info_digest,
                     biometric_digest, Status::Active, std::move(domain)};
  sink.submit_identity(rec);
  return {std::move(rec), std::move(kp.secret)};
}

MinPacket sign_packet(MinPacket pkt, const crypto::SecretKey& key, const RegistryView* view) {
  auto signer = identity_digest(key.public_key());
  if (view != nullptr) {
    auto rec = view->find_identity(signer);
    if (rec && rec->status == Status::Banned) {
      throw Error(Errc::BannedIdentity, "identity " + to_hex(signer) + " is banned");
    }
  }
  SignatureBlock block;
  block.algorithm = tlv::kAlgEd25519;
  block.signer_id = signer;
  if (pkt.signature) block.extensions = pkt.signature->extensions;
  auto sig = key.sign(signed_portion(pkt));
  block.signature.assign(sig.begin(), sig.end());
  pkt.signature = std::move(block);
  return pkt;
}

std::string_view to_string(SigVerdict v) {
  switch (v) {
    case SigVerdict::Accept: return "accept";
    case SigVerdict::MissingSignature: return "MissingSignature";
    case SigVerdict::UnknownSigner: return "UnknownSigner";
    case SigVerdict::Banned: return "Banned";
    case SigVerdict::BadSignature: return "BadSignature";
  }
  return "?";
}

SigVerdict verify_packet(const MinPacket& pkt, const RegistryView& view) {
  if (!pkt.signature) return SigVerdict::MissingSignature;
  const auto& sig = *pkt.signature;
  auto rec = view.find_identity(sig.signer_id);
  if (!rec) return SigVerdict::UnknownSigner;
  if (rec->status == Status::Banned) return SigVerdict::Banned;
  if (sig.algorithm != tlv::kAlgEd25519 ||
      !crypto::verify(rec->public_key, signed_portion(pkt), sig.signature)) {
    return SigVerdict::BadSignature;
  }
  return SigVerdict::Accept;
}

void ban_identity(const RegistryView& view, LedgerSink& sink, const Digest& id) {
  if (!view.find_identity(id)) throw Error(Errc::UnknownIdentity, to_hex(id));
  sink.submit_ban(id);
}

std::string_view to_string(AuditVerdict v) {
  switch (v) {
    case AuditVerdict::Forwarded: return "Forwarded";
    case AuditVerdict::DroppedBadSig: return "DroppedBadSig";
    case AuditVerdict::DroppedBanned: return "DroppedBanned";
    case AuditVerdict::DroppedCustoms: return "DroppedCustoms";
  }
  return "?";
}

namespace {
constexpr std::uint8_t kAuditRecordType = 0x6E;
}

Bytes AuditRecord::encode() const {
  Bytes inner;
  tlv::write_uint(inner, seq);
  tlv::write_uint(inner, time);
  tlv::write_bytes(inner, as_view(signer));
  tlv::write_bytes(inner, as_view(packet_digest));
  tlv::write_text(inner, router);
  tlv::write_uint(inner, static_cast<std::uint64_t>(verdict));
  tlv::write_bytes(inner, as_view(prev_hash));
  Bytes out;
  tlv::write_element(out, kAuditRecordType, inner);
  return out;
}

AuditRecord AuditRecord::decode(ByteView bytes) {
  tlv::Reader top(bytes, Errc::TruncatedInput);
  auto e = top.next();
  if (!top.done()) throw Error(Errc::LengthMismatch, "trailing octets after audit record");
  if (e.type != kAuditRecordType) throw Error(Errc::UnknownCriticalType, "not an audit record");
  tlv::FieldReader f(e.value);
  AuditRecord r;
  r.seq = f.uint();
  r.time = f.uint();
  r.signer = f.digest();
  r.packet_digest = f.digest();
  r.router = f.text();
  auto verdict = f.uint();
  if (verdict > 3) throw Error(Errc::InvariantViolation, "unknown audit verdict");
  r.verdict = static_cast<AuditVerdict>(verdict);
  r.prev_hash = f.digest();
  f.finish();
  return r;
}

Digest AuditRecord::hash() const { return crypto::sha256(encode()); }

const AuditRecord& AuditLog::append(std::uint64_t time, const Digest& signer,
                                    const Digest& packet_digest, AuditVerdict verdict) {
  AuditRecord r;
  r.seq = records_.size();
  r.time = time;
  r.signer = signer;
  r.packet_digest = packet_digest;
  r.router = router_;
  r.verdict = verdict;
  r.prev_hash = records_.empty() ? kZeroDigest : records_.back().hash();
  records_.push_back(std::move(r));
  return records_.back();
}

Digest AuditLog::head_hash() const { return records_.empty() ? kZeroDigest : records_.back().hash(); }

std::optional<std::size_t> AuditLog::first_broken(std::span<const AuditRecord> records) {
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    Digest expected_prev = i == 0 ? kZeroDigest : records[i - 1].hash();
    if (r.seq != i || r.prev_hash != expected_prev || r.router != records[0].router) return i;
  }
  return std::nullopt;
}

void AuditLog::write(std::ostream& out) const {
  for (const auto& r : records_) {
    auto bytes = r.encode();
    auto n = static_cast<std::uint32_t>(bytes.size());
    char len[4] = {static_cast<char>(n >> 24), static_cast<char>(n >> 16), static_cast<char>(n >> 8),
                   static_cast<char>(n)};
    out.write(len, 4);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  }
}

std::vector<AuditRecord> AuditLog::read(std::istream& in) {
  std::vector<AuditRecord> out;
  for (;;) {
    unsigned char len[4];
    in.read(reinterpret_cast<char*>(len), 4);
    if (in.gcount() == 0) break;
    if (in.gcount() != 4) throw Error(Errc::TruncatedInput, "truncated audit length prefix");
    std::uint32_t n = (std::uint32_t{len[0]} << 24) | (std::uint32_t{len[1]} << 16) |
                      (std::uint32_t{len[2]} << 8) | len[3];
    Bytes buf(n);
    in.read(reinterpret_cast<char*>(buf.data()), n);
    if (static_cast<std::uint32_t>(in.gcount()) != n) {
      throw Error(Errc::TruncatedInput, "truncated audit record");
    }
    out.push_back(AuditRecord::decode(buf));
  }
  return out;
}

std::vector<AuditRecord> trace(std::span<const AuditRecord> records, const Digest& packet_digest) {
  std::vector<AuditRecord> out;
  for (const auto& r : records) {
    if (r.packet_digest == packet_digest) out.push_back(r);
  }
  std::sort(out.begin(), out.end(), [](const AuditRecord& a, const AuditRecord& b) {
    return a.router != b.router ? a.router < b.router : a.seq < b.seq;
  });
  return out;
}

}  // namespace cogmin::identity
