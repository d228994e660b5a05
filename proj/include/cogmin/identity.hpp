#pragma once

#include "cogmin/codec.hpp"
#include "cogmin/crypto.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace cogmin::identity {

enum class Status : std::uint8_t { Active = 0, Banned = 1 };

struct IdentityRecord {
  Digest id_digest{};  // SHA-256 of public_key
  crypto::PublicKey public_key{};
  Digest real_info_digest{};
  Digest biometric_digest{};
  Status status = Status::Active;
  std::string domain;
  friend bool operator==(const IdentityRecord&, const IdentityRecord&) = default;
};

Digest identity_digest(const crypto::PublicKey& key);

/// Read access to committed identity state (a registry node).
class RegistryView {
 public:
  virtual ~RegistryView() = default;
  virtual std::optional<IdentityRecord> find_identity(const Digest& id) const = 0;
  virtual bool biometric_banned(const Digest& biometric) const = 0;
  virtual bool visa_revoked(const Digest& subject, std::string_view domain) const = 0;
};

/// Where identity state changes go to be recorded (the registry ledger).
class LedgerSink {
 public:
  virtual ~LedgerSink() = default;
  virtual void submit_identity(const IdentityRecord& record) = 0;
  virtual void submit_ban(const Digest& id) = 0;
};

struct Enrollment {
  IdentityRecord record;
  crypto::SecretKey secret;
};

/// Fresh keypair bound to the supplied digests, submitted to `sink`.
/// Throws Error(DuplicateBiometric) when the biometric belongs to a banned identity.
/// `seed` makes the keypair reproducible (simulation); otherwise OS entropy is used.
Enrollment generate_identity(const RegistryView& view, LedgerSink& sink,
                             const Digest& real_info_digest, const Digest& biometric_digest,
                             std::string domain, std::optional<crypto::Seed> seed = {});

/// Fills the signature area. With a view, refuses (BannedIdentity) to sign
/// for an identity the view reports banned.
MinPacket sign_packet(MinPacket pkt, const crypto::SecretKey& key,
                      const RegistryView* view = nullptr);

enum class SigVerdict { Accept, MissingSignature, UnknownSigner, Banned, BadSignature };

std::string_view to_string(SigVerdict v);

/// Status is checked before the signature: a banned signer is reported as
/// Banned even when the signature is valid.
SigVerdict verify_packet(const MinPacket& pkt, const RegistryView& view);

/// Throws Error(UnknownIdentity) if `id` is not registered.
void ban_identity(const RegistryView& view, LedgerSink& sink, const Digest& id);

enum class AuditVerdict : std::uint8_t {
  Forwarded = 0,
  DroppedBadSig = 1,
  DroppedBanned = 2,
  DroppedCustoms = 3,
};

std::string_view to_string(AuditVerdict v);

struct AuditRecord {
  std::uint64_t seq = 0;
  std::uint64_t time = 0;  // UNIX seconds
  Digest signer{};         // all-zero when the claimed signer could not be authenticated
  Digest packet_digest{};
  std::string router;
  AuditVerdict verdict = AuditVerdict::Forwarded;
  Digest prev_hash{};  // hash of the predecessor record; zero for the first

  Bytes encode() const;
  static AuditRecord decode(ByteView bytes);
  Digest hash() const;
  friend bool operator==(const AuditRecord&, const AuditRecord&) = default;
};

/// Append-only, hash-chained audit log of one router.
class AuditLog {
 public:
  explicit AuditLog(std::string router) : router_(std::move(router)) {}

  const AuditRecord& append(std::uint64_t time, const Digest& signer, const Digest& packet_digest,
                            AuditVerdict verdict);

  const std::string& router() const noexcept { return router_; }
  const std::vector<AuditRecord>& records() const noexcept { return records_; }
  Digest head_hash() const;

  /// Index of the first record whose seq, router or prev_hash link is wrong.
  static std::optional<std::size_t> first_broken(std::span<const AuditRecord> records);

  /// Length-prefixed (4-octet big-endian) canonical records.
  void write(std::ostream& out) const;
  static std::vector<AuditRecord> read(std::istream& in);

 private:
  std::string router_;
  std::vector<AuditRecord> records_;
};

/// Records for `packet_digest` across all logs, ordered by (router, seq).
std::vector<AuditRecord> trace(std::span<const AuditRecord> records, const Digest& packet_digest);

}  // namespace cogmin::identity
