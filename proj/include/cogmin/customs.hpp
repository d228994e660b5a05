#pragma once

#include "cogmin/codec.hpp"
#include "cogmin/common.hpp"

#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>

/// Cyberspace customs: time-windowed visa and passport stamps that border
/// routers attach to and check on cross-domain packets.
namespace cogmin::customs {

/// Width of one time window in seconds (low four bits of UNIX time cleared).
inline constexpr std::uint64_t kWindowSeconds = 16;
inline constexpr int kDefaultSkewWindows = 1;

struct CyberVisaKey {
  Digest cvk{};
  Digest subject{};  // identity digest of the visa holder
  std::string issuing_domain;
  std::uint64_t expiry = 0;  // valid while now < expiry
  bool revoked = false;
};

/// One key per unordered pair of domains.
struct CyberPassKey {
  Digest cpk{};
  std::pair<std::string, std::string> domains;  // kept sorted

  static CyberPassKey between(std::string a, std::string b, const Digest& key);
  bool joins(std::string_view a, std::string_view b) const;
};

struct VisaStamp {
  Digest value{};
  friend bool operator==(const VisaStamp&, const VisaStamp&) = default;
};

struct PassStamp {
  Digest value{};
  friend bool operator==(const PassStamp&, const PassStamp&) = default;
};

constexpr std::uint64_t mask_time(std::uint64_t unix_seconds) noexcept {
  return unix_seconds & 0xFFFFFFFFFFFFFFF0ull;
}

/// masked * (1 + 2^64 + 2^128 + 2^192) as 32 little-endian octets, i.e. the
/// 64-bit value replicated into four little-endian lanes.
Digest time256(std::uint64_t masked);

/// SHA-256(time256(masked) XOR cvk) without key-status checks.
VisaStamp visa_for_window(std::uint64_t masked, const Digest& cvk);

/// Throws Error(RevokedKey) or Error(ExpiredKey).
VisaStamp compute_visa(std::uint64_t now, const CyberVisaKey& key);

PassStamp compute_pass(const VisaStamp& visa, const CyberPassKey& key);

/// Writes both stamps and sets the timestamp to `now`; existing stamps are replaced.
MinPacket stamp_outbound(MinPacket pkt, const CyberVisaKey& cvk, const CyberPassKey& cpk,
                         std::uint64_t now);

enum class Verdict { Accept, MissingStamp, Revoked, Expired, BadVisa, BadPass, Replay };

std::string_view to_string(Verdict v);

/// Seen-set of (visa, nonce) pairs with per-entry lifetime. Safe to share
/// between threads: check-and-insert is atomic.
class ReplayCache {
 public:
  /// Returns false (replay) if the pair is live; otherwise records it until
  /// now + lifetime and returns true.
  bool check_and_insert(const Digest& visa, const Nonce& nonce, std::uint64_t now,
                        std::uint64_t lifetime);
  bool contains(const Digest& visa, const Nonce& nonce, std::uint64_t now) const;
  std::size_t size() const;

 private:
  using Key = std::array<std::uint8_t, 40>;
  struct KeyHash {
    std::size_t operator()(const Key& k) const noexcept;
  };
  static Key make_key(const Digest& visa, const Nonce& nonce);
  void purge(std::uint64_t now);

  mutable std::mutex mutex_;
  std::unordered_map<Key, std::uint64_t, KeyHash> live_;
  std::multimap<std::uint64_t, Key> by_expiry_;
};

/// Lifetime of a replay-cache entry for a given skew.
constexpr std::uint64_t replay_lifetime(int skew_windows) noexcept {
  return (2 * static_cast<std::uint64_t>(skew_windows) + 1) * kWindowSeconds;
}

/// Accepts iff the visa matches some window within +-skew_windows of `now`,
/// the pass matches the visa under `cpk`, the key is live, and the
/// (visa, nonce) pair is fresh. Passing a null cache skips the replay check.
Verdict verify_inbound(const MinPacket& pkt, const CyberVisaKey& cvk, const CyberPassKey& cpk,
                       std::uint64_t now, int skew_windows, ReplayCache* replay);

/// Somewhere to record revocations durably (the registry ledger).
class RevocationSink {
 public:
  virtual ~RevocationSink() = default;
  virtual void record_visa_revocation(const Digest& subject, const std::string& domain) = 0;
};

/// CVKs and CPKs held by one customs authority.
///
/// Text format, one record per line (`#` starts a comment):
///   cvk <subject-hex> <domain> <expiry> <key-hex>
///   cpk <domainA> <domainB> <key-hex>
///   revoke <subject-hex> <domain>
class KeyStore {
 public:
  void add(CyberVisaKey key);
  void add(CyberPassKey key);

  const CyberVisaKey* find_visa(const Digest& subject, std::string_view domain) const;
  const CyberPassKey* find_pass(std::string_view a, std::string_view b) const;
  bool has_subject(const Digest& subject) const;

  /// Marks every visa of `subject` (optionally only for `domain`) revoked.
  /// Throws Error(UnknownSubject). Returns the affected domains.
  std::vector<std::string> revoke(const Digest& subject, std::optional<std::string> domain = {});

  static KeyStore parse(std::string_view text);
  static KeyStore load(const std::string& path);
  std::string serialize() const;

  const std::vector<CyberVisaKey>& visas() const noexcept { return visas_; }
  const std::vector<CyberPassKey>& passes() const noexcept { return passes_; }

 private:
  std::vector<CyberVisaKey> visas_;
  std::vector<CyberPassKey> passes_;
};

/// Revokes locally and records one revocation per affected domain in `ledger`.
void revoke_visa(KeyStore& store, RevocationSink& ledger, const Digest& subject);

}  // namespace cogmin::customs
