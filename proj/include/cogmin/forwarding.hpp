#pragma once

#include "cogmin/codec.hpp"
#include "cogmin/customs.hpp"
#include "cogmin/identity.hpp"

#include <deque>
#include <list>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

/// Multi-identifier router data plane: FIB, PIT, content store and the
/// per-kind processing of Interest, Data and GPPkt.
namespace cogmin::forwarding {

using FaceId = std::uint32_t;
using TimeMs = std::uint64_t;

struct FaceCost {
  FaceId face = 0;
  std::uint32_t cost = 0;
  friend bool operator==(const FaceCost&, const FaceCost&) = default;
};

struct FibEntry {
  Identifier prefix;
  std::vector<FaceCost> faces;  // ascending cost, then face id
};

class Fib {
 public:
  /// Adds `face` under `prefix`, or updates its cost.
  void add(const Identifier& prefix, FaceId face, std::uint32_t cost = 1);
  bool remove(const Identifier& prefix, FaceId face);

  /// Longest prefix match (exact match for flat identifier types).
  const FibEntry* find(const Identifier& id) const;
  /// Same as find; throws Error(NoRoute).
  const FibEntry& lookup(const Identifier& id) const;

  std::size_t size() const noexcept { return entries_.size(); }
  const std::map<Identifier, FibEntry>& entries() const noexcept { return entries_; }

 private:
  std::map<Identifier, FibEntry> entries_;
};

struct InRecord {
  FaceId face = 0;
  Nonce nonce{};
  friend bool operator==(const InRecord&, const InRecord&) = default;
};

struct PitEntry {
  Identifier name;
  std::vector<InRecord> in_faces;
  TimeMs expiry = 0;
};

class Pit {
 public:
  PitEntry* find(const Identifier& name, TimeMs now);
  PitEntry& insert(const Identifier& name, TimeMs expiry);
  void erase(const Identifier& name) { entries_.erase(name); }
  /// Drops entries whose expiry has passed; returns how many.
  std::size_t expire(TimeMs now);
  std::size_t size() const noexcept { return entries_.size(); }

 private:
  std::map<Identifier, PitEntry> entries_;
};

/// Bounded FIFO of recently seen (name, nonce) pairs.
class DeadNonceList {
 public:
  explicit DeadNonceList(std::size_t capacity = std::size_t{1} << 16) : capacity_(capacity) {}
  bool contains(const Identifier& name, const Nonce& nonce) const;
  void insert(const Identifier& name, const Nonce& nonce);
  std::size_t size() const noexcept { return order_.size(); }

 private:
  using Key = std::pair<Identifier, Nonce>;
  std::size_t capacity_;
  std::set<Key> members_;
  std::deque<Key> order_;
};

struct CsEntry {
  Identifier name;
  MinPacket packet;
  TimeMs last_used = 0;
  TimeMs insertion = 0;
};

/// Exact-LRU cache of Data packets keyed by name.
class ContentStore {
 public:
  explicit ContentStore(std::size_t capacity) : capacity_(capacity) {}

  /// Returns the cached packet and marks it most recently used.
  const MinPacket* lookup(const Identifier& name, TimeMs now);
  bool contains(const Identifier& name) const { return index_.contains(name); }
  /// Inserts or refreshes; evicts the least recently used entry when full.
  void insert(const MinPacket& data, TimeMs now);
  bool erase(const Identifier& name);

  std::size_t size() const noexcept { return lru_.size(); }
  std::size_t capacity() const noexcept { return capacity_; }
  /// Names from most to least recently used.
  std::vector<Identifier> names() const;

 private:
  std::size_t capacity_;
  std::list<CsEntry> lru_;  // front = most recent
  std::map<Identifier, std::list<CsEntry>::iterator> index_;
};

enum class FaceKind {
  Host,      // attached end host (this router is its first hop)
  Internal,  // another router of the same domain
  Foreign,   // border link into another domain
};

enum class SignaturePolicy {
  Edge,    // first-hop and border ingress verify; core routers check ban status only
  Always,  // every router verifies every signature
};

struct RouterConfig {
  std::string name;
  std::string domain;
  std::size_t cs_capacity = 64;
  /// Interests a name must receive before its Data is admitted to the CS (0 admits all).
  std::uint32_t cs_admit_after = 0;
  TimeMs pit_lifetime = 4000;
  std::size_t dead_nonce_capacity = std::size_t{1} << 16;
  SignaturePolicy signature_policy = SignaturePolicy::Edge;
  int skew_windows = customs::kDefaultSkewWindows;
  /// UNIX time at simulated t = 0; customs and audit time derive from it.
  std::uint64_t epoch_seconds = 1'700'000'000;
  std::int64_t clock_offset_ms = 0;
};

struct RouterMetrics {
  std::uint64_t interests_in = 0;
  std::uint64_t data_in = 0;
  std::uint64_t gppkts_in = 0;
  std::uint64_t cs_hits = 0;
  std::uint64_t pit_aggregations = 0;
  std::uint64_t pit_expired = 0;
  std::uint64_t forwarded = 0;
  std::map<std::string, std::uint64_t> drops_by_reason;
};

struct Send {
  FaceId face = 0;
  MinPacket packet;
};

/// What became of one received packet.
enum class Disposition {
  Forwarded,  // continues as the single send
  Absorbed,   // consumed; any sends are new packets (cached or fanned-out Data)
  Dropped,
};

struct Outcome {
  Disposition disposition = Disposition::Dropped;
  std::string reason;  // drop or absorption reason
  std::vector<Send> sends;
  std::vector<std::string> refused;  // fan-out copies that egress customs would not stamp
};

/// Border state: customs keys plus the replay cache for inbound stamps.
struct CustomsContext {
  customs::KeyStore keys;
  customs::ReplayCache replay;
};

class Router {
 public:
  explicit Router(RouterConfig config);

  const RouterConfig& config() const noexcept { return config_; }
  void add_face(FaceId face, FaceKind kind, std::string peer_domain = {});
  Fib& fib() noexcept { return fib_; }
  const Fib& fib() const noexcept { return fib_; }
  ContentStore& cs() noexcept { return cs_; }
  const Pit& pit() const noexcept { return pit_; }
  const RouterMetrics& metrics() const noexcept { return metrics_; }
  const identity::AuditLog& audit() const noexcept { return audit_; }

  /// Identity state consulted for ban and signature checks; null disables them.
  void set_registry_view(const identity::RegistryView* view) { view_ = view; }
  void set_customs(std::shared_ptr<CustomsContext> customs) { customs_ = std::move(customs); }

  Outcome receive(const MinPacket& pkt, FaceId in_face, TimeMs now);
  Outcome on_interest(const MinPacket& pkt, FaceId in_face, TimeMs now);
  Outcome on_data(const MinPacket& pkt, FaceId in_face, TimeMs now);
  Outcome on_gppkt(const MinPacket& pkt, FaceId in_face, TimeMs now);

  /// UNIX seconds on this router's clock at simulated time `now`.
  std::uint64_t unix_seconds(TimeMs now) const;

 private:
  struct Face {
    FaceKind kind = FaceKind::Internal;
    std::string peer_domain;
  };

  Outcome drop(std::string reason);
  /// Border ingress customs check; returns a drop reason.
  std::optional<std::string> admit(const MinPacket& pkt, FaceId in_face, TimeMs now, bool replay_check);
  /// FIB face for the best reachable identifier, never `in_face`.
  std::optional<FaceId> route(const MinPacket& pkt, FaceId in_face) const;
  /// Applies egress customs stamping; returns a drop reason on failure.
  std::optional<std::string> prepare_egress(MinPacket& pkt, FaceId out_face, TimeMs now) const;
  void record(const MinPacket& pkt, identity::AuditVerdict verdict, const Digest& signer, TimeMs now);
  const Face* face(FaceId id) const;

  RouterConfig config_;
  std::map<FaceId, Face> faces_;
  Fib fib_;
  Pit pit_;
  DeadNonceList dead_nonces_;
  ContentStore cs_;
  std::map<Identifier, std::uint32_t> popularity_;
  RouterMetrics metrics_;
  identity::AuditLog audit_;
  const identity::RegistryView* view_ = nullptr;
  std::shared_ptr<CustomsContext> customs_;
};

}  // namespace cogmin::forwarding
