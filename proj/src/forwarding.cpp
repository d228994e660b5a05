#include "cogmin/forwarding.hpp"

#include <algorithm>

namespace cogmin::forwarding {

// ---------------------------------------------------------------------------
// Fib

void Fib::add(const Identifier& prefix, FaceId face, std::uint32_t cost) {
  prefix.validate();
  auto& e = entries_.try_emplace(prefix, FibEntry{prefix, {}}).first->second;
  auto it = std::find_if(e.faces.begin(), e.faces.end(), [&](const FaceCost& f) { return f.face == face; });
  if (it != e.faces.end()) {
    it->cost = cost;
  } else {
    e.faces.push_back({face, cost});
  }
  std::sort(e.faces.begin(), e.faces.end(), [](const FaceCost& a, const FaceCost& b) {
    return a.cost != b.cost ? a.cost < b.cost : a.face < b.face;
  });
}

bool Fib::remove(const Identifier& prefix, FaceId face) {
  auto it = entries_.find(prefix);
  if (it == entries_.end()) return false;
  auto& faces = it->second.faces;
  auto n = std::erase_if(faces, [&](const FaceCost& f) { return f.face == face; });
  if (faces.empty()) entries_.erase(it);
  return n > 0;
}

const FibEntry* Fib::find(const Identifier& id) const {
  if (!is_hierarchical(id.type())) {
    auto it = entries_.find(id);
    return it == entries_.end() ? nullptr : &it->second;
  }
  for (std::size_t n = id.components().size(); n > 0; --n) {
    auto it = entries_.find(n == id.components().size() ? id : id.prefix(n));
    if (it != entries_.end()) return &it->second;
  }
  return nullptr;
}

const FibEntry& Fib::lookup(const Identifier& id) const {
  const auto* e = find(id);
  if (e == nullptr) throw Error(Errc::NoRoute, "no route for " + id.to_string());
  return *e;
}

// ---------------------------------------------------------------------------
// Pit

PitEntry* Pit::find(const Identifier& name, TimeMs now) {
  auto it = entries_.find(name);
  if (it == entries_.end()) return nullptr;
  if (it->second.expiry <= now) {
    entries_.erase(it);
    return nullptr;
  }
  return &it->second;
}

PitEntry& Pit::insert(const Identifier& name, TimeMs expiry) {
  auto& e = entries_[name];
  e.name = name;
  e.expiry = expiry;
  return e;
}

std::size_t Pit::expire(TimeMs now) {
  return std::erase_if(entries_, [&](const auto& kv) { return kv.second.expiry <= now; });
}

// ---------------------------------------------------------------------------
// DeadNonceList

bool DeadNonceList::contains(const Identifier& name, const Nonce& nonce) const {
  return members_.contains({name, nonce});
}

void DeadNonceList::insert(const Identifier& name, const Nonce& nonce) {
  if (capacity_ == 0 || !members_.insert({name, nonce}).second) return;
  order_.push_back({name, nonce});
  if (order_.size() > capacity_) {
    members_.erase(order_.front());
    order_.pop_front();
  }
}

// ---------------------------------------------------------------------------
// ContentStore

const MinPacket* ContentStore::lookup(const Identifier& name, TimeMs now) {
  auto it = index_.find(name);
  if (it == index_.end()) return nullptr;
  lru_.splice(lru_.begin(), lru_, it->second);
  it->second->last_used = now;
  return &it->second->packet;
}

void ContentStore::insert(const MinPacket& data, TimeMs now) {
  if (capacity_ == 0) return;
  if (data.kind != PacketKind::Data) throw Error(Errc::InvariantViolation, "only Data is cached");
  const auto& name = data.name();
  if (auto it = index_.find(name); it != index_.end()) {
    it->second->packet = data;
    it->second->last_used = now;
    lru_.splice(lru_.begin(), lru_, it->second);
    return;
  }
  if (lru_.size() == capacity_) {
    index_.erase(lru_.back().name);
    lru_.pop_back();
  }
  lru_.push_front(CsEntry{name, data, now, now});
  index_[name] = lru_.begin();
}

bool ContentStore::erase(const Identifier& name) {
  auto it = index_.find(name);
  if (it == index_.end()) return false;
  lru_.erase(it->second);
  index_.erase(it);
  return true;
}

std::vector<Identifier> ContentStore::names() const {
  std::vector<Identifier> out;
  out.reserve(lru_.size());
  for (const auto& e : lru_) out.push_back(e.name);
  return out;
}

// ---------------------------------------------------------------------------
// Router

Router::Router(RouterConfig config)
    : config_(std::move(config)),
      dead_nonces_(config_.dead_nonce_capacity),
      cs_(config_.cs_capacity),
      audit_(config_.name) {}

void Router::add_face(FaceId id, FaceKind kind, std::string peer_domain) {
  faces_[id] = Face{kind, std::move(peer_domain)};
}

const Router::Face* Router::face(FaceId id) const {
  auto it = faces_.find(id);
  return it == faces_.end() ? nullptr : &it->second;
}

std::uint64_t Router::unix_seconds(TimeMs now) const {
  auto local = static_cast<std::int64_t>(now) + config_.clock_offset_ms;
  auto secs = static_cast<std::int64_t>(config_.epoch_seconds) + (local >= 0 ? local / 1000 : -((-local + 999) / 1000));
  return secs < 0 ? 0 : static_cast<std::uint64_t>(secs);
}

Outcome Router::drop(std::string reason) {
  ++metrics_.drops_by_reason[reason];
  return Outcome{Disposition::Dropped, std::move(reason), {}, {}};
}

void Router::record(const MinPacket& pkt, identity::AuditVerdict verdict, const Digest& signer,
                    TimeMs now) {
  audit_.append(unix_seconds(now), signer, packet_digest(pkt), verdict);
}

namespace {
Digest claimed_signer(const MinPacket& pkt) { return pkt.signature ? pkt.signature->signer_id : kZeroDigest; }
}  // namespace

std::optional<std::string> Router::admit(const MinPacket& pkt, FaceId in_face, TimeMs now,
                                         bool replay_check) {
  const Face* f = face(in_face);
  if (f != nullptr && f->kind == FaceKind::Foreign && customs_) {
    auto signer = claimed_signer(pkt);
    const auto* cvk = customs_->keys.find_visa(signer, config_.domain);
    const auto* cpk = customs_->keys.find_pass(f->peer_domain, config_.domain);
    customs::Verdict v;
    if (!pkt.readonly.cyber_visa) {
      v = customs::Verdict::MissingStamp;
    } else if (cvk == nullptr) {
      v = customs::Verdict::BadVisa;
    } else if (cpk == nullptr) {
      v = customs::Verdict::BadPass;
    } else {
      v = customs::verify_inbound(pkt, *cvk, *cpk, unix_seconds(now), config_.skew_windows,
                                  replay_check ? &customs_->replay : nullptr);
    }
    if (v != customs::Verdict::Accept) {
      record(pkt, identity::AuditVerdict::DroppedCustoms, kZeroDigest, now);
      return std::string(customs::to_string(v));
    }
  }
  return std::nullopt;
}

std::optional<std::string> Router::prepare_egress(MinPacket& pkt, FaceId out_face, TimeMs now) const {
  const Face* f = face(out_face);
  if (f == nullptr || f->kind != FaceKind::Foreign || !customs_) return std::nullopt;
  if (!pkt.signature) return "MissingSignature";
  const auto* cvk = customs_->keys.find_visa(pkt.signature->signer_id, f->peer_domain);
  if (cvk == nullptr) return "NoVisa";
  const auto* cpk = customs_->keys.find_pass(config_.domain, f->peer_domain);
  if (cpk == nullptr) return "NoPassKey";
  try {
    pkt = customs::stamp_outbound(std::move(pkt), *cvk, *cpk, unix_seconds(now));
  } catch (const Error& e) {
    return e.code() == Errc::RevokedKey ? "Revoked" : "Expired";
  }
  return std::nullopt;
}

std::optional<FaceId> Router::route(const MinPacket& pkt, FaceId in_face) const {
  auto usable = [&](const FibEntry* e) -> std::optional<FaceId> {
    if (e == nullptr) return std::nullopt;
    for (const auto& fc : e->faces) {
      if (fc.face != in_face) return fc.face;
    }
    return std::nullopt;
  };
  try {
    auto ranked = sort_candidates(pkt.identifiers,
                                  [&](const Identifier& id) { return usable(fib_.find(id)).has_value(); });
    return usable(fib_.find(ranked.front()));
  } catch (const Error&) {
    return std::nullopt;
  }
}

Outcome Router::receive(const MinPacket& pkt, FaceId in_face, TimeMs now) {
  switch (pkt.kind) {
    case PacketKind::Interest: return on_interest(pkt, in_face, now);
    case PacketKind::Data: return on_data(pkt, in_face, now);
    case PacketKind::GPPkt: return on_gppkt(pkt, in_face, now);
  }
  return drop("Malformed");
}

namespace {

/// Signature and ban checks. `verify` selects full verification; otherwise
/// only the signer's ban status is consulted.
std::optional<std::pair<std::string, identity::AuditVerdict>> identity_check(
    const MinPacket& pkt, const identity::RegistryView& view, bool verify, Digest& audit_signer) {
  audit_signer = kZeroDigest;
  if (verify) {
    auto v = identity::verify_packet(pkt, view);
    if (v == identity::SigVerdict::Accept) return std::nullopt;
    if (v == identity::SigVerdict::Banned) {
      auto rec = view.find_identity(pkt.signature->signer_id);
      if (rec && crypto::verify(rec->public_key, signed_portion(pkt), pkt.signature->signature)) {
        audit_signer = rec->id_digest;
      }
      return std::pair{std::string(identity::to_string(v)), identity::AuditVerdict::DroppedBanned};
    }
    return std::pair{std::string(identity::to_string(v)), identity::AuditVerdict::DroppedBadSig};
  }
  if (pkt.signature) {
    auto rec = view.find_identity(pkt.signature->signer_id);
    if (rec && rec->status == identity::Status::Banned) {
      return std::pair{std::string("Banned"), identity::AuditVerdict::DroppedBanned};
    }
  }
  return std::nullopt;
}

}  // namespace

Outcome Router::on_interest(const MinPacket& pkt, FaceId in_face, TimeMs now) {
  ++metrics_.interests_in;
  metrics_.pit_expired += pit_.expire(now);
  if (pkt.variable.hop_limit == 0) return drop("HopLimitExceeded");
  if (auto r = admit(pkt, in_face, now, true)) return drop(*r);
  if (view_ != nullptr) {
    const Face* f = face(in_face);
    bool verify = config_.signature_policy == SignaturePolicy::Always ||
                  (f != nullptr && f->kind != FaceKind::Internal);
    Digest signer;
    if (auto r = identity_check(pkt, *view_, verify, signer)) {
      record(pkt, r->second, signer, now);
      return drop(r->first);
    }
  }

  const auto& name = pkt.name();
  const auto& nonce = pkt.readonly.nonce;
  if (dead_nonces_.contains(name, nonce)) return drop("DuplicateNonce");
  dead_nonces_.insert(name, nonce);
  if (config_.cs_admit_after > 0) ++popularity_[name];

  if (view_ != nullptr && cs_.contains(name)) {
    // Content from a since-banned producer is never served.
    const MinPacket* cached = cs_.lookup(name, now);
    Digest signer;
    if (identity_check(*cached, *view_, false, signer)) cs_.erase(name);
  }
  if (const MinPacket* cached = cs_.lookup(name, now)) {
    ++metrics_.cs_hits;
    MinPacket data = *cached;
    if (auto r = prepare_egress(data, in_face, now)) return drop(*r);
    record(data, identity::AuditVerdict::Forwarded, claimed_signer(data), now);
    Outcome out{Disposition::Absorbed, "cs_satisfied", {}, {}};
    out.sends.push_back({in_face, std::move(data)});
    return out;
  }

  if (PitEntry* e = pit_.find(name, now)) {
    ++metrics_.pit_aggregations;
    e->in_faces.push_back({in_face, nonce});
    return Outcome{Disposition::Absorbed, "pit_aggregated", {}, {}};
  }

  auto out_face = route(pkt, in_face);
  if (!out_face) return drop("NoRoute");
  MinPacket fwd = pkt;
  --fwd.variable.hop_limit;
  if (auto r = prepare_egress(fwd, *out_face, now)) return drop(*r);
  pit_.insert(name, now + config_.pit_lifetime).in_faces.push_back({in_face, nonce});
  record(pkt, identity::AuditVerdict::Forwarded, claimed_signer(pkt), now);
  ++metrics_.forwarded;
  Outcome out{Disposition::Forwarded, {}, {}, {}};
  out.sends.push_back({*out_face, std::move(fwd)});
  return out;
}

Outcome Router::on_data(const MinPacket& pkt, FaceId in_face, TimeMs now) {
  ++metrics_.data_in;
  metrics_.pit_expired += pit_.expire(now);
  if (auto r = admit(pkt, in_face, now, false)) return drop(*r);
  PitEntry* e = pit_.find(pkt.name(), now);
  if (e == nullptr) return drop("UnsolicitedData");
  if (view_ != nullptr) {
    Digest signer;
    if (auto r = identity_check(pkt, *view_, true, signer)) {
      record(pkt, r->second, signer, now);
      return drop(r->first);
    }
  }

  std::vector<FaceId> downstream;
  for (const auto& in : e->in_faces) {
    if (in.face != in_face && std::find(downstream.begin(), downstream.end(), in.face) == downstream.end()) {
      downstream.push_back(in.face);
    }
  }
  pit_.erase(pkt.name());
  if (config_.cs_admit_after == 0 || popularity_[pkt.name()] >= config_.cs_admit_after) {
    cs_.insert(pkt, now);
  }
  record(pkt, identity::AuditVerdict::Forwarded, claimed_signer(pkt), now);
  ++metrics_.forwarded;

  Outcome out{Disposition::Absorbed, "pit_satisfied", {}, {}};
  for (FaceId f : downstream) {
    MinPacket copy = pkt;
    if (auto r = prepare_egress(copy, f, now)) {
      ++metrics_.drops_by_reason[*r];
      out.refused.push_back(*r);
      continue;
    }
    out.sends.push_back({f, std::move(copy)});
  }
  return out;
}

Outcome Router::on_gppkt(const MinPacket& pkt, FaceId in_face, TimeMs now) {
  ++metrics_.gppkts_in;
  if (pkt.variable.hop_limit == 0) return drop("HopLimitExceeded");
  if (auto r = admit(pkt, in_face, now, true)) return drop(*r);
  if (view_ != nullptr) {
    const Face* f = face(in_face);
    bool verify = config_.signature_policy == SignaturePolicy::Always ||
                  (f != nullptr && f->kind != FaceKind::Internal);
    Digest signer;
    if (auto r = identity_check(pkt, *view_, verify, signer)) {
      record(pkt, r->second, signer, now);
      return drop(r->first);
    }
  }
  auto out_face = route(pkt, in_face);
  if (!out_face) return drop("NoRoute");
  MinPacket fwd = pkt;
  --fwd.variable.hop_limit;
  if (auto r = prepare_egress(fwd, *out_face, now)) return drop(*r);
  record(pkt, identity::AuditVerdict::Forwarded, claimed_signer(pkt), now);
  ++metrics_.forwarded;
  Outcome out{Disposition::Forwarded, {}, {}, {}};
  out.sends.push_back({*out_face, std::move(fwd)});
  return out;
}

}  // namespace cogmin::forwarding
