#pragma once

#include "cogmin/codec.hpp"
#include "cogmin/crypto.hpp"
#include "cogmin/identity.hpp"

#include <map>
#include <random>
#include <set>

namespace testsupport {

using cogmin::Bytes;

inline Bytes random_bytes(std::mt19937_64& rng, std::size_t n) {
  Bytes out(n);
  for (auto& b : out) b = static_cast<std::uint8_t>(rng());
  return out;
}

template <std::size_t N>
std::array<std::uint8_t, N> random_array(std::mt19937_64& rng) {
  std::array<std::uint8_t, N> out{};
  for (auto& b : out) b = static_cast<std::uint8_t>(rng());
  return out;
}

inline std::size_t pick(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(rng() % (hi - lo + 1));
}

/// Biased toward short values, with an occasional long one to reach the
/// 2-octet length form.
inline std::size_t random_length(std::mt19937_64& rng, std::size_t max) {
  switch (rng() % 8) {
    case 0: return 0;
    case 1: return pick(rng, 240, std::min<std::size_t>(max, 600));
    default: return pick(rng, 0, std::min<std::size_t>(max, 24));
  }
}

inline cogmin::Identifier random_identifier(std::mt19937_64& rng) {
  using cogmin::IdType;
  switch (rng() % 6) {
    case 0:
    case 1: {
      std::vector<Bytes> comps(pick(rng, 1, rng() % 16 == 0 ? 32 : 4));
      for (auto& c : comps) c = random_bytes(rng, rng() % 32 == 0 ? 255 : pick(rng, 1, 8));
      return {rng() % 2 ? IdType::Content : IdType::Service, std::move(comps)};
    }
    case 2: return cogmin::Identifier::identity(random_array<32>(rng));
    case 3: return {IdType::Ip, {random_bytes(rng, rng() % 2 ? 4 : 16)}};
    case 4: return {IdType::Hyperbolic, {random_bytes(rng, 8), random_bytes(rng, 8)}};
    default: {
      std::vector<Bytes> comps(pick(rng, 1, 3));
      for (auto& c : comps) c = random_bytes(rng, pick(rng, 1, 12));
      return {static_cast<IdType>(pick(rng, 6, 200)), std::move(comps)};
    }
  }
}

inline std::vector<cogmin::tlv::Element> random_extensions(std::mt19937_64& rng) {
  std::vector<cogmin::tlv::Element> out;
  if (rng() % 4 != 0) return out;
  auto n = pick(rng, 1, 3);
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back({static_cast<std::uint8_t>(pick(rng, 0x80, 0xFF)), random_bytes(rng, random_length(rng, 300))});
  }
  return out;
}

/// Any packet satisfying the packet invariants.
inline cogmin::MinPacket random_packet(std::mt19937_64& rng) {
  cogmin::MinPacket p;
  p.kind = static_cast<cogmin::PacketKind>(pick(rng, 5, 7));
  p.identifiers.resize(pick(rng, 1, 4));
  for (auto& id : p.identifiers) id = random_identifier(rng);
  if (p.kind != cogmin::PacketKind::Interest || rng() % 2 == 0) {
    cogmin::SignatureBlock s;
    s.signer_id = random_array<32>(rng);
    s.signature = random_bytes(rng, 64);
    s.extensions = random_extensions(rng);
    p.signature = std::move(s);
  }
  p.readonly.timestamp = rng() % 3 == 0 ? rng() : 1'700'000'000 + rng() % 100'000'000;
  if (rng() % 2 == 0) {
    p.readonly.cyber_visa = random_array<32>(rng);
    if (rng() % 2 == 0) p.readonly.cyber_pass = random_array<32>(rng);
  }
  p.readonly.nonce = random_array<8>(rng);
  p.readonly.extensions = random_extensions(rng);
  p.variable.payload = random_bytes(rng, random_length(rng, 1200));
  p.variable.hop_limit = static_cast<std::uint8_t>(rng());
  p.variable.extensions = random_extensions(rng);
  p.extensions = random_extensions(rng);
  return p;
}

/// Mutated copies of valid encodings plus raw noise.
inline Bytes fuzz_input(std::mt19937_64& rng, const std::vector<Bytes>& corpus) {
  if (corpus.empty() || rng() % 8 == 0) return random_bytes(rng, pick(rng, 0, 64));
  Bytes b = corpus[rng() % corpus.size()];
  auto edits = pick(rng, 1, 4);
  for (std::size_t i = 0; i < edits; ++i) {
    switch (rng() % 5) {
      case 0:
        if (!b.empty()) b[rng() % b.size()] ^= static_cast<std::uint8_t>(1u << (rng() % 8));
        break;
      case 1:
        if (!b.empty()) b[rng() % b.size()] = static_cast<std::uint8_t>(rng());
        break;
      case 2:
        if (!b.empty()) b.resize(rng() % b.size());
        break;
      case 3: b.insert(b.begin() + static_cast<std::ptrdiff_t>(rng() % (b.size() + 1)), static_cast<std::uint8_t>(rng())); break;
      default:
        if (!b.empty()) b.erase(b.begin() + static_cast<std::ptrdiff_t>(rng() % b.size()));
    }
  }
  return b;
}

/// In-memory identity registry that commits every submission immediately.
struct MemoryRegistry : cogmin::identity::RegistryView, cogmin::identity::LedgerSink {
  std::map<cogmin::Digest, cogmin::identity::IdentityRecord> records;
  std::set<std::pair<cogmin::Digest, std::string>> revoked;

  std::optional<cogmin::identity::IdentityRecord> find_identity(const cogmin::Digest& id) const override {
    auto it = records.find(id);
    if (it == records.end()) return std::nullopt;
    return it->second;
  }
  bool biometric_banned(const cogmin::Digest& bio) const override {
    for (const auto& [_, r] : records) {
      if (r.biometric_digest == bio && r.status == cogmin::identity::Status::Banned) return true;
    }
    return false;
  }
  bool visa_revoked(const cogmin::Digest& subject, std::string_view domain) const override {
    return revoked.contains({subject, std::string(domain)});
  }
  void submit_identity(const cogmin::identity::IdentityRecord& r) override { records[r.id_digest] = r; }
  void submit_ban(const cogmin::Digest& id) override { records.at(id).status = cogmin::identity::Status::Banned; }

  cogmin::identity::Enrollment enroll(std::mt19937_64& rng, std::string domain = "east") {
    return cogmin::identity::generate_identity(*this, *this, random_array<32>(rng), random_array<32>(rng),
                                               std::move(domain), random_array<32>(rng));
  }
};

}  // namespace testsupport
