#include "cogmin/customs.hpp"

#include "cogmin/crypto.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <sstream>

namespace cogmin::customs {

CyberPassKey CyberPassKey::between(std::string a, std::string b, const Digest& key) {
  if (b < a) std::swap(a, b);
  return {key, {std::move(a), std::move(b)}};
}

bool CyberPassKey::joins(std::string_view a, std::string_view b) const {
  return (domains.first == a && domains.second == b) || (domains.first == b && domains.second == a);
}

Digest time256(std::uint64_t masked) {
  Digest out{};
  for (std::size_t lane = 0; lane < 4; ++lane) {
    for (std::size_t i = 0; i < 8; ++i) out[lane * 8 + i] = static_cast<std::uint8_t>(masked >> (8 * i));
  }
  return out;
}

namespace {
Digest xor32(const Digest& a, const Digest& b) {
  Digest out{};
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] ^ b[i];
  return out;
}
}  // namespace

VisaStamp visa_for_window(std::uint64_t masked, const Digest& cvk) {
  auto block = xor32(time256(masked), cvk);
  return {crypto::sha256(as_view(block))};
}

VisaStamp compute_visa(std::uint64_t now, const CyberVisaKey& key) {
  if (key.revoked) throw Error(Errc::RevokedKey, "visa key revoked");
  if (now >= key.expiry) throw Error(Errc::ExpiredKey, "visa key expired");
  return visa_for_window(mask_time(now), key.cvk);
}

PassStamp compute_pass(const VisaStamp& visa, const CyberPassKey& key) {
  auto block = xor32(key.cpk, visa.value);
  return {crypto::sha256(as_view(block))};
}

MinPacket stamp_outbound(MinPacket pkt, const CyberVisaKey& cvk, const CyberPassKey& cpk,
                         std::uint64_t now) {
  auto visa = compute_visa(now, cvk);
  pkt.readonly.cyber_visa = visa.value;
  pkt.readonly.cyber_pass = compute_pass(visa, cpk).value;
  pkt.readonly.timestamp = now;
  return pkt;
}

std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::Accept: return "accept";
    case Verdict::MissingStamp: return "MissingStamp";
    case Verdict::Revoked: return "Revoked";
    case Verdict::Expired: return "Expired";
    case Verdict::BadVisa: return "BadVisa";
    case Verdict::BadPass: return "BadPass";
    case Verdict::Replay: return "Replay";
  }
  return "?";
}

std::size_t ReplayCache::KeyHash::operator()(const Key& k) const noexcept {
  // Visa octets are already uniformly distributed.
  std::uint64_t a = 0;
  std::uint64_t b = 0;
  std::memcpy(&a, k.data(), 8);
  std::memcpy(&b, k.data() + 32, 8);
  return static_cast<std::size_t>(a ^ (b * 0x9E3779B97F4A7C15ull));
}

ReplayCache::Key ReplayCache::make_key(const Digest& visa, const Nonce& nonce) {
  Key k{};
  std::copy(visa.begin(), visa.end(), k.begin());
  std::copy(nonce.begin(), nonce.end(), k.begin() + 32);
  return k;
}

void ReplayCache::purge(std::uint64_t now) {
  auto end = by_expiry_.upper_bound(now);
  for (auto it = by_expiry_.begin(); it != end; ++it) {
    auto live = live_.find(it->second);
    if (live != live_.end() && live->second == it->first) live_.erase(live);
  }
  by_expiry_.erase(by_expiry_.begin(), end);
}

bool ReplayCache::check_and_insert(const Digest& visa, const Nonce& nonce, std::uint64_t now,
                                   std::uint64_t lifetime) {
  std::lock_guard lock(mutex_);
  purge(now);
  auto key = make_key(visa, nonce);
  auto [it, inserted] = live_.try_emplace(key, now + lifetime);
  if (!inserted) return false;
  by_expiry_.emplace(now + lifetime, key);
  return true;
}

bool ReplayCache::contains(const Digest& visa, const Nonce& nonce, std::uint64_t now) const {
  std::lock_guard lock(mutex_);
  auto it = live_.find(make_key(visa, nonce));
  return it != live_.end() && it->second > now;
}

std::size_t ReplayCache::size() const {
  std::lock_guard lock(mutex_);
  return live_.size();
}

Verdict verify_inbound(const MinPacket& pkt, const CyberVisaKey& cvk, const CyberPassKey& cpk,
                       std::uint64_t now, int skew_windows, ReplayCache* replay) {
  const auto& ro = pkt.readonly;
  if (!ro.cyber_visa || !ro.cyber_pass) return Verdict::MissingStamp;
  if (cvk.revoked) return Verdict::Revoked;
  if (now >= cvk.expiry) return Verdict::Expired;

  const auto center = mask_time(now);
  const VisaStamp claimed{*ro.cyber_visa};
  bool visa_ok = visa_for_window(center, cvk.cvk) == claimed;
  for (int w = 1; !visa_ok && w <= skew_windows; ++w) {
    const auto delta = kWindowSeconds * static_cast<std::uint64_t>(w);
    if (center + delta >= center && visa_for_window(center + delta, cvk.cvk) == claimed) {
      visa_ok = true;
    } else if (center >= delta && visa_for_window(center - delta, cvk.cvk) == claimed) {
      visa_ok = true;
    }
  }
  if (!visa_ok) return Verdict::BadVisa;
  if (compute_pass(claimed, cpk).value != *ro.cyber_pass) return Verdict::BadPass;
  if (replay != nullptr &&
      !replay->check_and_insert(claimed.value, ro.nonce, now, replay_lifetime(skew_windows))) {
    return Verdict::Replay;
  }
  return Verdict::Accept;
}

void KeyStore::add(CyberVisaKey key) {
  auto it = std::find_if(visas_.begin(), visas_.end(), [&](const CyberVisaKey& k) {
    return k.subject == key.subject && k.issuing_domain == key.issuing_domain;
  });
  if (it != visas_.end()) {
    *it = std::move(key);
  } else {
    visas_.push_back(std::move(key));
  }
}

void KeyStore::add(CyberPassKey key) {
  auto it = std::find_if(passes_.begin(), passes_.end(),
                         [&](const CyberPassKey& k) { return k.domains == key.domains; });
  if (it != passes_.end()) {
    *it = std::move(key);
  } else {
    passes_.push_back(std::move(key));
  }
}

const CyberVisaKey* KeyStore::find_visa(const Digest& subject, std::string_view domain) const {
  for (const auto& k : visas_) {
    if (k.subject == subject && k.issuing_domain == domain) return &k;
  }
  return nullptr;
}

const CyberPassKey* KeyStore::find_pass(std::string_view a, std::string_view b) const {
  for (const auto& k : passes_) {
    if (k.joins(a, b)) return &k;
  }
  return nullptr;
}

bool KeyStore::has_subject(const Digest& subject) const {
  return std::any_of(visas_.begin(), visas_.end(),
                     [&](const CyberVisaKey& k) { return k.subject == subject; });
}

std::vector<std::string> KeyStore::revoke(const Digest& subject, std::optional<std::string> domain) {
  std::vector<std::string> affected;
  for (auto& k : visas_) {
    if (k.subject == subject && (!domain || k.issuing_domain == *domain)) {
      k.revoked = true;
      affected.push_back(k.issuing_domain);
    }
  }
  if (affected.empty()) throw Error(Errc::UnknownSubject, "no visa issued to " + to_hex(subject));
  return affected;
}

KeyStore KeyStore::parse(std::string_view text) {
  KeyStore store;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  std::vector<std::pair<Digest, std::string>> revocations;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream fields(line);
    std::string tag;
    if (!(fields >> tag)) continue;
    auto bad = [&](const std::string& why) {
      return Error(Errc::InvariantViolation, "key file line " + std::to_string(lineno) + ": " + why);
    };
    if (tag == "cvk") {
      std::string subject, domain, key;
      std::uint64_t expiry = 0;
      if (!(fields >> subject >> domain >> expiry >> key)) throw bad("cvk needs 4 fields");
      store.add(CyberVisaKey{digest_from_hex(key), digest_from_hex(subject), domain, expiry, false});
    } else if (tag == "cpk") {
      std::string a, b, key;
      if (!(fields >> a >> b >> key)) throw bad("cpk needs 3 fields");
      store.add(CyberPassKey::between(a, b, digest_from_hex(key)));
    } else if (tag == "revoke") {
      std::string subject, domain;
      if (!(fields >> subject >> domain)) throw bad("revoke needs 2 fields");
      revocations.emplace_back(digest_from_hex(subject), domain);
    } else {
      throw bad("unknown record '" + tag + "'");
    }
  }
  for (const auto& [subject, domain] : revocations) store.revoke(subject, domain);
  return store;
}

KeyStore KeyStore::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string KeyStore::serialize() const {
  std::ostringstream out;
  for (const auto& k : visas_) {
    out << "cvk " << to_hex(k.subject) << ' ' << k.issuing_domain << ' ' << k.expiry << ' '
        << to_hex(k.cvk) << '\n';
  }
  for (const auto& k : passes_) {
    out << "cpk " << k.domains.first << ' ' << k.domains.second << ' ' << to_hex(k.cpk) << '\n';
  }
  for (const auto& k : visas_) {
    if (k.revoked) out << "revoke " << to_hex(k.subject) << ' ' << k.issuing_domain << '\n';
  }
  return out.str();
}

void revoke_visa(KeyStore& store, RevocationSink& ledger, const Digest& subject) {
  for (const auto& domain : store.revoke(subject)) ledger.record_visa_revocation(subject, domain);
}

}  // namespace cogmin::customs
