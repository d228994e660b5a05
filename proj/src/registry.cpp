#include "cogmin/registry.hpp"

#include <algorithm>
#include <fstream>

namespace cogmin::registry {

namespace {

constexpr std::string_view kGenesisProposer = "genesis";
constexpr std::uint8_t kRevokeIdentifier = 1;
constexpr std::uint8_t kRevokeVisa = 2;

template <class... Fs>
struct Overloaded : Fs... {
  using Fs::operator()...;
};

void put_identifier(Bytes& out, const Identifier& id) {
  auto e = encode_identifier(id);
  out.insert(out.end(), e.begin(), e.end());
}

Identifier take_identifier(tlv::FieldReader& f) {
  return decode_identifier(f.element(tlv::kIdentifier).value);
}

crypto::PublicKey take_key(tlv::FieldReader& f) { return f.digest(); }

Bytes take_signature(tlv::FieldReader& f) {
  auto v = f.bytes();
  if (v.size() != 64) throw Error(Errc::LengthMismatch, "signature field must be 64 octets");
  return Bytes(v.begin(), v.end());
}

/// Exactly one element of `type` spanning all of `bytes`.
ByteView single_element(ByteView bytes, std::uint8_t type, const char* what) {
  tlv::Reader r(bytes, Errc::TruncatedInput);
  auto e = r.next();
  if (!r.done()) throw Error(Errc::LengthMismatch, std::string("trailing octets after ") + what);
  if (e.type != type) throw Error(Errc::UnknownCriticalType, std::string("not a ") + what);
  return e.value;
}

bool valid_domain_name(std::string_view name) {
  if (name.empty()) return false;
  std::size_t start = 0;
  for (;;) {
    auto dot = name.find('.', start);
    auto label = name.substr(start, dot == std::string_view::npos ? std::string_view::npos : dot - start);
    if (label.empty()) return false;
    for (char c : label) {
      bool ok = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '-' || c == '_';
      if (!ok) return false;
    }
    if (dot == std::string_view::npos) return true;
    start = dot + 1;
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Governance

std::optional<std::string> Domain::parent() const {
  auto dot = name.rfind('.');
  if (dot == std::string::npos) return std::nullopt;
  return name.substr(0, dot);
}

bool is_ancestor_or_self(std::string_view ancestor, std::string_view domain) {
  if (ancestor == domain) return true;
  return domain.size() > ancestor.size() && domain.starts_with(ancestor) &&
         domain[ancestor.size()] == '.';
}

Bytes Genesis::encode() const {
  Bytes inner;
  tlv::write_uint(inner, committee.size());
  for (const auto& m : committee) {
    tlv::write_text(inner, m.node);
    tlv::write_bytes(inner, as_view(m.key));
  }
  tlv::write_uint(inner, domains.size());
  for (const auto& d : domains) {
    tlv::write_text(inner, d.name);
    tlv::write_uint(inner, d.operators.size());
    for (const auto& k : d.operators) tlv::write_bytes(inner, as_view(k));
  }
  return inner;
}

Genesis Genesis::decode(ByteView value) {
  tlv::FieldReader f(value);
  Genesis g;
  auto n = f.uint();
  for (std::uint64_t i = 0; i < n; ++i) {
    CommitteeMember m;
    m.node = f.text();
    m.key = take_key(f);
    g.committee.push_back(std::move(m));
  }
  auto nd = f.uint();
  for (std::uint64_t i = 0; i < nd; ++i) {
    Domain d;
    d.name = f.text();
    auto nk = f.uint();
    for (std::uint64_t k = 0; k < nk; ++k) d.operators.push_back(take_key(f));
    g.domains.push_back(std::move(d));
  }
  f.finish();
  return g;
}

// ---------------------------------------------------------------------------
// Transactions

std::string_view to_string(TxKind kind) {
  switch (kind) {
    case TxKind::RegisterIdentifier: return "RegisterIdentifier";
    case TxKind::RegisterIdentity: return "RegisterIdentity";
    case TxKind::Revoke: return "Revoke";
    case TxKind::Ban: return "Ban";
    case TxKind::TranslateLink: return "TranslateLink";
    case TxKind::AuditAnchor: return "AuditAnchor";
  }
  return "?";
}

TxKind Transaction::kind() const noexcept { return static_cast<TxKind>(body.index() + 1); }

namespace {

void encode_body(Bytes& out, const TxBody& body) {
  std::visit(Overloaded{
                 [&](const RegisterIdentifierBody& b) {
                   put_identifier(out, b.id);
                   tlv::write_bytes(out, as_view(b.owner));
                   tlv::write_text(out, b.domain);
                 },
                 [&](const RegisterIdentityBody& b) {
                   const auto& r = b.record;
                   tlv::write_bytes(out, as_view(r.id_digest));
                   tlv::write_bytes(out, as_view(r.public_key));
                   tlv::write_bytes(out, as_view(r.real_info_digest));
                   tlv::write_bytes(out, as_view(r.biometric_digest));
                   tlv::write_uint(out, static_cast<std::uint64_t>(r.status));
                   tlv::write_text(out, r.domain);
                 },
                 [&](const RevokeBody& b) {
                   if (b.identifier) {
                     tlv::write_uint(out, kRevokeIdentifier);
                     put_identifier(out, *b.identifier);
                   } else {
                     tlv::write_uint(out, kRevokeVisa);
                     tlv::write_bytes(out, as_view(b.visa_subject));
                     tlv::write_text(out, b.domain);
                   }
                 },
                 [&](const BanBody& b) { tlv::write_bytes(out, as_view(b.id)); },
                 [&](const TranslateLinkBody& b) {
                   put_identifier(out, b.from);
                   put_identifier(out, b.to);
                 },
                 [&](const AuditAnchorBody& b) {
                   tlv::write_text(out, b.router);
                   tlv::write_text(out, b.domain);
                   tlv::write_bytes(out, as_view(b.head_hash));
                   tlv::write_uint(out, b.record_count);
                 },
             },
             body);
}

TxBody decode_body(TxKind kind, tlv::FieldReader& f) {
  switch (kind) {
    case TxKind::RegisterIdentifier: {
      RegisterIdentifierBody b{take_identifier(f), {}, {}};
      b.owner = f.digest();
      b.domain = f.text();
      return b;
    }
    case TxKind::RegisterIdentity: {
      RegisterIdentityBody b;
      auto& r = b.record;
      r.id_digest = f.digest();
      r.public_key = take_key(f);
      r.real_info_digest = f.digest();
      r.biometric_digest = f.digest();
      auto status = f.uint();
      if (status > 1) throw Error(Errc::InvariantViolation, "unknown identity status");
      r.status = static_cast<identity::Status>(status);
      r.domain = f.text();
      return b;
    }
    case TxKind::Revoke: {
      RevokeBody b;
      auto sub = f.uint();
      if (sub == kRevokeIdentifier) {
        b.identifier = take_identifier(f);
      } else if (sub == kRevokeVisa) {
        b.visa_subject = f.digest();
        b.domain = f.text();
      } else {
        throw Error(Errc::InvariantViolation, "unknown revocation kind");
      }
      return b;
    }
    case TxKind::Ban: return BanBody{f.digest()};
    case TxKind::TranslateLink: {
      auto from = take_identifier(f);
      auto to = take_identifier(f);
      return TranslateLinkBody{std::move(from), std::move(to)};
    }
    case TxKind::AuditAnchor: {
      AuditAnchorBody b;
      b.router = f.text();
      b.domain = f.text();
      b.head_hash = f.digest();
      b.record_count = f.uint();
      return b;
    }
  }
  throw Error(Errc::InvariantViolation, "unknown transaction kind");
}

Bytes tx_fields(const Transaction& tx) {
  Bytes inner;
  tlv::write_uint(inner, static_cast<std::uint64_t>(tx.kind()));
  tlv::write_bytes(inner, as_view(tx.submitter));
  tlv::write_uint(inner, tx.nonce);
  encode_body(inner, tx.body);
  return inner;
}

}  // namespace

Bytes Transaction::signing_bytes() const {
  Bytes out;
  tlv::write_element(out, msg::kTransaction, tx_fields(*this));
  return out;
}

Bytes Transaction::encode() const {
  auto inner = tx_fields(*this);
  tlv::write_bytes(inner, signature);
  Bytes out;
  tlv::write_element(out, msg::kTransaction, inner);
  return out;
}

Transaction Transaction::decode_value(ByteView value) {
  tlv::FieldReader f(value);
  auto kind = f.uint();
  if (kind < 1 || kind > 6) throw Error(Errc::InvariantViolation, "unknown transaction kind");
  Transaction tx;
  tx.submitter = f.digest();
  tx.nonce = f.uint();
  tx.body = decode_body(static_cast<TxKind>(kind), f);
  tx.signature = take_signature(f);
  f.finish();
  return tx;
}

Digest Transaction::digest() const { return crypto::sha256(encode()); }

Transaction make_transaction(TxBody body, const crypto::SecretKey& submitter, std::uint64_t nonce) {
  Transaction tx;
  tx.body = std::move(body);
  tx.submitter = identity::identity_digest(submitter.public_key());
  tx.nonce = nonce;
  auto sig = submitter.sign(tx.signing_bytes());
  tx.signature.assign(sig.begin(), sig.end());
  return tx;
}

// ---------------------------------------------------------------------------
// Blocks

namespace {

Bytes block_fields(const LedgerBlock& b, bool with_votes) {
  Bytes inner;
  tlv::write_uint(inner, b.height);
  tlv::write_bytes(inner, as_view(b.prev_hash));
  tlv::write_bytes(inner, as_view(b.tx_root));
  tlv::write_text(inner, b.proposer);
  tlv::write_uint(inner, b.time);
  tlv::write_uint(inner, b.round);
  if (b.genesis) tlv::write_element(inner, msg::kGenesis, b.genesis->encode());
  for (const auto& tx : b.txs) {
    auto e = tx.encode();
    inner.insert(inner.end(), e.begin(), e.end());
  }
  if (with_votes) {
    for (const auto& v : b.votes) {
      Bytes ve;
      tlv::write_text(ve, v.node);
      tlv::write_bytes(ve, v.signature);
      tlv::write_element(inner, msg::kVoteEntry, ve);
    }
  }
  return inner;
}

Vote decode_vote(ByteView value) {
  tlv::FieldReader f(value);
  Vote v;
  v.node = f.text();
  v.signature = take_signature(f);
  f.finish();
  return v;
}

LedgerBlock decode_block_value(ByteView value) {
  tlv::FieldReader f(value);
  LedgerBlock b;
  b.height = f.uint();
  b.prev_hash = f.digest();
  b.tx_root = f.digest();
  b.proposer = f.text();
  b.time = f.uint();
  b.round = f.uint();
  if (f.next_is(msg::kGenesis)) b.genesis = Genesis::decode(f.element(msg::kGenesis).value);
  while (f.next_is(msg::kTransaction)) {
    b.txs.push_back(Transaction::decode_value(f.element(msg::kTransaction).value));
  }
  while (f.next_is(msg::kVoteEntry)) b.votes.push_back(decode_vote(f.element(msg::kVoteEntry).value));
  f.finish();
  return b;
}

Bytes encode_block(const LedgerBlock& b) {
  Bytes out;
  tlv::write_element(out, msg::kBlock, block_fields(b, true));
  return out;
}

}  // namespace

Digest LedgerBlock::header_hash() const {
  Bytes out;
  tlv::write_element(out, msg::kBlock, block_fields(*this, false));
  return crypto::sha256(out);
}

Digest LedgerBlock::hash() const { return crypto::sha256(encode()); }

Bytes LedgerBlock::encode() const { return encode_block(*this); }

LedgerBlock LedgerBlock::decode(ByteView bytes) {
  return decode_block_value(single_element(bytes, msg::kBlock, "ledger block"));
}

Digest compute_tx_root(const std::vector<Transaction>& txs) {
  Bytes cat;
  cat.reserve(txs.size() * 32);
  for (const auto& tx : txs) {
    auto d = tx.digest();
    cat.insert(cat.end(), d.begin(), d.end());
  }
  return crypto::sha256(cat);
}

Digest genesis_tx_root(const Genesis& genesis) { return crypto::sha256(genesis.encode()); }

LedgerBlock make_genesis_block(Genesis genesis) {
  LedgerState check(genesis);  // validates
  LedgerBlock b;
  b.proposer = std::string(kGenesisProposer);
  b.tx_root = genesis_tx_root(genesis);
  b.genesis = std::move(genesis);
  return b;
}

Bytes vote_message(const Digest& header_hash) {
  static constexpr std::string_view kTag = "cogmin-vote";
  Bytes m(kTag.begin(), kTag.end());
  m.insert(m.end(), header_hash.begin(), header_hash.end());
  return m;
}

// ---------------------------------------------------------------------------
// LedgerState

std::string_view to_string(Reject r) {
  switch (r) {
    case Reject::None: return "None";
    case Reject::BadSignature: return "BadSignature";
    case Reject::Unauthorized: return "Unauthorized";
    case Reject::Duplicate: return "Duplicate";
    case Reject::NotFound: return "NotFound";
    case Reject::DuplicateBiometric: return "DuplicateBiometric";
    case Reject::Malformed: return "Malformed";
  }
  return "?";
}

LedgerState::LedgerState(Genesis genesis) : genesis_(std::move(genesis)) {
  if (genesis_.committee.empty()) throw Error(Errc::InvariantViolation, "empty root committee");
  std::set<std::string> names;
  for (const auto& m : genesis_.committee) {
    if (m.node.empty() || !names.insert(m.node).second) {
      throw Error(Errc::InvariantViolation, "committee node names must be unique and non-empty");
    }
    auto id = identity::identity_digest(m.key);
    committee_ids_.insert(id);
    genesis_keys_[id] = m.key;
  }
  for (const auto& d : genesis_.domains) {
    if (!valid_domain_name(d.name)) throw Error(Errc::InvariantViolation, "bad domain name: " + d.name);
    if (operators_.contains(d.name)) throw Error(Errc::InvariantViolation, "duplicate domain " + d.name);
    if (auto p = d.parent(); p && !operators_.contains(*p)) {
      throw Error(Errc::InvariantViolation, "domain " + d.name + " listed before its parent");
    }
    auto& ops = operators_[d.name];
    for (const auto& k : d.operators) {
      auto id = identity::identity_digest(k);
      ops.insert(id);
      genesis_keys_[id] = k;
    }
  }
}

bool LedgerState::domain_exists(std::string_view name) const { return operators_.contains(name); }

bool LedgerState::has_authority(const Digest& submitter, std::string_view domain) const {
  if (!domain_exists(domain)) return false;
  if (committee_ids_.contains(submitter)) return true;
  for (const auto& [name, ops] : operators_) {
    if (is_ancestor_or_self(name, domain) && ops.contains(submitter)) return true;
  }
  return false;
}

std::optional<crypto::PublicKey> LedgerState::key_of(const Digest& submitter) const {
  if (auto it = genesis_keys_.find(submitter); it != genesis_keys_.end()) return it->second;
  if (auto it = identities_.find(submitter);
      it != identities_.end() && it->second.status == identity::Status::Active) {
    return it->second.public_key;
  }
  return std::nullopt;
}

bool LedgerState::visa_revoked(const Digest& subject, std::string_view domain) const {
  return revoked_visas_.contains({subject, std::string(domain)});
}

std::optional<std::string> LedgerState::domain_of_target(const Transaction& tx) const {
  return std::visit(
      Overloaded{
          [](const RegisterIdentifierBody& b) -> std::optional<std::string> { return b.domain; },
          [](const RegisterIdentityBody& b) -> std::optional<std::string> { return b.record.domain; },
          [&](const RevokeBody& b) -> std::optional<std::string> {
            if (!b.identifier) return b.domain;
            auto it = identifiers_.find(*b.identifier);
            if (it == identifiers_.end()) return std::nullopt;
            return it->second.domain;
          },
          [&](const BanBody& b) -> std::optional<std::string> {
            auto it = identities_.find(b.id);
            if (it == identities_.end()) return std::nullopt;
            return it->second.domain;
          },
          [&](const TranslateLinkBody& b) -> std::optional<std::string> {
            auto it = identifiers_.find(b.from);
            if (it == identifiers_.end()) return std::nullopt;
            return it->second.domain;
          },
          [](const AuditAnchorBody& b) -> std::optional<std::string> { return b.domain; },
      },
      tx.body);
}

Reject LedgerState::check(const Transaction& tx) const {
  // Structural validity.
  try {
    std::visit(Overloaded{
                   [](const RegisterIdentifierBody& b) { b.id.validate(); },
                   [](const RegisterIdentityBody& b) {
                     const auto& r = b.record;
                     if (r.id_digest != identity::identity_digest(r.public_key) ||
                         r.status != identity::Status::Active) {
                       throw Error(Errc::InvariantViolation, "bad identity record");
                     }
                   },
                   [](const RevokeBody& b) {
                     if (b.identifier) b.identifier->validate();
                   },
                   [](const BanBody&) {},
                   [](const TranslateLinkBody& b) {
                     b.from.validate();
                     b.to.validate();
                     if (b.from == b.to) throw Error(Errc::InvariantViolation, "self link");
                   },
                   [](const AuditAnchorBody&) {},
               },
               tx.body);
  } catch (const Error&) {
    return Reject::Malformed;
  }

  auto key = key_of(tx.submitter);
  if (!key) return Reject::Unauthorized;
  if (!crypto::verify(*key, tx.signing_bytes(), tx.signature)) return Reject::BadSignature;
  if (applied_.contains(tx.digest())) return Reject::Duplicate;

  auto domain = domain_of_target(tx);
  if (!domain) return Reject::NotFound;

  bool authorized = has_authority(tx.submitter, *domain);
  if (!authorized) {
    // An Active identity may manage identifiers it owns inside its own domain.
    auto self = identities_.find(tx.submitter);
    bool own_domain = self != identities_.end() && self->second.domain == *domain &&
                      domain_exists(*domain);
    if (own_domain) {
      if (auto* b = std::get_if<RegisterIdentifierBody>(&tx.body)) {
        authorized = b->owner == tx.submitter;
      } else if (auto* b = std::get_if<TranslateLinkBody>(&tx.body)) {
        authorized = identifiers_.at(b->from).owner == tx.submitter;
      } else if (auto* b = std::get_if<RevokeBody>(&tx.body); b && b->identifier) {
        authorized = identifiers_.at(*b->identifier).owner == tx.submitter;
      }
    }
  }
  if (!authorized) return Reject::Unauthorized;

  return std::visit(
      Overloaded{
          [&](const RegisterIdentifierBody& b) {
            return identifiers_.contains(b.id) ? Reject::Duplicate : Reject::None;
          },
          [&](const RegisterIdentityBody& b) {
            if (identities_.contains(b.record.id_digest) || genesis_keys_.contains(b.record.id_digest)) {
              return Reject::Duplicate;
            }
            if (banned_biometrics_.contains(b.record.biometric_digest)) return Reject::DuplicateBiometric;
            return Reject::None;
          },
          [&](const RevokeBody& b) {
            if (b.identifier) return identifiers_.at(*b.identifier).revoked ? Reject::Duplicate : Reject::None;
            return visa_revoked(b.visa_subject, b.domain) ? Reject::Duplicate : Reject::None;
          },
          [&](const BanBody& b) {
            return identities_.at(b.id).status == identity::Status::Banned ? Reject::Duplicate
                                                                           : Reject::None;
          },
          [&](const TranslateLinkBody& b) {
            const auto& rec = identifiers_.at(b.from);
            if (rec.revoked) return Reject::NotFound;
            return rec.links.contains(b.to) ? Reject::Duplicate : Reject::None;
          },
          [](const AuditAnchorBody&) { return Reject::None; },
      },
      tx.body);
}

void LedgerState::apply(const Transaction& tx, std::uint64_t height) {
  std::visit(Overloaded{
                 [&](const RegisterIdentifierBody& b) {
                   identifiers_[b.id] = IdentifierRecord{b.id, b.owner, b.domain, {}, false, height};
                 },
                 [&](const RegisterIdentityBody& b) { identities_[b.record.id_digest] = b.record; },
                 [&](const RevokeBody& b) {
                   if (b.identifier) {
                     auto& rec = identifiers_.at(*b.identifier);
                     rec.revoked = true;
                     rec.height = height;
                   } else {
                     revoked_visas_.insert({b.visa_subject, b.domain});
                   }
                 },
                 [&](const BanBody& b) {
                   auto& rec = identities_.at(b.id);
                   rec.status = identity::Status::Banned;
                   banned_biometrics_.insert(rec.biometric_digest);
                 },
                 [&](const TranslateLinkBody& b) {
                   auto& rec = identifiers_.at(b.from);
                   rec.links.insert(b.to);
                   rec.height = height;
                 },
                 [&](const AuditAnchorBody& b) { anchors_.push_back({b, height}); },
             },
             tx.body);
  applied_.insert(tx.digest());
}

IdentifierGraph LedgerState::translation_graph() const {
  IdentifierGraph g;
  for (const auto& [id, rec] : identifiers_) {
    if (rec.revoked) continue;
    g.add_node(id);
    for (const auto& to : rec.links) g.add_edge(id, to);
  }
  return g;
}

// ---------------------------------------------------------------------------
// Chain verification

namespace {

std::string check_block(const LedgerBlock& b, const LedgerBlock* prev, LedgerState* state) {
  if (prev == nullptr) {
    if (b.height != 0) return "genesis height is not 0";
    if (!b.genesis) return "genesis block lacks configuration";
    if (b.prev_hash != kZeroDigest) return "genesis prev_hash is not zero";
    if (b.proposer != kGenesisProposer || b.time != 0 || b.round != 0) return "bad genesis header";
    if (!b.txs.empty() || !b.votes.empty()) return "genesis carries transactions or votes";
    if (b.tx_root != genesis_tx_root(*b.genesis)) return "genesis tx_root mismatch";
    return {};
  }
  if (b.height != prev->height + 1) return "height does not follow predecessor";
  if (b.genesis) return "configuration outside genesis";
  if (b.prev_hash != prev->hash()) return "prev_hash mismatch";
  if (b.tx_root != compute_tx_root(b.txs)) return "tx_root mismatch";
  const auto& committee = state->genesis().committee;
  if (b.proposer != committee[b.round % committee.size()].node) return "proposer out of rotation";
  auto header = vote_message(b.header_hash());
  std::size_t valid = 0;
  for (std::size_t i = 0; i < b.votes.size(); ++i) {
    const auto& v = b.votes[i];
    if (i > 0 && !(b.votes[i - 1].node < v.node)) return "votes unsorted or repeated";
    auto it = std::find_if(committee.begin(), committee.end(),
                           [&](const CommitteeMember& m) { return m.node == v.node; });
    if (it == committee.end()) return "vote from non-member " + v.node;
    if (!crypto::verify(it->key, header, v.signature)) return "bad vote signature from " + v.node;
    ++valid;
  }
  if (2 * valid <= committee.size()) return "votes do not form a strict majority";
  for (const auto& tx : b.txs) {
    auto r = state->check(tx);
    if (r != Reject::None) return "invalid transaction: " + std::string(to_string(r));
    state->apply(tx, b.height);
  }
  return {};
}

}  // namespace

ChainCheck verify_chain(std::span<const LedgerBlock> blocks) {
  if (blocks.empty()) return {false, 0, "empty ledger"};
  std::optional<LedgerState> state;
  for (std::size_t h = 0; h < blocks.size(); ++h) {
    std::string why;
    try {
      if (h == 0) {
        why = check_block(blocks[0], nullptr, nullptr);
        if (why.empty()) state.emplace(*blocks[0].genesis);
      } else {
        why = check_block(blocks[h], &blocks[h - 1], &*state);
      }
    } catch (const Error& e) {
      why = e.what();
    }
    if (!why.empty()) return {false, h, why};
  }
  return {};
}

ChainCheck verify_chain_file(ByteView file) {
  std::vector<LedgerBlock> blocks;
  std::optional<ChainCheck> framing;
  std::size_t pos = 0;
  while (pos < file.size()) {
    auto h = blocks.size();
    if (file.size() - pos < 4) {
      framing = ChainCheck{false, h, "truncated length prefix"};
      break;
    }
    std::uint64_t n = (std::uint64_t{file[pos]} << 24) | (std::uint64_t{file[pos + 1]} << 16) |
                      (std::uint64_t{file[pos + 2]} << 8) | file[pos + 3];
    pos += 4;
    if (n > file.size() - pos) {
      framing = ChainCheck{false, h, "block overruns file"};
      break;
    }
    try {
      blocks.push_back(LedgerBlock::decode(file.subspan(pos, n)));
    } catch (const Error& e) {
      framing = ChainCheck{false, h, std::string("undecodable block: ") + e.what()};
      break;
    }
    pos += n;
  }
  if (blocks.empty() && framing) return *framing;
  auto result = verify_chain(blocks);
  if (!result.ok || !framing) return result;
  return *framing;
}

Bytes serialize_ledger(std::span<const LedgerBlock> blocks) {
  Bytes out;
  for (const auto& b : blocks) {
    auto e = b.encode();
    auto n = static_cast<std::uint32_t>(e.size());
    out.push_back(static_cast<std::uint8_t>(n >> 24));
    out.push_back(static_cast<std::uint8_t>(n >> 16));
    out.push_back(static_cast<std::uint8_t>(n >> 8));
    out.push_back(static_cast<std::uint8_t>(n));
    out.insert(out.end(), e.begin(), e.end());
  }
  return out;
}

std::vector<LedgerBlock> parse_ledger(ByteView file) {
  std::vector<LedgerBlock> blocks;
  std::size_t pos = 0;
  while (pos < file.size()) {
    if (file.size() - pos < 4) throw Error(Errc::TruncatedInput, "truncated length prefix");
    std::uint64_t n = (std::uint64_t{file[pos]} << 24) | (std::uint64_t{file[pos + 1]} << 16) |
                      (std::uint64_t{file[pos + 2]} << 8) | file[pos + 3];
    pos += 4;
    if (n > file.size() - pos) throw Error(Errc::TruncatedInput, "block overruns file");
    blocks.push_back(LedgerBlock::decode(file.subspan(pos, n)));
    pos += n;
  }
  return blocks;
}

Bytes read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot open " + path);
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, ByteView bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::Io, "cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(Errc::Io, "write failed: " + path);
}

void append_block_to_file(const std::string& path, const LedgerBlock& block) {
  auto framed = serialize_ledger(std::span(&block, 1));
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw Error(Errc::Io, "cannot append to " + path);
  out.write(reinterpret_cast<const char*>(framed.data()), static_cast<std::streamsize>(framed.size()));
  if (!out) throw Error(Errc::Io, "append failed: " + path);
}

// ---------------------------------------------------------------------------
// Messages

namespace {

void put_record(Bytes& out, const IdentifierRecord& r) {
  Bytes inner;
  put_identifier(inner, r.id);
  tlv::write_bytes(inner, as_view(r.owner));
  tlv::write_text(inner, r.domain);
  tlv::write_uint(inner, r.revoked ? 1 : 0);
  tlv::write_uint(inner, r.height);
  for (const auto& l : r.links) put_identifier(inner, l);
  tlv::write_element(out, msg::kRecord, inner);
}

IdentifierRecord take_record(ByteView value) {
  tlv::FieldReader f(value);
  IdentifierRecord r;
  r.id = take_identifier(f);
  r.owner = f.digest();
  r.domain = f.text();
  auto revoked = f.uint();
  if (revoked > 1) throw Error(Errc::InvariantViolation, "bad revoked flag");
  r.revoked = revoked == 1;
  r.height = f.uint();
  while (f.next_is(tlv::kIdentifier)) {
    if (!r.links.insert(take_identifier(f)).second) {
      throw Error(Errc::NonCanonicalEncoding, "repeated link");
    }
  }
  f.finish();
  return r;
}

void put_vote_entry(Bytes& out, const Vote& v) {
  Bytes ve;
  tlv::write_text(ve, v.node);
  tlv::write_bytes(ve, v.signature);
  tlv::write_element(out, msg::kVoteEntry, ve);
}

void append(Bytes& out, const Bytes& more) { out.insert(out.end(), more.begin(), more.end()); }

}  // namespace

Bytes encode_message(const Message& m) {
  Bytes inner;
  std::uint8_t type = 0;
  std::visit(Overloaded{
                 [&](const Proposal& p) {
                   type = msg::kProposal;
                   append(inner, p.block.encode());
                   tlv::write_bytes(inner, p.proposer_signature);
                 },
                 [&](const VoteMsg& v) {
                   type = msg::kVote;
                   tlv::write_uint(inner, v.round);
                   tlv::write_bytes(inner, as_view(v.header_hash));
                   put_vote_entry(inner, v.vote);
                 },
                 [&](const Commit& c) {
                   type = msg::kCommit;
                   append(inner, c.block.encode());
                 },
                 [&](const TxSubmit& t) {
                   type = msg::kTxSubmit;
                   append(inner, t.tx.encode());
                 },
                 [&](const QueryReq& q) {
                   type = msg::kQueryReq;
                   put_identifier(inner, q.id);
                 },
                 [&](const QueryResp& r) {
                   type = msg::kQueryResp;
                   tlv::write_uint(inner, r.height);
                   if (r.record) put_record(inner, *r.record);
                 },
             },
             m);
  Bytes out;
  tlv::write_element(out, type, inner);
  return out;
}

Message decode_message(ByteView bytes) {
  tlv::Reader top(bytes, Errc::TruncatedInput);
  auto e = top.next();
  if (!top.done()) throw Error(Errc::LengthMismatch, "trailing octets after message");
  tlv::FieldReader f(e.value);
  auto block = [&] { return decode_block_value(f.element(msg::kBlock).value); };
  Message m;
  switch (e.type) {
    case msg::kProposal: {
      Proposal p;
      p.block = block();
      p.proposer_signature = take_signature(f);
      m = std::move(p);
      break;
    }
    case msg::kVote: {
      VoteMsg v;
      v.round = f.uint();
      v.header_hash = f.digest();
      v.vote = decode_vote(f.element(msg::kVoteEntry).value);
      m = std::move(v);
      break;
    }
    case msg::kCommit: m = Commit{block()}; break;
    case msg::kTxSubmit:
      m = TxSubmit{Transaction::decode_value(f.element(msg::kTransaction).value)};
      break;
    case msg::kQueryReq: m = QueryReq{take_identifier(f)}; break;
    case msg::kQueryResp: {
      QueryResp r;
      r.height = f.uint();
      if (f.next_is(msg::kRecord)) r.record = take_record(f.element(msg::kRecord).value);
      m = std::move(r);
      break;
    }
    default: throw Error(Errc::UnknownCriticalType, "not a registry message");
  }
  f.finish();
  return m;
}

// ---------------------------------------------------------------------------
// RegistryNode

RegistryNode::RegistryNode(std::string name, crypto::SecretKey key, const Genesis& genesis)
    : name_(std::move(name)), key_(std::move(key)), state_(genesis) {
  for (const auto& m : genesis.committee) committee_.push_back(m.node);
  chain_.push_back(make_genesis_block(genesis));
}

std::string RegistryNode::proposer_for(std::uint64_t round) const {
  return committee_[round % committee_.size()];
}

bool RegistryNode::accept_into_pool(const Transaction& tx) {
  auto d = tx.digest();
  if (tickets_.contains(d)) return tickets_[d].state != TicketState::Rejected;
  auto r = state_.check(tx);
  if (r != Reject::None) {
    tickets_[d] = {TicketState::Rejected, 0, r};
    return false;
  }
  tickets_[d] = {TicketState::Pending, 0, Reject::None};
  pool_.push_back(tx);
  return true;
}

Ticket RegistryNode::submit(const Transaction& tx) {
  auto r = state_.check(tx);
  if (r == Reject::BadSignature) throw Error(Errc::BadSignature, "transaction signature invalid");
  if (r == Reject::Unauthorized) {
    throw Error(Errc::Unauthorized, "submitter lacks rights over the target domain");
  }
  accept_into_pool(tx);
  return tx.digest();
}

void RegistryNode::relay(const Transaction& tx) { accept_into_pool(tx); }

TicketStatus RegistryNode::status(const Ticket& t) const {
  auto it = tickets_.find(t);
  return it == tickets_.end() ? TicketStatus{} : it->second;
}

std::optional<Proposal> RegistryNode::propose(std::uint64_t round, std::uint64_t now) {
  if (proposer_for(round) != name_ || voted_rounds_.contains(round) || pool_.empty()) return std::nullopt;
  LedgerState scratch = state_;
  LedgerBlock b;
  b.height = height() + 1;
  b.prev_hash = chain_.back().hash();
  b.proposer = name_;
  b.time = now;
  b.round = round;
  for (const auto& tx : pool_) {
    if (scratch.check(tx) != Reject::None) continue;
    scratch.apply(tx, b.height);
    b.txs.push_back(tx);
  }
  if (b.txs.empty()) return std::nullopt;
  b.tx_root = compute_tx_root(b.txs);
  auto hh = b.header_hash();
  auto sig = key_.sign(vote_message(hh));
  Proposal p{b, Bytes(sig.begin(), sig.end())};
  seen_proposals_[round] = hh;
  voted_rounds_.insert(round);
  leading_ = std::move(b);
  collected_.clear();
  collected_[name_] = p.proposer_signature;
  return p;
}

bool RegistryNode::note_proposal(const Proposal& p) {
  const auto& b = p.block;
  if (b.proposer != proposer_for(b.round) || !b.votes.empty()) return false;
  const auto& committee = state_.genesis().committee;
  auto it = std::find_if(committee.begin(), committee.end(),
                         [&](const CommitteeMember& m) { return m.node == b.proposer; });
  auto hh = b.header_hash();
  if (it == committee.end() || !crypto::verify(it->key, vote_message(hh), p.proposer_signature)) {
    return false;
  }
  auto [seen, inserted] = seen_proposals_.try_emplace(b.round, hh);
  if (!inserted && seen->second != hh) {
    void_rounds_.insert(b.round);
    if (leading_ && leading_->round == b.round) leading_.reset();
    return false;
  }
  return !void_rounds_.contains(b.round);
}

std::optional<VoteMsg> RegistryNode::on_proposal(const Proposal& p) {
  if (!note_proposal(p)) return std::nullopt;
  const auto& b = p.block;
  if (voted_rounds_.contains(b.round)) return std::nullopt;
  if (b.height != height() + 1 || b.genesis || b.prev_hash != chain_.back().hash() || b.txs.empty() ||
      b.tx_root != compute_tx_root(b.txs)) {
    return std::nullopt;
  }
  LedgerState scratch = state_;
  for (const auto& tx : b.txs) {
    if (scratch.check(tx) != Reject::None) return std::nullopt;  // InvalidProposal
    scratch.apply(tx, b.height);
  }
  voted_rounds_.insert(b.round);
  auto hh = b.header_hash();
  auto sig = key_.sign(vote_message(hh));
  return VoteMsg{b.round, hh, Vote{name_, Bytes(sig.begin(), sig.end())}};
}

std::optional<LedgerBlock> RegistryNode::on_vote(const VoteMsg& v) {
  if (!leading_ || leading_->round != v.round || void_rounds_.contains(v.round)) return std::nullopt;
  auto hh = leading_->header_hash();
  if (v.header_hash != hh) return std::nullopt;
  const auto& committee = state_.genesis().committee;
  auto it = std::find_if(committee.begin(), committee.end(),
                         [&](const CommitteeMember& m) { return m.node == v.vote.node; });
  if (it == committee.end() || !crypto::verify(it->key, vote_message(hh), v.vote.signature)) {
    return std::nullopt;
  }
  collected_.try_emplace(v.vote.node, v.vote.signature);
  if (2 * collected_.size() <= committee.size()) return std::nullopt;
  LedgerBlock done = std::move(*leading_);
  leading_.reset();
  for (const auto& [node, sig] : collected_) done.votes.push_back({node, sig});  // map keeps them sorted
  collected_.clear();
  return done;
}

bool RegistryNode::on_commit(const LedgerBlock& block) {
  if (block.height != height() + 1) return false;
  LedgerState next = state_;
  std::string why;
  try {
    why = check_block(block, &chain_.back(), &next);
  } catch (const Error& e) {
    why = e.what();
  }
  if (!why.empty()) return false;
  state_ = std::move(next);
  chain_.push_back(block);
  if (leading_ && leading_->height <= block.height) {
    leading_.reset();
    collected_.clear();
  }
  std::set<Digest> included;
  for (const auto& tx : block.txs) {
    auto d = tx.digest();
    included.insert(d);
    tickets_[d] = {TicketState::Committed, block.height, Reject::None};
  }
  std::vector<Transaction> keep;
  for (auto& tx : pool_) {
    auto d = tx.digest();
    if (included.contains(d)) continue;
    auto r = state_.check(tx);
    if (r != Reject::None) {
      tickets_[d] = {TicketState::Rejected, 0, r};
      continue;
    }
    keep.push_back(std::move(tx));
  }
  pool_ = std::move(keep);
  return true;
}

IdentifierRecord RegistryNode::resolve(const Identifier& id) const {
  auto it = state_.identifiers().find(id);
  if (it == state_.identifiers().end()) throw Error(Errc::NotFound, id.to_string());
  return it->second;
}

QueryResp RegistryNode::query(const Identifier& id) const {
  QueryResp r;
  r.height = height();
  if (auto it = state_.identifiers().find(id); it != state_.identifiers().end()) r.record = it->second;
  return r;
}

std::optional<identity::IdentityRecord> RegistryNode::find_identity(const Digest& id) const {
  auto it = state_.identities().find(id);
  if (it == state_.identities().end()) return std::nullopt;
  return it->second;
}

bool RegistryNode::biometric_banned(const Digest& biometric) const {
  return state_.biometric_banned(biometric);
}

bool RegistryNode::visa_revoked(const Digest& subject, std::string_view domain) const {
  return state_.visa_revoked(subject, domain);
}

// ---------------------------------------------------------------------------
// RegistryClient

Transaction RegistryClient::submit(TxBody body) {
  auto tx = make_transaction(std::move(body), key_, nonce_++);
  send_(tx);
  return tx;
}

void RegistryClient::submit_identity(const identity::IdentityRecord& record) {
  submit(RegisterIdentityBody{record});
}

void RegistryClient::submit_ban(const Digest& id) { submit(BanBody{id}); }

void RegistryClient::record_visa_revocation(const Digest& subject, const std::string& domain) {
  submit(RevokeBody{std::nullopt, subject, domain});
}

// ---------------------------------------------------------------------------
// Committee

crypto::Seed Committee::node_seed(std::uint64_t seed, std::size_t index) {
  Bytes material;
  static constexpr std::string_view kTag = "cogmin-committee";
  material.assign(kTag.begin(), kTag.end());
  put_be64(material, seed);
  put_be64(material, index);
  return crypto::sha256(material);
}

Committee::Committee(std::size_t n, std::uint64_t seed, std::vector<Domain> domains)
    : seed_(seed), faults_(n, NodeFault::Honest), round_(1), rng_(seed) {
  if (n == 0) throw Error(Errc::InvariantViolation, "committee needs at least one node");
  for (std::size_t i = 0; i < n; ++i) {
    genesis_.committee.push_back({"r" + std::to_string(i), member_key(i).public_key()});
  }
  genesis_.domains = std::move(domains);
  for (std::size_t i = 0; i < n; ++i) {
    nodes_.push_back(std::make_unique<RegistryNode>(genesis_.committee[i].node, member_key(i), genesis_));
  }
}

crypto::SecretKey Committee::member_key(std::size_t i) const { return crypto::SecretKey(node_seed(seed_, i)); }

Ticket Committee::submit(const Transaction& tx) {
  std::optional<Ticket> ticket;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (faults_[i] == NodeFault::Crashed) continue;
    if (!ticket) {
      ticket = nodes_[i]->submit(tx);
    } else {
      nodes_[i]->relay(tx);
    }
  }
  if (!ticket) throw Error(Errc::NoQuorum, "no live registry node");
  return *ticket;
}

RoundOutcome Committee::run_round(std::uint64_t now) {
  RoundOutcome out;
  out.round = round_++;
  const std::size_t n = nodes_.size();
  const std::size_t lead = out.round % n;
  out.proposer = nodes_[lead]->name();
  if (faults_[lead] == NodeFault::Crashed) return out;

  auto proposal = nodes_[lead]->propose(out.round, now);
  if (!proposal) return out;

  std::vector<std::optional<Proposal>> delivered(n);
  std::size_t k = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (i == lead || faults_[i] == NodeFault::Crashed) continue;
    delivered[i] = proposal;
    if (faults_[lead] == NodeFault::Equivocator && (k++ % 2) == 1) {
      Proposal alt = *proposal;
      alt.block.time += 1;
      auto sig = member_key(lead).sign(vote_message(alt.block.header_hash()));
      alt.proposer_signature.assign(sig.begin(), sig.end());
      delivered[i] = std::move(alt);
    }
  }
  // Every live node echoes what it received to every other live node.
  for (std::size_t i = 0; i < n; ++i) {
    if (faults_[i] == NodeFault::Crashed) continue;
    for (const auto& p : delivered) {
      if (p) nodes_[i]->note_proposal(*p);
    }
  }

  std::optional<LedgerBlock> block;
  for (std::size_t i = 0; i < n && !block; ++i) {
    if (!delivered[i]) continue;
    auto vote = nodes_[i]->on_proposal(*delivered[i]);
    if (faults_[i] == NodeFault::ArbitraryVoter) {
      switch (rng_() % 3) {
        case 0: vote.reset(); break;
        case 1:
          if (vote) {
            for (auto& b : vote->vote.signature) b = static_cast<std::uint8_t>(rng_());
          }
          break;
        default: {
          Digest wrong{};
          for (auto& b : wrong) b = static_cast<std::uint8_t>(rng_());
          auto sig = member_key(i).sign(vote_message(wrong));
          vote = VoteMsg{out.round, wrong, Vote{nodes_[i]->name(), Bytes(sig.begin(), sig.end())}};
          break;
        }
      }
    }
    if (vote) block = nodes_[lead]->on_vote(*vote);
  }
  if (!block) return out;
  for (std::size_t i = 0; i < n; ++i) {
    if (faults_[i] != NodeFault::Crashed) nodes_[i]->on_commit(*block);
  }
  out.block = std::move(block);
  return out;
}

RoundOutcome consensus_round(Committee& committee, std::uint64_t now) { return committee.run_round(now); }

}  // namespace cogmin::registry
