#pragma once

#include "cogmin/codec.hpp"
#include "cogmin/crypto.hpp"
#include "cogmin/customs.hpp"
#include "cogmin/identifier.hpp"
#include "cogmin/identity.hpp"

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <variant>
#include <vector>

/// Multi-identifier registry: hierarchical domains, identifier and identity
/// registration, resolution and translation, replicated through a
/// hash-chained ledger committed by a simplified propose/majority-vote round
/// (a stand-in for PPoV: round-robin proposer, single vote phase).
namespace cogmin::registry {

// ---------------------------------------------------------------------------
// Governance configuration

/// Domains are dot-separated label paths read top-down: "cn" is top level,
/// "cn.edu" its child.
struct Domain {
  std::string name;
  std::vector<crypto::PublicKey> operators;

  std::optional<std::string> parent() const;
  friend bool operator==(const Domain&, const Domain&) = default;
};

bool is_ancestor_or_self(std::string_view ancestor, std::string_view domain);

struct CommitteeMember {
  std::string node;
  crypto::PublicKey key{};
  friend bool operator==(const CommitteeMember&, const CommitteeMember&) = default;
};

/// Root committee and domain operators; carried by the height-0 block.
struct Genesis {
  std::vector<CommitteeMember> committee;
  std::vector<Domain> domains;

  Bytes encode() const;
  static Genesis decode(ByteView value);
  friend bool operator==(const Genesis&, const Genesis&) = default;
};

// ---------------------------------------------------------------------------
// Transactions

enum class TxKind : std::uint8_t {
  RegisterIdentifier = 1,
  RegisterIdentity = 2,
  Revoke = 3,
  Ban = 4,
  TranslateLink = 5,
  AuditAnchor = 6,
};

std::string_view to_string(TxKind kind);

struct RegisterIdentifierBody {
  Identifier id;
  Digest owner{};
  std::string domain;
  friend bool operator==(const RegisterIdentifierBody&, const RegisterIdentifierBody&) = default;
};

struct RegisterIdentityBody {
  identity::IdentityRecord record;
  friend bool operator==(const RegisterIdentityBody&, const RegisterIdentityBody&) = default;
};

/// Revokes either a registered identifier or a customs visa.
struct RevokeBody {
  std::optional<Identifier> identifier;
  Digest visa_subject{};
  std::string domain;  // issuing domain for visa revocations
  friend bool operator==(const RevokeBody&, const RevokeBody&) = default;
};

struct BanBody {
  Digest id{};
  friend bool operator==(const BanBody&, const BanBody&) = default;
};

struct TranslateLinkBody {
  Identifier from;
  Identifier to;
  friend bool operator==(const TranslateLinkBody&, const TranslateLinkBody&) = default;
};

struct AuditAnchorBody {
  std::string router;
  std::string domain;
  Digest head_hash{};
  std::uint64_t record_count = 0;
  friend bool operator==(const AuditAnchorBody&, const AuditAnchorBody&) = default;
};

using TxBody = std::variant<RegisterIdentifierBody, RegisterIdentityBody, RevokeBody, BanBody,
                            TranslateLinkBody, AuditAnchorBody>;

struct Transaction {
  TxBody body;
  Digest submitter{};
  std::uint64_t nonce = 0;
  Bytes signature;

  TxKind kind() const noexcept;
  Bytes signing_bytes() const;
  Bytes encode() const;
  static Transaction decode_value(ByteView value);
  Digest digest() const;
  friend bool operator==(const Transaction&, const Transaction&) = default;
};

Transaction make_transaction(TxBody body, const crypto::SecretKey& submitter, std::uint64_t nonce);

// ---------------------------------------------------------------------------
// Blocks

struct Vote {
  std::string node;
  Bytes signature;
  friend bool operator==(const Vote&, const Vote&) = default;
};

struct LedgerBlock {
  std::uint64_t height = 0;
  Digest prev_hash{};
  Digest tx_root{};
  std::string proposer;
  std::uint64_t time = 0;
  std::uint64_t round = 0;
  std::optional<Genesis> genesis;  // height 0 only
  std::vector<Transaction> txs;
  std::vector<Vote> votes;  // sorted by node name

  /// What voters sign: every field except the votes.
  Digest header_hash() const;
  /// Chains blocks: covers the full canonical encoding including votes.
  Digest hash() const;
  Bytes encode() const;
  static LedgerBlock decode(ByteView bytes);
  friend bool operator==(const LedgerBlock&, const LedgerBlock&) = default;
};

Digest compute_tx_root(const std::vector<Transaction>& txs);
Digest genesis_tx_root(const Genesis& genesis);
LedgerBlock make_genesis_block(Genesis genesis);
Bytes vote_message(const Digest& header_hash);

// ---------------------------------------------------------------------------
// Replicated state

struct IdentifierRecord {
  Identifier id;
  Digest owner{};
  std::string domain;
  std::set<Identifier> links;
  bool revoked = false;
  std::uint64_t height = 0;
  friend bool operator==(const IdentifierRecord&, const IdentifierRecord&) = default;
};

struct AnchorRecord {
  AuditAnchorBody body;
  std::uint64_t height = 0;
};

/// Why a transaction cannot be applied. `None` means valid.
enum class Reject {
  None,
  BadSignature,
  Unauthorized,
  Duplicate,
  NotFound,
  DuplicateBiometric,
  Malformed,
};

std::string_view to_string(Reject r);

/// State obtained by replaying the ledger from genesis.
class LedgerState {
 public:
  explicit LedgerState(Genesis genesis);

  Reject check(const Transaction& tx) const;
  /// Caller guarantees check(tx) == None.
  void apply(const Transaction& tx, std::uint64_t height);

  /// True iff `submitter` holds authority over `domain` through the root
  /// committee or an operator key of the domain or one of its ancestors.
  bool has_authority(const Digest& submitter, std::string_view domain) const;
  std::optional<crypto::PublicKey> key_of(const Digest& submitter) const;

  const Genesis& genesis() const noexcept { return genesis_; }
  const std::map<Identifier, IdentifierRecord>& identifiers() const noexcept { return identifiers_; }
  const std::map<Digest, identity::IdentityRecord>& identities() const noexcept { return identities_; }
  bool biometric_banned(const Digest& bio) const { return banned_biometrics_.contains(bio); }
  bool visa_revoked(const Digest& subject, std::string_view domain) const;
  const std::vector<AnchorRecord>& anchors() const noexcept { return anchors_; }
  bool domain_exists(std::string_view name) const;
  bool applied(const Digest& tx_digest) const { return applied_.contains(tx_digest); }

  IdentifierGraph translation_graph() const;

 private:
  std::optional<std::string> domain_of_target(const Transaction& tx) const;

  Genesis genesis_;
  std::map<std::string, std::set<Digest>, std::less<>> operators_;
  std::set<Digest> committee_ids_;
  std::map<Digest, crypto::PublicKey> genesis_keys_;
  std::map<Identifier, IdentifierRecord> identifiers_;
  std::map<Digest, identity::IdentityRecord> identities_;
  std::set<Digest> banned_biometrics_;
  std::set<std::pair<Digest, std::string>> revoked_visas_;
  std::vector<AnchorRecord> anchors_;
  std::set<Digest> applied_;
};

// ---------------------------------------------------------------------------
// Chain verification and persistence

struct ChainCheck {
  bool ok = true;
  std::uint64_t first_bad_height = 0;
  std::string reason;
};

/// Recomputes every prev_hash, tx_root, proposer rotation, vote signature
/// and quorum, and replays every transaction against the evolving state.
ChainCheck verify_chain(std::span<const LedgerBlock> blocks);
/// Same over a ledger file image; undecodable framing is attributed to the
/// block it belongs to.
ChainCheck verify_chain_file(ByteView file);

/// Append-only file of 4-octet big-endian length-prefixed canonical blocks.
Bytes serialize_ledger(std::span<const LedgerBlock> blocks);
std::vector<LedgerBlock> parse_ledger(ByteView file);
void append_block_to_file(const std::string& path, const LedgerBlock& block);
Bytes read_file(const std::string& path);
void write_file(const std::string& path, ByteView bytes);

// ---------------------------------------------------------------------------
// Node-to-node messages (type codes 0x60-0x65)

namespace msg {
inline constexpr std::uint8_t kProposal = 0x60;
inline constexpr std::uint8_t kVote = 0x61;
inline constexpr std::uint8_t kCommit = 0x62;
inline constexpr std::uint8_t kTxSubmit = 0x63;
inline constexpr std::uint8_t kQueryReq = 0x64;
inline constexpr std::uint8_t kQueryResp = 0x65;
inline constexpr std::uint8_t kTransaction = 0x66;
inline constexpr std::uint8_t kBlock = 0x67;
inline constexpr std::uint8_t kVoteEntry = 0x68;
inline constexpr std::uint8_t kGenesis = 0x6C;
inline constexpr std::uint8_t kRecord = 0x6D;
}  // namespace msg

struct Proposal {
  LedgerBlock block;  // without votes
  Bytes proposer_signature;  // over vote_message(block.header_hash())
  friend bool operator==(const Proposal&, const Proposal&) = default;
};

struct VoteMsg {
  std::uint64_t round = 0;
  Digest header_hash{};
  Vote vote;
  friend bool operator==(const VoteMsg&, const VoteMsg&) = default;
};

struct Commit {
  LedgerBlock block;
  friend bool operator==(const Commit&, const Commit&) = default;
};

struct TxSubmit {
  Transaction tx;
  friend bool operator==(const TxSubmit&, const TxSubmit&) = default;
};

struct QueryReq {
  Identifier id;
  friend bool operator==(const QueryReq&, const QueryReq&) = default;
};

struct QueryResp {
  std::optional<IdentifierRecord> record;
  std::uint64_t height = 0;
  friend bool operator==(const QueryResp&, const QueryResp&) = default;
};

using Message = std::variant<Proposal, VoteMsg, Commit, TxSubmit, QueryReq, QueryResp>;

Bytes encode_message(const Message& m);
Message decode_message(ByteView bytes);

// ---------------------------------------------------------------------------
// Registry node state machine

enum class TicketState { Unknown, Pending, Committed, Rejected };

struct TicketStatus {
  TicketState state = TicketState::Unknown;
  std::uint64_t height = 0;
  Reject reason = Reject::None;
};

using Ticket = Digest;

/// One committee member. Single-threaded: feed it messages in order.
class RegistryNode : public identity::RegistryView {
 public:
  RegistryNode(std::string name, crypto::SecretKey key, const Genesis& genesis);

  const std::string& name() const noexcept { return name_; }
  crypto::PublicKey public_key() const { return key_.public_key(); }

  /// Validates and pools a transaction. Throws Error(BadSignature) or
  /// Error(Unauthorized); other rejections come back through the ticket.
  Ticket submit(const Transaction& tx);
  /// Pools a transaction relayed by a peer (same checks, never throws).
  void relay(const Transaction& tx);
  TicketStatus status(const Ticket& t) const;
  std::size_t pending() const noexcept { return pool_.size(); }

  std::string proposer_for(std::uint64_t round) const;

  /// Builds and signs a proposal if this node leads `round`, has no block
  /// for it yet and holds valid pending transactions.
  std::optional<Proposal> propose(std::uint64_t round, std::uint64_t now);
  /// Records a signed proposal seen directly or echoed by a peer. Returns
  /// false when it is unsigned by the round's proposer or conflicts with
  /// another proposal of the same round (the round becomes void).
  bool note_proposal(const Proposal& p);
  /// Validates a proposal; returns this node's vote or nothing (invalid,
  /// stale, or equivocation detected for the round).
  std::optional<VoteMsg> on_proposal(const Proposal& p);
  /// Leader side: returns the finished block once votes form a strict majority.
  std::optional<LedgerBlock> on_vote(const VoteMsg& v);
  /// Verifies and applies a committed block; false if rejected.
  bool on_commit(const LedgerBlock& block);
  /// Marks `round` void (equivocation observed).
  bool round_void(std::uint64_t round) const { return void_rounds_.contains(round); }

  IdentifierRecord resolve(const Identifier& id) const;  // throws Error(NotFound)
  std::uint64_t height() const noexcept { return chain_.size() - 1; }
  const std::vector<LedgerBlock>& chain() const noexcept { return chain_; }
  const LedgerState& state() const noexcept { return state_; }
  QueryResp query(const Identifier& id) const;

  std::optional<identity::IdentityRecord> find_identity(const Digest& id) const override;
  bool biometric_banned(const Digest& biometric) const override;
  bool visa_revoked(const Digest& subject, std::string_view domain) const override;

 private:
  bool accept_into_pool(const Transaction& tx);

  std::string name_;
  crypto::SecretKey key_;
  std::vector<std::string> committee_;  // node names in genesis order
  std::vector<LedgerBlock> chain_;
  LedgerState state_;
  std::vector<Transaction> pool_;
  std::map<Ticket, TicketStatus> tickets_;
  std::map<std::uint64_t, Digest> seen_proposals_;  // round -> header hash
  std::set<std::uint64_t> void_rounds_;
  std::set<std::uint64_t> voted_rounds_;
  std::optional<LedgerBlock> leading_;  // block this node is collecting votes for
  std::map<std::string, Bytes> collected_;
};

/// Submits signed transactions on behalf of one key; implements the sinks
/// used by the identity and customs modules.
class RegistryClient : public identity::LedgerSink, public customs::RevocationSink {
 public:
  using Send = std::function<void(const Transaction&)>;
  RegistryClient(crypto::SecretKey key, Send send, std::uint64_t first_nonce = 1)
      : key_(std::move(key)), send_(std::move(send)), nonce_(first_nonce) {}

  Transaction submit(TxBody body);

  void submit_identity(const identity::IdentityRecord& record) override;
  void submit_ban(const Digest& id) override;
  void record_visa_revocation(const Digest& subject, const std::string& domain) override;

 private:
  crypto::SecretKey key_;
  Send send_;
  std::uint64_t nonce_;
};

// ---------------------------------------------------------------------------
// Synchronous committee driver

enum class NodeFault { Honest, Crashed, ArbitraryVoter, Equivocator };

struct RoundOutcome {
  std::uint64_t round = 0;
  std::string proposer;
  std::optional<LedgerBlock> block;
  Errc failure = Errc::NoQuorum;  // meaningful only when !block
};

/// A committee whose nodes exchange messages by direct calls, one
/// propose/vote/commit exchange per round.
class Committee {
 public:
  /// Node i gets the deterministic key derived from `seed` and i.
  Committee(std::size_t n, std::uint64_t seed, std::vector<Domain> domains = {});

  static crypto::Seed node_seed(std::uint64_t seed, std::size_t index);

  std::size_t size() const noexcept { return nodes_.size(); }
  RegistryNode& node(std::size_t i) { return *nodes_.at(i); }
  const RegistryNode& node(std::size_t i) const { return *nodes_.at(i); }
  const Genesis& genesis() const noexcept { return genesis_; }
  void set_fault(std::size_t i, NodeFault f) { faults_.at(i) = f; }
  NodeFault fault(std::size_t i) const { return faults_.at(i); }
  crypto::SecretKey member_key(std::size_t i) const;

  /// Submits at the first live node and relays to the other live nodes.
  Ticket submit(const Transaction& tx);
  RoundOutcome run_round(std::uint64_t now = 0);
  std::uint64_t next_round() const noexcept { return round_; }

 private:
  std::uint64_t seed_;
  Genesis genesis_;
  std::vector<std::unique_ptr<RegistryNode>> nodes_;
  std::vector<NodeFault> faults_;
  std::uint64_t round_ = 0;
  std::mt19937_64 rng_;
};

/// One propose/vote/commit exchange over `committee`.
RoundOutcome consensus_round(Committee& committee, std::uint64_t now = 0);

}  // namespace cogmin::registry
