#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cogmin/registry.hpp"
#include "registry_support.hpp"
#include "support.hpp"

using namespace cogmin;
using namespace cogmin::registry;
using testsupport::operator_key;
using testsupport::register_item;

namespace {

bool is_prefix_chain(const std::vector<LedgerBlock>& a, const std::vector<LedgerBlock>& b) {
  auto n = std::min(a.size(), b.size());
  return std::equal(a.begin(), a.begin() + static_cast<std::ptrdiff_t>(n), b.begin());
}

}  // namespace

TEST_CASE("domain hierarchy") {
  CHECK(Domain{"cn.edu", {}}.parent() == "cn");
  CHECK_FALSE(Domain{"cn", {}}.parent().has_value());
  CHECK(is_ancestor_or_self("cn", "cn.edu"));
  CHECK(is_ancestor_or_self("cn.edu", "cn.edu"));
  CHECK_FALSE(is_ancestor_or_self("cn.edu", "cn"));
  CHECK_FALSE(is_ancestor_or_self("cn", "cnx.edu"));
}

TEST_CASE("register and resolve through a committee") {
  Committee c(4, 9, testsupport::edu_domains());
  auto t = c.submit(register_item(0));
  CHECK(c.node(0).status(t).state == TicketState::Pending);
  RoundOutcome r;
  for (int i = 0; i < 4 && !r.block; ++i) r = c.run_round(100);
  REQUIRE(r.block);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(c.node(i).height() == 1);
    CHECK(c.node(i).status(t).state == TicketState::Committed);
    auto rec = c.node(i).resolve(Identifier::content("/edu/item0"));
    CHECK(rec.domain == "edu");
    CHECK(rec.height == 1);
  }
  try {
    c.node(0).resolve(Identifier::content("/edu/nothing"));
    FAIL("resolved an unregistered identifier");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::NotFound);
  }
  CHECK(verify_chain(c.node(2).chain()).ok);

  auto again = c.submit(register_item(0));
  CHECK(c.node(0).status(again).state == TicketState::Committed);
  auto dup = make_transaction(RegisterIdentifierBody{Identifier::content("/edu/item0"), Digest{}, "edu"},
                              operator_key(), 99);
  auto td = c.submit(dup);
  c.run_round(200);
  CHECK(c.node(0).status(td).state != TicketState::Committed);
  CHECK(c.node(0).state().check(dup) == Reject::Duplicate);
}

TEST_CASE("authority is checked on submit") {
  Committee c(3, 2, testsupport::edu_domains());
  crypto::SecretKey stranger(crypto::Seed{0x51});
  auto tx = make_transaction(RegisterIdentifierBody{Identifier::content("/edu/x"), Digest{}, "edu"}, stranger, 1);
  try {
    c.node(0).submit(tx);
    FAIL("stranger registered");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::Unauthorized);
  }

  auto forged = register_item(5);
  forged.nonce += 1;
  try {
    c.node(0).submit(forged);
    FAIL("forged signature accepted");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::BadSignature);
  }

  // The edu operator also governs edu.lab but not a sibling root.
  auto child = make_transaction(RegisterIdentifierBody{Identifier::content("/lab/x"), Digest{}, "edu.lab"},
                                operator_key(), 7);
  CHECK(c.node(0).state().check(child) == Reject::None);
  auto nowhere = make_transaction(RegisterIdentifierBody{Identifier::content("/x"), Digest{}, "org"},
                                  operator_key(), 8);
  CHECK(c.node(0).state().check(nowhere) == Reject::Unauthorized);
  auto ghost_ban = make_transaction(BanBody{Digest{0x42}}, operator_key(), 9);
  CHECK(c.node(0).state().check(ghost_ban) == Reject::NotFound);

  // Committee members hold root authority.
  auto root = make_transaction(RegisterIdentifierBody{Identifier::content("/r"), Digest{}, "edu"},
                               c.member_key(1), 1);
  CHECK(c.node(0).state().check(root) == Reject::None);
}

TEST_CASE("identities, bans and links") {
  Committee c(3, 3, testsupport::edu_domains());
  std::vector<Transaction> sent;
  RegistryClient op(operator_key(), [&](const Transaction& tx) { sent.push_back(tx); c.submit(tx); });
  auto settle = [&] {
    for (int i = 0; i < 3; ++i) c.run_round();
  };

  auto alice = identity::generate_identity(c.node(0), op, Digest{1}, Digest{2}, "edu", crypto::Seed{1});
  settle();
  REQUIRE(c.node(1).find_identity(alice.record.id_digest).has_value());

  op.submit(RegisterIdentifierBody{Identifier::content("/edu/a"), Digest{}, "edu"});
  op.submit(RegisterIdentifierBody{Identifier::ip("10.0.0.1"), Digest{}, "edu"});
  settle();
  op.submit(TranslateLinkBody{Identifier::content("/edu/a"), Identifier::ip("10.0.0.1")});
  settle();
  auto graph = c.node(2).state().translation_graph();
  CHECK(translate(graph, Identifier::content("/edu/a"), IdType::Ip) == Identifier::ip("10.0.0.1"));

  identity::ban_identity(c.node(0), op, alice.record.id_digest);
  settle();
  CHECK(c.node(2).find_identity(alice.record.id_digest)->status == identity::Status::Banned);
  CHECK(c.node(2).biometric_banned(Digest{2}));
  try {
    identity::generate_identity(c.node(0), op, Digest{1}, Digest{2}, "edu");
    FAIL("banned biometric re-enrolled");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::DuplicateBiometric);
  }

  op.record_visa_revocation(alice.record.id_digest, "edu");
  settle();
  CHECK(c.node(1).visa_revoked(alice.record.id_digest, "edu"));

  CHECK(verify_chain(c.node(0).chain()).ok);
  for (std::size_t i = 1; i < 3; ++i) CHECK(c.node(i).chain() == c.node(0).chain());
}

TEST_CASE("rounds tolerate one crashed member") {
  for (std::size_t n : {3u, 4u, 5u}) {
    for (std::size_t crashed = 0; crashed < n; ++crashed) {
      Committee c(n, 40 + n, testsupport::edu_domains());
      c.set_fault(crashed, NodeFault::Crashed);
      for (std::uint64_t tx = 0; tx < 3; ++tx) {
        c.submit(register_item(tx));
        std::uint64_t start = c.next_round();
        std::size_t live = crashed == 0 ? 1 : 0;
        auto before = c.node(live).height();
        while (c.node(live).height() == before) {
          c.run_round();
          REQUIRE(c.next_round() - start <= n);
        }
      }
      for (std::size_t i = 0; i < n; ++i) {
        if (i == crashed) {
          CHECK(c.node(i).height() == 0);
          continue;
        }
        CHECK(c.node(i).height() == 3);
        CHECK(verify_chain(c.node(i).chain()).ok);
      }
    }
  }
}

TEST_CASE("an arbitrary voter cannot fork the chain") {
  for (std::size_t n : {3u, 4u, 5u}) {
    for (std::size_t bad = 0; bad < n; ++bad) {
      Committee c(n, 70 + bad, testsupport::edu_domains());
      c.set_fault(bad, NodeFault::ArbitraryVoter);
      for (std::uint64_t tx = 0; tx < 4; ++tx) {
        c.submit(register_item(tx));
        std::size_t honest = bad == 0 ? 1 : 0;
        auto before = c.node(honest).height();
        std::uint64_t start = c.next_round();
        while (c.node(honest).height() == before) {
          c.run_round();
          REQUIRE(c.next_round() - start <= n);
        }
      }
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) CHECK(is_prefix_chain(c.node(i).chain(), c.node(j).chain()));
      }
    }
  }
}

TEST_CASE("an equivocating proposer voids its round") {
  Committee c(4, 5, testsupport::edu_domains());
  c.submit(register_item(0));
  auto lead = c.next_round() % 4;
  c.set_fault(lead, NodeFault::Equivocator);
  auto r = c.run_round();
  CHECK_FALSE(r.block);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(c.node(i).height() == 0);
    if (i != lead) CHECK(c.node(i).round_void(r.round));
  }
  c.set_fault(lead, NodeFault::Honest);
  for (int i = 0; i < 4 && c.node(0).height() == 0; ++i) c.run_round();
  CHECK(c.node(0).height() == 1);
}

TEST_CASE("no quorum without a strict majority") {
  Committee c(4, 6, testsupport::edu_domains());
  c.submit(register_item(0));
  auto lead = c.next_round() % 4;
  c.set_fault((lead + 1) % 4, NodeFault::Crashed);
  c.set_fault((lead + 2) % 4, NodeFault::Crashed);
  auto r = c.run_round();
  CHECK_FALSE(r.block);
  CHECK(r.failure == Errc::NoQuorum);
}

TEST_CASE("verify_chain finds the first bad block") {
  auto chain = testsupport::build_chain(4, 6);
  REQUIRE(verify_chain(chain).ok);

  for (std::size_t h = 1; h < chain.size(); ++h) {
    auto bad = chain;
    bad[h].votes.resize(2);  // two of four is not a strict majority
    auto check = verify_chain(bad);
    CHECK_FALSE(check.ok);
    CHECK(check.first_bad_height == h);
  }

  auto reordered = chain;
  std::swap(reordered[2], reordered[3]);
  CHECK(verify_chain(reordered).first_bad_height == 2);

  auto wrong_proposer = chain;
  wrong_proposer[4].proposer = "r9";
  CHECK(verify_chain(wrong_proposer).first_bad_height == 4);

  auto extra_tx = chain;
  extra_tx[3].txs.push_back(register_item(500));
  CHECK(verify_chain(extra_tx).first_bad_height == 3);

  auto bad_genesis = chain;
  bad_genesis[0].genesis->domains.clear();
  CHECK(verify_chain(bad_genesis).first_bad_height == 0);
}

TEST_CASE("single-octet ledger corruption is attributed to its block") {
  auto chain = testsupport::build_chain(3, 5);
  auto file = serialize_ledger(chain);
  REQUIRE(verify_chain_file(file).ok);
  CHECK(parse_ledger(file) == chain);

  std::vector<std::size_t> starts;
  std::size_t pos = 0;
  for (const auto& b : chain) {
    starts.push_back(pos);
    pos += 4 + b.encode().size();
  }
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 300; ++trial) {
    auto at = rng() % file.size();
    auto corrupted = file;
    corrupted[at] ^= static_cast<std::uint8_t>(1 + rng() % 255);
    auto owner = static_cast<std::size_t>(std::upper_bound(starts.begin(), starts.end(), at) - starts.begin()) - 1;
    auto check = verify_chain_file(corrupted);
    INFO("offset " << at);
    REQUIRE_FALSE(check.ok);
    CHECK(check.first_bad_height == owner);
  }

  Bytes truncated(file.begin(), file.end() - 3);
  CHECK(verify_chain_file(truncated).first_bad_height == chain.size() - 1);
}

TEST_CASE("blocks, transactions and messages round-trip") {
  auto chain = testsupport::build_chain(3, 2);
  for (const auto& b : chain) CHECK(LedgerBlock::decode(b.encode()) == b);

  auto tx = register_item(3);
  CHECK(decode_message(encode_message(TxSubmit{tx})) == Message{TxSubmit{tx}});

  Committee c(3, 1, testsupport::edu_domains());
  c.submit(register_item(0));
  auto lead = c.next_round() % 3;
  auto p = c.node(lead).propose(c.next_round(), 50);
  REQUIRE(p);
  CHECK(decode_message(encode_message(*p)) == Message{*p});
  auto vote = c.node((lead + 1) % 3).on_proposal(*p);
  REQUIRE(vote);
  CHECK(decode_message(encode_message(*vote)) == Message{*vote});
  auto block = c.node(lead).on_vote(*vote);
  REQUIRE(block);
  CHECK(decode_message(encode_message(Commit{*block})) == Message{Commit{*block}});

  CHECK(decode_message(encode_message(QueryReq{Identifier::content("/q")})) ==
        Message{QueryReq{Identifier::content("/q")}});
  CHECK(decode_message(encode_message(QueryResp{std::nullopt, 4})) == Message{QueryResp{std::nullopt, 4}});

  auto wire = encode_message(TxSubmit{tx});
  wire.push_back(0);
  CHECK_THROWS_AS(decode_message(wire), Error);
}
