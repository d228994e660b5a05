#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cogmin/identifier.hpp"
#include "support.hpp"

#include <algorithm>

using namespace cogmin;

namespace {

Identifier C(std::string_view s) { return Identifier::content(s); }
Identifier I(std::string_view s) { return Identifier::ip(s); }

/// Every simple path from src, breadth first; returns the nodes of `target`
/// type at the smallest path length.
std::vector<Identifier> nearest_by_enumeration(const IdentifierGraph& g, const Identifier& src, IdType target) {
  std::vector<std::vector<Identifier>> paths{{src}};
  std::vector<Identifier> hits;
  while (!paths.empty() && hits.empty()) {
    std::vector<std::vector<Identifier>> next;
    for (const auto& path : paths) {
      if (path.back().type() == target) hits.push_back(path.back());
    }
    if (!hits.empty()) break;
    for (const auto& path : paths) {
      for (const auto& nb : g.neighbors(path.back())) {
        if (std::find(path.begin(), path.end(), nb) != path.end()) continue;
        auto extended = path;
        extended.push_back(nb);
        next.push_back(std::move(extended));
      }
    }
    paths = std::move(next);
  }
  return hits;
}

}  // namespace

TEST_CASE("textual syntax round-trips") {
  for (const char* text : {"content:/a/b", "service:/printer/floor3", "ip:10.0.0.1", "ip:2001:db8::1",
                           "hyp:1.5,-2.25", "identity:" "00112233445566778899aabbccddeeff00112233445566778899aabbccddeeff"}) {
    auto id = Identifier::parse(text);
    CHECK(Identifier::parse(id.to_string()) == id);
  }
  CHECK(Identifier::parse("content:/a/b").size() == 2);
  CHECK(Identifier::parse("ip:10.0.0.1").components().front() == Bytes{10, 0, 0, 1});
}

TEST_CASE("malformed identifiers are rejected") {
  for (const char* text : {"", "content:", "content:a", "ftp:/x", "ip:300.1.1.1", "identity:abc", "hyp:1"}) {
    CHECK_THROWS_AS(Identifier::parse(text), Error);
  }
  CHECK_THROWS_AS(Identifier(IdType::Content, {}), Error);
  CHECK_THROWS_AS(Identifier(IdType::Content, {Bytes{}}), Error);
  CHECK_THROWS_AS(Identifier(IdType::Content, std::vector<Bytes>(33, Bytes{1})), Error);
  CHECK_THROWS_AS(Identifier(IdType::Content, {Bytes(256, 1)}), Error);
  CHECK_THROWS_AS(Identifier(IdType::Identity, {Bytes(31, 0)}), Error);
  CHECK_NOTHROW(Identifier(IdType::Content, std::vector<Bytes>(32, Bytes(255, 1))));
}

TEST_CASE("is_prefix") {
  CHECK(is_prefix(C("/video"), C("/video/movie1")));
  CHECK_FALSE(is_prefix(C("/video/movie1"), C("/video")));
  CHECK(is_prefix(C("/video"), C("/video")));
  CHECK_FALSE(is_prefix(C("/video"), Identifier::service("/video/x")));
  CHECK(is_prefix(I("10.0.0.1"), I("10.0.0.1")));
  CHECK_FALSE(is_prefix(I("10.0.0.1"), I("10.0.0.2")));
  CHECK_FALSE(is_prefix(C("/vid"), C("/video")));
}

TEST_CASE("sort_candidates orders by type, length, then components") {
  auto all = [](const Identifier&) { return true; };
  std::vector<Identifier> ids{I("10.0.0.1"), C("/a")};
  CHECK(sort_candidates(ids, all) == std::vector<Identifier>{C("/a"), I("10.0.0.1")});

  auto only_ip = [](const Identifier& id) { return id.type() == IdType::Ip; };
  CHECK(sort_candidates(ids, only_ip) == std::vector<Identifier>{I("10.0.0.1")});

  std::vector<Identifier> names{C("/a/b"), C("/a")};
  CHECK(sort_candidates(names, all) == std::vector<Identifier>{C("/a"), C("/a/b")});

  auto none = [](const Identifier&) { return false; };
  try {
    sort_candidates(names, none);
    FAIL("expected NoValidIdentifier");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::NoValidIdentifier);
  }
}

TEST_CASE("sort_candidates is a shuffle-stable permutation of the filtered input") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Identifier> ids;
    auto n = testsupport::pick(rng, 1, 12);
    for (std::size_t i = 0; i < n; ++i) ids.push_back(testsupport::random_identifier(rng));
    auto reachable = [](const Identifier& id) { return id.components().front().front() % 3 != 0; };
    std::vector<Identifier> kept;
    std::copy_if(ids.begin(), ids.end(), std::back_inserter(kept), reachable);
    if (kept.empty()) continue;
    auto sorted = sort_candidates(ids, reachable);
    CHECK(std::is_permutation(sorted.begin(), sorted.end(), kept.begin(), kept.end()));
    CHECK(std::is_sorted(sorted.begin(), sorted.end(), candidate_less));
    std::shuffle(ids.begin(), ids.end(), rng);
    CHECK(sort_candidates(ids, reachable) == sorted);
  }
}

TEST_CASE("translate") {
  IdentifierGraph g;
  g.add_edge(C("/a"), I("10.0.0.1"));
  CHECK(translate(g, C("/a"), IdType::Ip) == I("10.0.0.1"));
  CHECK(translate(g, C("/a"), IdType::Content) == C("/a"));
  try {
    translate(g, C("/a"), IdType::Hyperbolic);
    FAIL("expected NoTranslation");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::NoTranslation);
  }
}

TEST_CASE("translate on a diamond picks the candidate-order minimum") {
  IdentifierGraph g;
  auto src = C("/src");
  auto left = Identifier::service("/left");
  auto right = Identifier::service("/right");
  g.add_edge(src, left);
  g.add_edge(src, right);
  g.add_edge(left, I("10.0.0.9"));
  g.add_edge(right, I("10.0.0.2"));
  auto hits = nearest_by_enumeration(g, src, IdType::Ip);
  REQUIRE(hits.size() == 2);
  auto best = *std::min_element(hits.begin(), hits.end(), candidate_less);
  CHECK(best == I("10.0.0.2"));
  CHECK(translate(g, src, IdType::Ip) == best);
}

TEST_CASE("translate agrees with path enumeration on random graphs") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 150; ++trial) {
    IdentifierGraph g;
    std::vector<Identifier> nodes;
    auto n = testsupport::pick(rng, 2, 9);
    for (std::size_t i = 0; i < n; ++i) {
      auto id = rng() % 2 ? Identifier::ip("10.0.0." + std::to_string(i))
                          : Identifier::content("/n" + std::to_string(i));
      nodes.push_back(id);
      g.add_node(id);
    }
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        if (rng() % 3 == 0) g.add_edge(nodes[i], nodes[j]);
      }
    }
    const auto& src = nodes.front();
    auto hits = nearest_by_enumeration(g, src, IdType::Ip);
    if (hits.empty()) {
      CHECK_THROWS_AS(translate(g, src, IdType::Ip), Error);
    } else {
      CHECK(translate(g, src, IdType::Ip) == *std::min_element(hits.begin(), hits.end(), candidate_less));
    }
  }
}
