#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cogmin/simnet.hpp"

#include <cstdlib>
#include <filesystem>

using namespace cogmin;
using namespace cogmin::simnet;
using nlohmann::json;

namespace {

std::filesystem::path scenario_dir() {
  const char* env = std::getenv("COGMIN_SCENARIOS");
  return env != nullptr ? env : "scenarios";
}

json small_scenario() {
  return json::parse(R"({
    "name": "small", "seed": 3, "duration_ms": 6000,
    "domains": ["a", "b"],
    "nodes": [
      {"name": "h", "role": "host", "domain": "a"},
      {"name": "r", "role": "mir", "domain": "a"},
      {"name": "ba", "role": "border", "domain": "a"},
      {"name": "bb", "role": "border", "domain": "b"},
      {"name": "s", "role": "host", "domain": "b", "serves": ["content:/s"]},
      {"name": "reg", "role": "registry", "domain": "a"}
    ],
    "links": [
      {"a": "h", "b": "r", "latency_ms": 1},
      {"a": "r", "b": "ba", "latency_ms": 2, "loss": 0.05},
      {"a": "ba", "b": "bb", "latency_ms": 7, "loss": 0.05},
      {"a": "bb", "b": "s", "latency_ms": 1},
      {"a": "reg", "b": "r", "latency_ms": 1}
    ],
    "users": [{"name": "u", "host": "h"}, {"name": "p", "host": "s"}],
    "actions": [
      {"at": 10, "do": "interest", "host": "h", "name": "content:/s/x", "count": 30, "interval_ms": 20},
      {"at": 50, "do": "gppkt", "host": "h", "to": "p", "count": 10, "interval_ms": 30}
    ]
  })");
}

Errc load_error(const json& j) {
  try {
    Scenario::from_json(j).validate();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("scenario accepted");
  return Errc::Io;
}

}  // namespace

TEST_CASE("scenario validation") {
  CHECK_NOTHROW(Scenario::from_json(small_scenario()).validate());

  auto j = small_scenario();
  j["links"].push_back({{"a", "h"}, {"b", "ghost"}});
  CHECK(load_error(j) == Errc::ScenarioInvalid);

  j = small_scenario();
  j["links"][0]["loss"] = 1.5;
  CHECK(load_error(j) == Errc::ScenarioInvalid);

  j = small_scenario();
  j["nodes"][0]["domain"] = "nowhere";
  CHECK(load_error(j) == Errc::ScenarioInvalid);

  j = small_scenario();
  j["nodes"].push_back(j["nodes"][0]);
  CHECK(load_error(j) == Errc::ScenarioInvalid);

  j = small_scenario();
  j["actions"].push_back({{"at", 1}, {"do", "attack"}, {"kind", "Teleport"}, {"attacker", "h"}});
  CHECK(load_error(j) == Errc::UnknownAttackKind);

  j = small_scenario();
  j["users"].push_back({{"name", "x"}, {"host", "r"}});
  CHECK(load_error(j) == Errc::ScenarioInvalid);

  CHECK_THROWS_AS(Scenario::load("/nonexistent/scenario.json"), Error);
}

TEST_CASE("attack kinds parse") {
  for (auto k : {AttackKind::ForgedVisa, AttackKind::Replay, AttackKind::SpoofedSignature,
                 AttackKind::UnregisteredIdentity, AttackKind::StolenStampFlood}) {
    CHECK(parse_attack_kind(to_string(k)) == k);
  }
  CHECK_THROWS_AS(parse_attack_kind("Nope"), Error);
}

TEST_CASE("assertions") {
  json m = {{"a", {{"b", 3}}}, {"flag", true}};
  std::string detail;
  CHECK(check_assertion(m, {"a.b", "==", 3}, detail));
  CHECK(check_assertion(m, {"a.b", "<", 4}, detail));
  CHECK_FALSE(check_assertion(m, {"a.b", ">", 3}, detail));
  CHECK(check_assertion(m, {"flag", "==", 1}, detail));
  CHECK_FALSE(check_assertion(m, {"a.missing", "==", 0}, detail));
}

TEST_CASE("runs are deterministic and seed-dependent") {
  auto s = Scenario::from_json(small_scenario());
  auto a = run_scenario(s);
  auto b = run_scenario(s);
  CHECK(a.trace_hash == b.trace_hash);
  CHECK(a.trace == b.trace);
  CHECK(a.metrics == b.metrics);
  CHECK(a.csv == b.csv);
  s.seed = 4;
  CHECK(run_scenario(s).trace_hash != a.trace_hash);
}

TEST_CASE("lossy run conserves packets") {
  auto r = run_scenario(Scenario::from_json(small_scenario()));
  const auto& c = r.metrics["conservation"];
  CHECK(c["ok"] == true);
  CHECK(c["per_node_ok"] == true);
  auto originated = c["originated"].get<std::uint64_t>();
  auto accounted = c["delivered"].get<std::uint64_t>() + c["absorbed"].get<std::uint64_t>() +
                   c["dropped"].get<std::uint64_t>() + c["in_flight"].get<std::uint64_t>();
  CHECK(originated == accounted);
  CHECK(r.metrics["drops_by_reason"].contains("LinkLoss"));
  CHECK(r.metrics["legit"]["satisfied"].get<std::uint64_t>() > 0);
  CHECK(r.metrics["traceability"]["failures"] == 0);
  CHECK(r.csv.rfind("time_ms,originated,", 0) == 0);
}

TEST_CASE("shipped scenarios hold their assertions") {
  auto dir = scenario_dir();
  REQUIRE(std::filesystem::is_directory(dir));
  int seen = 0;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() != ".json") continue;
    ++seen;
    auto s = Scenario::load(entry.path().string());
    auto r = run_scenario(s);
    std::string failures;
    for (const auto& f : r.assertion_failures) failures += f + "; ";
    INFO(s.name << ": " << failures);
    CHECK(r.assertion_failures.empty());
    CHECK(r.metrics["conservation"]["ok"] == true);
    CHECK(r.metrics["conservation"]["per_node_ok"] == true);
    CHECK(r.metrics["traceability"]["failures"] == 0);
    CHECK(r.metrics["bans"]["forwarded_after_commit"] == 0);
  }
  CHECK(seen >= 8);
}

TEST_CASE("seed override") {
  auto s = Scenario::from_json(small_scenario());
  ::setenv("MIN_SEED", "99", 1);
  apply_seed_override(s);
  ::unsetenv("MIN_SEED");
  CHECK(s.seed == 99);
  auto t = Scenario::from_json(small_scenario());
  apply_seed_override(t);
  CHECK(t.seed == 3);
}
