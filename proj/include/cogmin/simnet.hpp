#pragma once

#include "cogmin/forwarding.hpp"
#include "cogmin/registry.hpp"

#include <json.hpp>

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

/// Deterministic discrete-event simulator: hosts, routers and registry nodes
/// in a multi-domain topology driven by a JSON scenario.
namespace cogmin::simnet {

using TimeMs = std::uint64_t;

enum class Role { Host, Mir, BorderMir, RegistryNode };

std::string_view to_string(Role r);

struct NodeSpec {
  std::string name;
  Role role = Role::Host;
  std::string domain;
  std::int64_t clock_offset_ms = 0;
  std::vector<Identifier> serves;  // content prefixes a host answers
  std::optional<std::size_t> cs_capacity;
};

struct LinkSpec {
  std::string a;
  std::string b;
  TimeMs latency_ms = 1;
  double loss = 0.0;
};

struct RouteSpec {
  std::string node;
  Identifier prefix;
  std::string via;
  std::uint32_t cost = 1;
};

struct UserSpec {
  std::string name;
  std::string host;
};

enum class AttackKind { ForgedVisa, Replay, SpoofedSignature, UnregisteredIdentity, StolenStampFlood };

std::string_view to_string(AttackKind k);
/// Throws Error(UnknownAttackKind).
AttackKind parse_attack_kind(std::string_view s);

struct InterestAction {
  std::string host;
  std::string user;  // empty: the host's first user
  Identifier name;
  std::uint32_t count = 1;
  TimeMs interval_ms = 100;
  bool distinct = true;  // append "/<i>" to the name
};

struct GpAction {
  std::string host;
  std::string user;
  std::string to;  // destination user
  std::uint32_t count = 1;
  TimeMs interval_ms = 100;
};

struct AttackAction {
  AttackKind kind = AttackKind::ForgedVisa;
  std::string attacker;  // host node the attack originates from
  std::uint32_t count = 100;
  TimeMs interval_ms = 10;
  std::optional<Identifier> name;  // target content name
  std::string victim;              // impersonated user
  std::optional<std::pair<std::string, std::string>> tap;  // observed link, toward .second
  TimeMs delay_ms = 500;
};

struct CrashAction {
  std::string node;
};

struct BanAction {
  std::string user;
};

struct RevokeVisaAction {
  std::string user;
};

struct RegisterAction {
  Identifier identifier;
  std::string owner;
};

using ActionBody =
    std::variant<InterestAction, GpAction, AttackAction, CrashAction, BanAction, RevokeVisaAction, RegisterAction>;

struct Action {
  TimeMs at = 0;
  ActionBody body;
};

struct Assertion {
  std::string metric;  // dot path into the report, e.g. "attack.delivered"
  std::string op;      // == != < <= > >=
  double value = 0;
};

struct Scenario {
  std::string name = "scenario";
  std::uint64_t seed = 1;
  TimeMs duration_ms = 30000;
  std::uint64_t epoch_seconds = 1'700'000'000;
  int skew_windows = customs::kDefaultSkewWindows;
  TimeMs pit_lifetime_ms = 4000;
  std::size_t cs_capacity = 64;
  TimeMs retry_ms = 4500;
  std::uint32_t max_retries = 4;
  forwarding::SignaturePolicy signature_policy = forwarding::SignaturePolicy::Edge;
  TimeMs round_ms = 2000;
  TimeMs anchor_interval_ms = 10000;  // 0 disables audit anchoring
  TimeMs sample_ms = 1000;
  std::vector<std::string> domains;
  std::vector<NodeSpec> nodes;
  std::vector<LinkSpec> links;
  std::optional<std::vector<RouteSpec>> routes;  // absent: shortest-path routes
  std::vector<UserSpec> users;
  std::vector<Action> actions;
  std::vector<Assertion> assertions;

  /// Throws Error(ScenarioInvalid) or Error(UnknownAttackKind).
  static Scenario from_json(const nlohmann::json& j);
  static Scenario load(const std::string& path);
  void validate() const;
};

/// Replaces the seed with the MIN_SEED environment variable when set.
void apply_seed_override(Scenario& s);

struct Report {
  nlohmann::json metrics;  // the MetricsReport
  std::string csv;         // sampled counters
  std::string trace;       // event log hashed into trace_hash
  Digest trace_hash{};
  std::vector<std::string> assertion_failures;
};

/// Evaluates `a` against `metrics`; unknown metric paths fail.
bool check_assertion(const nlohmann::json& metrics, const Assertion& a, std::string& detail);

class Simulation {
 public:
  explicit Simulation(Scenario scenario);
  ~Simulation();
  Simulation(const Simulation&) = delete;
  Simulation& operator=(const Simulation&) = delete;

  Report run();

  const Scenario& scenario() const noexcept;
  /// Audit records of every router, in node order.
  std::vector<identity::AuditRecord> audit_records() const;
  std::vector<const forwarding::Router*> routers() const;
  std::vector<const registry::RegistryNode*> registry_nodes() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Convenience: load, validate, run.
Report run_scenario(const Scenario& scenario);

}  // namespace cogmin::simnet
