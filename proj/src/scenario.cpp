#include "cogmin/simnet.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace cogmin::simnet {

namespace {

using nlohmann::json;

[[noreturn]] void invalid(const std::string& why) { throw Error(Errc::ScenarioInvalid, why); }

Identifier parse_id(const json& j, const char* field) {
  if (!j.is_string()) invalid(std::string(field) + " must be an identifier string");
  try {
    return Identifier::parse(j.get<std::string>());
  } catch (const Error& e) {
    invalid(std::string(field) + ": " + e.what());
  }
}

const json& require(const json& j, const char* field) {
  if (!j.is_object() || !j.contains(field)) invalid(std::string("missing field '") + field + "'");
  return j.at(field);
}

std::string text(const json& j, const char* field) {
  const auto& v = require(j, field);
  if (!v.is_string()) invalid(std::string(field) + " must be a string");
  return v.get<std::string>();
}

template <class T>
T number_or(const json& j, const char* field, T fallback) {
  if (!j.contains(field)) return fallback;
  const auto& v = j.at(field);
  if (!v.is_number()) invalid(std::string(field) + " must be a number");
  if constexpr (std::is_unsigned_v<T>) {
    if (v.is_number_integer() && v.get<std::int64_t>() < 0) invalid(std::string(field) + " must be non-negative");
  }
  return v.get<T>();
}

Role parse_role(const std::string& s) {
  if (s == "host") return Role::Host;
  if (s == "mir") return Role::Mir;
  if (s == "border") return Role::BorderMir;
  if (s == "registry") return Role::RegistryNode;
  invalid("unknown role '" + s + "'");
}

ActionBody parse_action(const json& j) {
  auto kind = text(j, "do");
  if (kind == "interest") {
    InterestAction a;
    a.host = text(j, "host");
    a.user = j.value("user", "");
    a.name = parse_id(require(j, "name"), "name");
    a.count = number_or<std::uint32_t>(j, "count", 1);
    a.interval_ms = number_or<TimeMs>(j, "interval_ms", 100);
    a.distinct = j.value("distinct", true);
    return a;
  }
  if (kind == "gppkt") {
    GpAction a;
    a.host = text(j, "host");
    a.user = j.value("user", "");
    a.to = text(j, "to");
    a.count = number_or<std::uint32_t>(j, "count", 1);
    a.interval_ms = number_or<TimeMs>(j, "interval_ms", 100);
    return a;
  }
  if (kind == "attack") {
    AttackAction a;
    a.kind = parse_attack_kind(text(j, "kind"));
    a.attacker = text(j, "attacker");
    a.count = number_or<std::uint32_t>(j, "count", 100);
    a.interval_ms = number_or<TimeMs>(j, "interval_ms", 10);
    if (j.contains("name")) a.name = parse_id(j.at("name"), "name");
    a.victim = j.value("victim", "");
    if (j.contains("tap")) {
      const auto& t = j.at("tap");
      if (!t.is_array() || t.size() != 2 || !t[0].is_string() || !t[1].is_string()) {
        invalid("tap must be [from, to]");
      }
      a.tap = std::pair{t[0].get<std::string>(), t[1].get<std::string>()};
    }
    a.delay_ms = number_or<TimeMs>(j, "delay_ms", 500);
    return a;
  }
  if (kind == "crash") return CrashAction{text(j, "node")};
  if (kind == "ban") return BanAction{text(j, "user")};
  if (kind == "revoke_visa") return RevokeVisaAction{text(j, "user")};
  if (kind == "register") {
    return RegisterAction{parse_id(require(j, "identifier"), "identifier"), text(j, "owner")};
  }
  invalid("unknown action '" + kind + "'");
}

}  // namespace

std::string_view to_string(Role r) {
  switch (r) {
    case Role::Host: return "host";
    case Role::Mir: return "mir";
    case Role::BorderMir: return "border";
    case Role::RegistryNode: return "registry";
  }
  return "?";
}

std::string_view to_string(AttackKind k) {
  switch (k) {
    case AttackKind::ForgedVisa: return "ForgedVisa";
    case AttackKind::Replay: return "Replay";
    case AttackKind::SpoofedSignature: return "SpoofedSignature";
    case AttackKind::UnregisteredIdentity: return "UnregisteredIdentity";
    case AttackKind::StolenStampFlood: return "StolenStampFlood";
  }
  return "?";
}

AttackKind parse_attack_kind(std::string_view s) {
  for (auto k : {AttackKind::ForgedVisa, AttackKind::Replay, AttackKind::SpoofedSignature,
                 AttackKind::UnregisteredIdentity, AttackKind::StolenStampFlood}) {
    if (to_string(k) == s) return k;
  }
  throw Error(Errc::UnknownAttackKind, "unknown attack kind '" + std::string(s) + "'");
}

Scenario Scenario::from_json(const json& j) {
  if (!j.is_object()) invalid("scenario must be a JSON object");
  Scenario s;
  try {
    s.name = j.value("name", s.name);
    s.seed = number_or<std::uint64_t>(j, "seed", s.seed);
    s.duration_ms = number_or<TimeMs>(j, "duration_ms", s.duration_ms);
    s.epoch_seconds = number_or<std::uint64_t>(j, "epoch_seconds", s.epoch_seconds);
    s.skew_windows = number_or<int>(j, "skew_windows", s.skew_windows);
    s.pit_lifetime_ms = number_or<TimeMs>(j, "pit_lifetime_ms", s.pit_lifetime_ms);
    s.cs_capacity = number_or<std::size_t>(j, "cs_capacity", s.cs_capacity);
    s.retry_ms = number_or<TimeMs>(j, "retry_ms", s.retry_ms);
    s.max_retries = number_or<std::uint32_t>(j, "max_retries", s.max_retries);
    s.round_ms = number_or<TimeMs>(j, "round_ms", s.round_ms);
    s.anchor_interval_ms = number_or<TimeMs>(j, "anchor_interval_ms", s.anchor_interval_ms);
    s.sample_ms = number_or<TimeMs>(j, "sample_ms", s.sample_ms);
    auto policy = j.value("signature_policy", std::string("edge"));
    if (policy == "edge") {
      s.signature_policy = forwarding::SignaturePolicy::Edge;
    } else if (policy == "always") {
      s.signature_policy = forwarding::SignaturePolicy::Always;
    } else {
      invalid("signature_policy must be 'edge' or 'always'");
    }

    for (const auto& d : require(j, "domains")) {
      if (!d.is_string()) invalid("domains must be strings");
      s.domains.push_back(d.get<std::string>());
    }
    for (const auto& n : require(j, "nodes")) {
      NodeSpec spec;
      spec.name = text(n, "name");
      spec.role = parse_role(text(n, "role"));
      spec.domain = text(n, "domain");
      spec.clock_offset_ms = number_or<std::int64_t>(n, "clock_offset_ms", 0);
      if (n.contains("serves")) {
        for (const auto& p : n.at("serves")) spec.serves.push_back(parse_id(p, "serves"));
      }
      if (n.contains("cs_capacity")) spec.cs_capacity = number_or<std::size_t>(n, "cs_capacity", 0);
      s.nodes.push_back(std::move(spec));
    }
    for (const auto& l : require(j, "links")) {
      LinkSpec link;
      link.a = text(l, "a");
      link.b = text(l, "b");
      link.latency_ms = number_or<TimeMs>(l, "latency_ms", 1);
      link.loss = number_or<double>(l, "loss", 0.0);
      s.links.push_back(std::move(link));
    }
    if (j.contains("routes") && !(j.at("routes").is_string() && j.at("routes") == "auto")) {
      std::vector<RouteSpec> routes;
      for (const auto& r : j.at("routes")) {
        routes.push_back({text(r, "node"), parse_id(require(r, "prefix"), "prefix"), text(r, "via"),
                          number_or<std::uint32_t>(r, "cost", 1)});
      }
      s.routes = std::move(routes);
    }
    if (j.contains("users")) {
      for (const auto& u : j.at("users")) s.users.push_back({text(u, "name"), text(u, "host")});
    }
    if (j.contains("actions")) {
      for (const auto& a : j.at("actions")) {
        s.actions.push_back({number_or<TimeMs>(a, "at", 0), parse_action(a)});
      }
    }
    if (j.contains("assertions")) {
      for (const auto& a : j.at("assertions")) {
        auto op = text(a, "op");
        if (op != "==" && op != "!=" && op != "<" && op != "<=" && op != ">" && op != ">=") {
          invalid("bad assertion operator '" + op + "'");
        }
        s.assertions.push_back({text(a, "metric"), op, number_or<double>(a, "value", 0)});
      }
    }
  } catch (const json::exception& e) {
    invalid(e.what());
  }
  s.validate();
  return s;
}

Scenario Scenario::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    invalid(path + ": " + e.what());
  }
  return from_json(j);
}

void Scenario::validate() const {
  if (duration_ms == 0) invalid("duration_ms must be positive");
  if (skew_windows < 0) invalid("skew_windows must be non-negative");
  if (round_ms == 0 || sample_ms == 0 || retry_ms == 0) invalid("round_ms, sample_ms and retry_ms must be positive");

  std::set<std::string> domain_set(domains.begin(), domains.end());
  if (domain_set.size() != domains.size()) invalid("duplicate domain");
  for (const auto& d : domains) {
    registry::Domain dom{d, {}};
    if (auto p = dom.parent(); p && !domain_set.contains(*p)) invalid("domain " + d + " lacks parent " + *p);
  }

  std::map<std::string, const NodeSpec*> by_name;
  std::size_t registries = 0;
  for (const auto& n : nodes) {
    if (n.name.empty() || !by_name.emplace(n.name, &n).second) invalid("duplicate or empty node name '" + n.name + "'");
    if (!domain_set.contains(n.domain)) invalid("node " + n.name + " in unknown domain " + n.domain);
    if (n.role == Role::RegistryNode) ++registries;
    if (!n.serves.empty() && n.role != Role::Host) invalid("only hosts serve content: " + n.name);
  }
  if (registries == 0) invalid("at least one registry node is required");

  std::map<std::string, std::set<std::string>> adj;
  for (const auto& l : links) {
    if (!by_name.contains(l.a) || !by_name.contains(l.b)) invalid("link endpoint missing: " + l.a + "-" + l.b);
    if (l.a == l.b) invalid("self link on " + l.a);
    if (l.latency_ms == 0) invalid("link latency must be positive: " + l.a + "-" + l.b);
    if (!(l.loss >= 0.0 && l.loss <= 1.0)) invalid("link loss must lie in [0,1]: " + l.a + "-" + l.b);
    if (adj[l.a].contains(l.b)) invalid("duplicate link " + l.a + "-" + l.b);
    adj[l.a].insert(l.b);
    adj[l.b].insert(l.a);
  }
  if (!nodes.empty()) {
    std::set<std::string> seen{nodes.front().name};
    std::vector<std::string> stack{nodes.front().name};
    while (!stack.empty()) {
      auto cur = stack.back();
      stack.pop_back();
      for (const auto& nb : adj[cur]) {
        if (seen.insert(nb).second) stack.push_back(nb);
      }
    }
    if (seen.size() != nodes.size()) invalid("topology is not connected");
  }
  for (const auto& n : nodes) {
    if (n.role == Role::Host) {
      bool has_router = std::any_of(adj[n.name].begin(), adj[n.name].end(), [&](const std::string& nb) {
        auto r = by_name.at(nb)->role;
        return r == Role::Mir || r == Role::BorderMir;
      });
      if (!has_router) invalid("host " + n.name + " has no router link");
    }
  }

  std::map<std::string, std::string> user_host;
  for (const auto& u : users) {
    if (!by_name.contains(u.host) || by_name.at(u.host)->role != Role::Host) invalid("user " + u.name + " needs a host");
    if (!user_host.emplace(u.name, u.host).second) invalid("duplicate user " + u.name);
  }
  for (const auto& n : nodes) {
    if (!n.serves.empty() &&
        std::none_of(users.begin(), users.end(), [&](const UserSpec& u) { return u.host == n.name; })) {
      invalid("producer host " + n.name + " needs a user to sign Data");
    }
  }
  if (routes) {
    for (const auto& r : *routes) {
      if (!by_name.contains(r.node) || !adj[r.node].contains(r.via)) invalid("route via non-neighbour: " + r.node);
    }
  }

  auto host_user = [&](const std::string& host, const std::string& user) {
    if (!by_name.contains(host) || by_name.at(host)->role != Role::Host) invalid("unknown host " + host);
    if (user.empty()) {
      if (std::none_of(users.begin(), users.end(), [&](const UserSpec& u) { return u.host == host; })) {
        invalid("host " + host + " has no user");
      }
    } else if (!user_host.contains(user) || user_host.at(user) != host) {
      invalid("user " + user + " is not on host " + host);
    }
  };
  for (const auto& a : actions) {
    std::visit(
        [&](const auto& b) {
          using T = std::decay_t<decltype(b)>;
          if constexpr (std::is_same_v<T, InterestAction>) {
            host_user(b.host, b.user);
            if (b.name.type() != IdType::Content && b.name.type() != IdType::Service) {
              invalid("interest names must be hierarchical");
            }
          } else if constexpr (std::is_same_v<T, GpAction>) {
            host_user(b.host, b.user);
            if (!user_host.contains(b.to)) invalid("unknown gppkt destination " + b.to);
          } else if constexpr (std::is_same_v<T, AttackAction>) {
            if (!by_name.contains(b.attacker) || by_name.at(b.attacker)->role != Role::Host) {
              invalid("attacker must be a host: " + b.attacker);
            }
            bool needs_victim = b.kind == AttackKind::ForgedVisa || b.kind == AttackKind::SpoofedSignature;
            if (needs_victim && !user_host.contains(b.victim)) invalid("attack needs a known victim");
            bool needs_tap = b.kind == AttackKind::Replay || b.kind == AttackKind::StolenStampFlood;
            if (needs_tap && (!b.tap || !adj[b.tap->first].contains(b.tap->second))) {
              invalid("attack needs a tap on an existing link");
            }
            if (b.delay_ms == 0) invalid("attack delay must be positive");
          } else if constexpr (std::is_same_v<T, CrashAction>) {
            if (!by_name.contains(b.node)) invalid("crash of unknown node " + b.node);
          } else if constexpr (std::is_same_v<T, RegisterAction>) {
            if (!user_host.contains(b.owner)) invalid("unknown owner " + b.owner);
          } else {
            if (!user_host.contains(b.user)) invalid("unknown user " + b.user);
          }
        },
        a.body);
  }
}

void apply_seed_override(Scenario& s) {
  if (const char* env = std::getenv("MIN_SEED"); env != nullptr && *env != '\0') {
    char* end = nullptr;
    auto v = std::strtoull(env, &end, 0);
    if (end == nullptr || *end != '\0') invalid("MIN_SEED is not an unsigned integer");
    s.seed = v;
  }
}

bool check_assertion(const json& metrics, const Assertion& a, std::string& detail) {
  const json* cur = &metrics;
  std::size_t start = 0;
  while (start <= a.metric.size()) {
    auto dot = a.metric.find('.', start);
    auto key = a.metric.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!cur->is_object() || !cur->contains(key)) {
      detail = a.metric + ": no such metric";
      return false;
    }
    cur = &cur->at(key);
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  double v;
  if (cur->is_boolean()) {
    v = cur->get<bool>() ? 1.0 : 0.0;
  } else if (cur->is_number()) {
    v = cur->get<double>();
  } else {
    detail = a.metric + ": not a number";
    return false;
  }
  bool ok = a.op == "==" ? v == a.value
          : a.op == "!=" ? v != a.value
          : a.op == "<"  ? v < a.value
          : a.op == "<=" ? v <= a.value
          : a.op == ">"  ? v > a.value
                         : v >= a.value;
  std::ostringstream os;
  os << a.metric << " = " << v << (ok ? " satisfies " : " violates ") << a.op << ' ' << a.value;
  detail = os.str();
  return ok;
}

}  // namespace cogmin::simnet
