#include "cogmin/simnet.hpp"

#include <algorithm>
#include <limits>
#include <queue>
#include <set>
#include <sstream>

namespace cogmin::simnet {

namespace {

using forwarding::FaceId;
using nlohmann::json;

constexpr std::size_t kOperator = std::numeric_limits<std::size_t>::max();
constexpr std::uint8_t kGpData = 0;
constexpr std::uint8_t kGpAck = 1;

struct Tag {
  bool attack = false;
  AttackKind kind = AttackKind::ForgedVisa;
};

struct Adj {
  std::size_t peer = 0;
  std::size_t link = 0;
  FaceId peer_face = 0;
};

struct Counters {
  std::uint64_t received = 0;
  std::uint64_t originated = 0;
  std::uint64_t delivered = 0;
  std::uint64_t sent = 0;
  std::map<std::string, std::uint64_t> absorbed;
  std::map<std::string, std::uint64_t> dropped;
};

std::uint64_t total(const std::map<std::string, std::uint64_t>& m) {
  std::uint64_t t = 0;
  for (const auto& [k, v] : m) t += v;
  return t;
}

struct User {
  std::string name;
  std::size_t host = 0;
  std::string domain;
  identity::IdentityRecord record;
  crypto::SecretKey key;
  Identifier id;
  bool visa_revoked = false;
};

struct Request {
  std::size_t host = 0;
  std::size_t user = 0;
  Identifier name;
  std::uint32_t retries = 0;
  bool done = false;
  bool sanctioned = false;
};

struct GpMessage {
  std::size_t from = 0;  // user
  std::size_t to = 0;    // user
  std::uint32_t retries = 0;
  bool acked = false;
  bool delivered = false;
  bool sanctioned = false;
};

struct Arrival {
  FaceId face = 0;
  Bytes wire;
  Tag tag;
};
struct RegMsg {
  std::size_t from = 0;
  Bytes wire;
};
struct FireAction {
  std::size_t index = 0;
};
struct IssueTick {
  std::size_t action = 0;
  std::uint32_t i = 0;
};
struct RetryRequest {
  std::size_t request = 0;
};
struct RetryGp {
  std::uint64_t message = 0;
};
struct AttackTick {
  std::size_t attack = 0;
  std::uint32_t i = 0;
};
struct Inject {
  Bytes wire;
  Tag tag;
};
struct RoundTick {};
struct SampleTick {};
struct AnchorTick {};

using EventBody = std::variant<Arrival, RegMsg, FireAction, IssueTick, RetryRequest, RetryGp, AttackTick, Inject,
                               RoundTick, SampleTick, AnchorTick>;

struct Event {
  TimeMs time = 0;
  std::uint64_t seq = 0;
  std::size_t node = 0;
  EventBody body;
};

struct Later {
  bool operator()(const Event& a, const Event& b) const {
    return a.time != b.time ? a.time > b.time : a.seq > b.seq;
  }
};

struct AttackRt {
  AttackAction spec;
  std::size_t attacker = 0;
  std::size_t tap_link = 0;
  std::size_t tap_to = 0;
  bool active = false;
  std::uint32_t captured = 0;
  std::optional<MinPacket> stolen;
  crypto::SecretKey rogue;
};

std::string short_hex(const Digest& d) { return to_hex(ByteView(d.data(), 6)); }

Identifier child(const Identifier& base, std::string_view label) {
  auto comps = base.components();
  comps.emplace_back(label.begin(), label.end());
  return Identifier(base.type(), std::move(comps));
}

class Collector : public identity::LedgerSink {
 public:
  void submit_identity(const identity::IdentityRecord& r) override { records.push_back(r); }
  void submit_ban(const Digest&) override {}
  std::vector<identity::IdentityRecord> records;
};

}  // namespace

struct Simulation::Impl {
  struct Node;

  /// Routers consult the nearest live registry replica.
  class ViewProxy : public identity::RegistryView {
   public:
    ViewProxy(Impl* sim, std::size_t router) : sim_(sim), router_(router) {}
    std::optional<identity::IdentityRecord> find_identity(const Digest& id) const override {
      return sim_->view_for(router_).find_identity(id);
    }
    bool biometric_banned(const Digest& b) const override { return sim_->view_for(router_).biometric_banned(b); }
    bool visa_revoked(const Digest& s, std::string_view d) const override {
      return sim_->view_for(router_).visa_revoked(s, d);
    }

   private:
    Impl* sim_;
    std::size_t router_;
  };

  struct Node {
    NodeSpec spec;
    bool crashed = false;
    std::vector<Adj> adj;
    std::unique_ptr<forwarding::Router> router;
    std::unique_ptr<ViewProxy> view;
    std::unique_ptr<registry::RegistryNode> reg;
    std::vector<std::size_t> registry_order;  // registry nodes by control distance
    std::vector<std::size_t> users;
    std::map<Identifier, MinPacket> produced;
    std::map<Identifier, std::vector<std::size_t>> waiting;
    Counters c;
    std::uint64_t anchored_records = 0;
  };

  explicit Impl(Scenario s) : sc(std::move(s)), rng(sc.seed) { setup(); }

  Scenario sc;
  std::mt19937_64 rng;
  std::vector<Node> nodes;
  std::map<std::string, std::size_t> index;
  std::vector<std::vector<TimeMs>> control_latency;
  std::vector<std::size_t> registries;
  std::map<std::string, crypto::SecretKey> operators;
  std::vector<User> users;
  std::map<std::string, std::size_t> user_index;
  std::map<Digest, std::size_t> user_by_digest;
  customs::KeyStore keystore;
  std::vector<std::shared_ptr<forwarding::CustomsContext>> customs_contexts;
  std::uint64_t operator_nonce = 1;

  std::priority_queue<Event, std::vector<Event>, Later> queue;
  std::uint64_t next_seq = 0;
  TimeMs now = 0;
  std::uint64_t events = 0;
  std::string trace;

  std::vector<Request> requests;
  std::map<std::uint64_t, GpMessage> gp_messages;
  std::uint64_t next_gp = 1;
  std::vector<AttackRt> attacks;

  std::uint64_t in_flight = 0;
  std::uint64_t attack_injected = 0;
  std::uint64_t attack_delivered = 0;
  std::map<std::string, std::uint64_t> attack_drops;
  std::map<std::string, std::pair<std::uint64_t, std::uint64_t>> attack_by_kind;  // injected, delivered
  std::vector<std::pair<Digest, Digest>> delivered_signed;  // packet digest, signer
  std::set<Digest> pending_bans;
  std::map<Digest, TimeMs> ban_committed;
  std::uint64_t banned_forwarded = 0;
  std::string csv;

  // -------------------------------------------------------------------------
  // Setup

  crypto::Seed random_seed() {
    crypto::Seed s{};
    for (std::size_t i = 0; i < s.size(); i += 8) {
      auto v = rng();
      for (std::size_t k = 0; k < 8; ++k) s[i + k] = static_cast<std::uint8_t>(v >> (8 * k));
    }
    return s;
  }
  Digest random_digest() { return random_seed(); }
  Nonce random_nonce() {
    Nonce n{};
    auto v = rng();
    for (std::size_t k = 0; k < 8; ++k) n[k] = static_cast<std::uint8_t>(v >> (8 * k));
    return n;
  }
  bool lose(double p) {
    if (p <= 0.0) return false;
    return static_cast<double>(rng() >> 11) * 0x1.0p-53 < p;
  }

  std::uint64_t unix_now() const { return sc.epoch_seconds + now / 1000; }

  void setup() {
    sc.validate();
    for (std::size_t i = 0; i < sc.nodes.size(); ++i) {
      Node n;
      n.spec = sc.nodes[i];
      index[n.spec.name] = i;
      nodes.push_back(std::move(n));
    }
    for (std::size_t l = 0; l < sc.links.size(); ++l) {
      auto a = index.at(sc.links[l].a);
      auto b = index.at(sc.links[l].b);
      auto fa = static_cast<FaceId>(nodes[a].adj.size() + 1);
      auto fb = static_cast<FaceId>(nodes[b].adj.size() + 1);
      nodes[a].adj.push_back({b, l, fb});
      nodes[b].adj.push_back({a, l, fa});
    }
    compute_control_latency();

    // Governance: one operator key per domain, one key per registry node.
    std::vector<std::string> ordered = sc.domains;
    std::stable_sort(ordered.begin(), ordered.end(), [](const std::string& x, const std::string& y) {
      return std::count(x.begin(), x.end(), '.') < std::count(y.begin(), y.end(), '.');
    });
    registry::Genesis genesis;
    for (const auto& d : ordered) {
      crypto::SecretKey key(random_seed());
      genesis.domains.push_back({d, {key.public_key()}});
      operators.emplace(d, key);
    }
    std::vector<crypto::SecretKey> member_keys;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (nodes[i].spec.role != Role::RegistryNode) continue;
      registries.push_back(i);
      member_keys.emplace_back(random_seed());
      genesis.committee.push_back({nodes[i].spec.name, member_keys.back().public_key()});
    }
    for (std::size_t k = 0; k < registries.size(); ++k) {
      auto& n = nodes[registries[k]];
      n.reg = std::make_unique<registry::RegistryNode>(n.spec.name, member_keys[k], genesis);
    }

    // Users: fresh identities committed in a bootstrap block.
    Collector collector;
    for (const auto& u : sc.users) {
      auto host = index.at(u.host);
      auto enrol = identity::generate_identity(*nodes[registries[0]].reg, collector,
                                               crypto::sha256(ByteView(reinterpret_cast<const std::uint8_t*>(u.name.data()), u.name.size())),
                                               crypto::sha256({as_view(Bytes{'b', 'i', 'o'}),
                                                               ByteView(reinterpret_cast<const std::uint8_t*>(u.name.data()), u.name.size())}),
                                               nodes[host].spec.domain, random_seed());
      User user{u.name, host, nodes[host].spec.domain, enrol.record, enrol.secret,
                Identifier::identity(enrol.record.id_digest), false};
      user_index[u.name] = users.size();
      user_by_digest[user.record.id_digest] = users.size();
      nodes[host].users.push_back(users.size());
      users.push_back(std::move(user));
    }
    bootstrap(collector.records);

    // Customs keys: a visa for every user into every other domain, a passport key per domain pair.
    for (const auto& u : users) {
      for (const auto& d : sc.domains) {
        if (d == u.domain) continue;
        keystore.add(customs::CyberVisaKey{random_digest(), u.record.id_digest, d,
                                           sc.epoch_seconds + 1'000'000'000, false});
      }
    }
    for (std::size_t i = 0; i < sc.domains.size(); ++i) {
      for (std::size_t j = i + 1; j < sc.domains.size(); ++j) {
        keystore.add(customs::CyberPassKey::between(sc.domains[i], sc.domains[j], random_digest()));
      }
    }

    // Routers.
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      auto& n = nodes[i];
      if (n.spec.role != Role::Mir && n.spec.role != Role::BorderMir) continue;
      forwarding::RouterConfig cfg;
      cfg.name = n.spec.name;
      cfg.domain = n.spec.domain;
      cfg.cs_capacity = n.spec.cs_capacity.value_or(sc.cs_capacity);
      cfg.pit_lifetime = sc.pit_lifetime_ms;
      cfg.signature_policy = sc.signature_policy;
      cfg.skew_windows = sc.skew_windows;
      cfg.epoch_seconds = sc.epoch_seconds;
      cfg.clock_offset_ms = n.spec.clock_offset_ms;
      n.router = std::make_unique<forwarding::Router>(cfg);
      bool border = false;
      for (std::size_t f = 0; f < n.adj.size(); ++f) {
        const auto& peer = nodes[n.adj[f].peer].spec;
        auto id = static_cast<FaceId>(f + 1);
        if (peer.domain != n.spec.domain) {
          n.router->add_face(id, forwarding::FaceKind::Foreign, peer.domain);
          border = true;
        } else if (peer.role == Role::Host) {
          n.router->add_face(id, forwarding::FaceKind::Host);
        } else {
          n.router->add_face(id, forwarding::FaceKind::Internal);
        }
      }
      if (border) {
        auto ctx = std::make_shared<forwarding::CustomsContext>();
        ctx->keys = keystore;
        n.router->set_customs(ctx);
        customs_contexts.push_back(ctx);
      }
      n.registry_order = registries;
      std::stable_sort(n.registry_order.begin(), n.registry_order.end(), [&](std::size_t a, std::size_t b) {
        bool sa = nodes[a].spec.domain == n.spec.domain;
        bool sb = nodes[b].spec.domain == n.spec.domain;
        if (sa != sb) return sa;
        return control_latency[i][a] < control_latency[i][b];
      });
      n.view = std::make_unique<ViewProxy>(this, i);
      n.router->set_registry_view(n.view.get());
    }
    install_routes();
  }

  void compute_control_latency() {
    const auto n = nodes.size();
    control_latency.assign(n, std::vector<TimeMs>(n, std::numeric_limits<TimeMs>::max()));
    for (std::size_t s = 0; s < n; ++s) {
      auto& dist = control_latency[s];
      using Item = std::pair<TimeMs, std::size_t>;
      std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
      dist[s] = 0;
      pq.push({0, s});
      while (!pq.empty()) {
        auto [d, u] = pq.top();
        pq.pop();
        if (d != dist[u]) continue;
        for (const auto& a : nodes[u].adj) {
          auto nd = d + sc.links[a.link].latency_ms;
          if (nd < dist[a.peer]) {
            dist[a.peer] = nd;
            pq.push({nd, a.peer});
          }
        }
      }
    }
  }

  bool is_router(std::size_t i) const {
    return nodes[i].spec.role == Role::Mir || nodes[i].spec.role == Role::BorderMir;
  }

  /// Shortest-latency tree rooted at `host` through routers only; installs
  /// `prefix` on every reached router toward the host.
  void install_toward(std::size_t host, const Identifier& prefix) {
    const auto n = nodes.size();
    std::vector<TimeMs> dist(n, std::numeric_limits<TimeMs>::max());
    std::vector<std::size_t> parent_face(n, 0);
    using Item = std::tuple<TimeMs, std::string, std::size_t>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
    dist[host] = 0;
    pq.push({0, nodes[host].spec.name, host});
    while (!pq.empty()) {
      auto [d, name, u] = pq.top();
      pq.pop();
      if (d != dist[u]) continue;
      for (const auto& a : nodes[u].adj) {
        if (!is_router(a.peer)) continue;
        auto nd = d + sc.links[a.link].latency_ms;
        if (nd < dist[a.peer]) {
          dist[a.peer] = nd;
          parent_face[a.peer] = a.peer_face;
          pq.push({nd, nodes[a.peer].spec.name, a.peer});
        }
      }
    }
    for (std::size_t r = 0; r < n; ++r) {
      if (r == host || !is_router(r) || dist[r] == std::numeric_limits<TimeMs>::max()) continue;
      nodes[r].router->fib().add(prefix, static_cast<FaceId>(parent_face[r]), static_cast<std::uint32_t>(dist[r]));
    }
  }

  FaceId face_toward(std::size_t from, std::size_t to) const {
    for (std::size_t f = 0; f < nodes[from].adj.size(); ++f) {
      if (nodes[from].adj[f].peer == to) return static_cast<FaceId>(f + 1);
    }
    throw Error(Errc::ScenarioInvalid, "no link " + nodes[from].spec.name + "-" + nodes[to].spec.name);
  }

  void install_routes() {
    if (sc.routes) {
      for (const auto& r : *sc.routes) {
        auto n = index.at(r.node);
        if (!is_router(n)) throw Error(Errc::ScenarioInvalid, "route on non-router " + r.node);
        nodes[n].router->fib().add(r.prefix, face_toward(n, index.at(r.via)), r.cost);
      }
      return;
    }
    for (std::size_t h = 0; h < nodes.size(); ++h) {
      if (nodes[h].spec.role != Role::Host) continue;
      for (const auto& p : nodes[h].spec.serves) install_toward(h, p);
      for (auto u : nodes[h].users) install_toward(h, users[u].id);
    }
  }

  registry::Transaction operator_tx(const std::string& domain, registry::TxBody body) {
    return registry::make_transaction(std::move(body), operators.at(domain), operator_nonce++);
  }

  void bootstrap(const std::vector<identity::IdentityRecord>& records) {
    if (records.empty()) return;
    std::vector<registry::Transaction> txs;
    for (const auto& r : records) txs.push_back(operator_tx(r.domain, registry::RegisterIdentityBody{r}));
    for (auto i : registries) {
      for (const auto& tx : txs) nodes[i].reg->relay(tx);
    }
    auto& lead = *nodes[registries[0]].reg;
    auto proposal = lead.propose(0, sc.epoch_seconds);
    if (!proposal) throw Error(Errc::ScenarioInvalid, "bootstrap proposal failed");
    std::optional<registry::LedgerBlock> block;
    for (std::size_t k = 1; k < registries.size() && !block; ++k) {
      if (auto v = nodes[registries[k]].reg->on_proposal(*proposal)) block = lead.on_vote(*v);
    }
    if (!block && registries.size() == 1) {
      block = lead.on_vote({0, proposal->block.header_hash(), {lead.name(), proposal->proposer_signature}});
    }
    if (!block) throw Error(Errc::ScenarioInvalid, "bootstrap block lacks quorum");
    for (auto i : registries) nodes[i].reg->on_commit(*block);
    trace += "0 - - bootstrap height=1 identities=" + std::to_string(records.size()) + "\n";
  }

  const registry::RegistryNode& view_for(std::size_t router) const {
    const auto& order = nodes[router].registry_order;
    for (auto r : order) {
      if (!nodes[r].crashed) return *nodes[r].reg;
    }
    return *nodes[order.front()].reg;
  }

  // -------------------------------------------------------------------------
  // Event plumbing

  void schedule(TimeMs at, std::size_t node, EventBody body) {
    queue.push(Event{at, next_seq++, node, std::move(body)});
  }

  void log(std::size_t node, const std::string& what) {
    trace += std::to_string(now);
    trace += ' ';
    trace += node == kOperator ? std::string("-") : nodes[node].spec.name;
    trace += ' ';
    trace += what;
    trace += '\n';
  }

  void drop(std::size_t node, const std::string& reason, const Tag& tag) {
    ++nodes[node].c.dropped[reason];
    if (tag.attack) ++attack_drops[reason];
  }

  void transmit(std::size_t node, FaceId face, const MinPacket& pkt, const Tag& tag) {
    auto& n = nodes[node];
    const auto& a = n.adj.at(face - 1);
    const auto& link = sc.links[a.link];
    if (lose(link.loss)) {
      drop(node, "LinkLoss", tag);
      log(node, "lost face=" + std::to_string(face) + " d=" + short_hex(packet_digest(pkt)));
      return;
    }
    ++n.c.sent;
    ++in_flight;
    schedule(now + link.latency_ms, a.peer, Arrival{a.peer_face, encode_packet(pkt), tag});
  }

  void originate(std::size_t node, FaceId face, const MinPacket& pkt, const Tag& tag) {
    ++nodes[node].c.originated;
    if (tag.attack) {
      ++attack_injected;
      ++attack_by_kind[std::string(to_string(tag.kind))].first;
    }
    transmit(node, face, pkt, tag);
  }

  void send_control(std::size_t from, std::size_t to, const registry::Message& m) {
    TimeMs lat = from == kOperator ? 1 : std::max<TimeMs>(1, control_latency[from][to]);
    schedule(now + lat, to, RegMsg{from, registry::encode_message(m)});
  }

  // -------------------------------------------------------------------------
  // Hosts

  MinPacket signed_packet(PacketKind kind, std::vector<Identifier> ids, Bytes payload, const User& u) {
    MinPacket p;
    p.kind = kind;
    p.identifiers = std::move(ids);
    p.readonly.timestamp = unix_now();
    p.readonly.nonce = random_nonce();
    p.variable.payload = std::move(payload);
    return identity::sign_packet(std::move(p), u.key);
  }

  bool sanctioned(std::size_t user) const {
    const auto& u = users[user];
    if (u.visa_revoked) return true;
    for (auto r : registries) {
      if (nodes[r].crashed) continue;
      auto rec = nodes[r].reg->find_identity(u.record.id_digest);
      return rec && rec->status == identity::Status::Banned;
    }
    return false;
  }

  std::size_t pick_user(std::size_t host, const std::string& name) const {
    return name.empty() ? nodes[host].users.front() : user_index.at(name);
  }

  void express(std::size_t req_index) {
    auto& req = requests[req_index];
    const auto& u = users[req.user];
    auto pkt = signed_packet(PacketKind::Interest, {req.name}, {}, u);
    log(req.host, "express " + req.name.to_string() + " d=" + short_hex(packet_digest(pkt)));
    originate(req.host, 1, pkt, Tag{});
    schedule(now + sc.retry_ms, req.host, RetryRequest{req_index});
  }

  void send_gp(std::uint64_t id) {
    auto& m = gp_messages.at(id);
    const auto& from = users[m.from];
    Bytes payload;
    put_be64(payload, id);
    payload.push_back(kGpData);
    auto pkt = signed_packet(PacketKind::GPPkt, {users[m.to].id}, std::move(payload), from);
    log(from.host, "push to=" + users[m.to].name + " d=" + short_hex(packet_digest(pkt)));
    originate(from.host, 1, pkt, Tag{});
    schedule(now + sc.retry_ms, from.host, RetryGp{id});
  }

  void host_receive(std::size_t h, const MinPacket& pkt, FaceId face, const Tag& tag) {
    auto& n = nodes[h];
    ++n.c.delivered;
    if (tag.attack) {
      ++attack_delivered;
      ++attack_by_kind[std::string(to_string(tag.kind))].second;
    } else if (pkt.signature) {
      delivered_signed.push_back({packet_digest(pkt), pkt.signature->signer_id});
    }
    const auto& name = pkt.name();
    switch (pkt.kind) {
      case PacketKind::Interest: {
        bool serves = std::any_of(n.spec.serves.begin(), n.spec.serves.end(),
                                  [&](const Identifier& p) { return is_prefix(p, name); });
        log(h, std::string("deliver Interest ") + name.to_string() + (serves ? " serve" : " ignore"));
        if (!serves) return;
        auto it = n.produced.find(name);
        if (it == n.produced.end()) {
          auto payload = crypto::sha256(encode_identifier(name));
          auto data = signed_packet(PacketKind::Data, {name}, Bytes(payload.begin(), payload.end()),
                                    users[n.users.front()]);
          it = n.produced.emplace(name, std::move(data)).first;
        }
        originate(h, face, it->second, Tag{});
        return;
      }
      case PacketKind::Data: {
        auto w = n.waiting.find(name);
        std::size_t satisfied = 0;
        if (w != n.waiting.end()) {
          for (auto r : w->second) {
            if (!requests[r].done) {
              requests[r].done = true;
              ++satisfied;
            }
          }
          n.waiting.erase(w);
        }
        log(h, "deliver Data " + name.to_string() + " satisfied=" + std::to_string(satisfied));
        return;
      }
      case PacketKind::GPPkt: {
        const auto& p = pkt.variable.payload;
        if (p.size() != 9 || tag.attack) {
          log(h, "deliver GPPkt unrecognised");
          return;
        }
        auto id = get_be64(ByteView(p.data(), 8));
        auto it = gp_messages.find(id);
        if (it == gp_messages.end()) return;
        auto& m = it->second;
        if (p[8] == kGpAck) {
          m.acked = true;
          log(h, "deliver ack id=" + std::to_string(id));
          return;
        }
        m.delivered = true;
        log(h, "deliver GPPkt id=" + std::to_string(id));
        Bytes ack;
        put_be64(ack, id);
        ack.push_back(kGpAck);
        auto reply = signed_packet(PacketKind::GPPkt, {users[m.from].id}, std::move(ack), users[m.to]);
        originate(h, face, reply, Tag{});
        return;
      }
    }
  }

  // -------------------------------------------------------------------------
  // Routers

  void note_forwarded(const MinPacket& pkt) {
    if (pkt.signature && ban_committed.contains(pkt.signature->signer_id)) ++banned_forwarded;
  }

  void router_receive(std::size_t r, const MinPacket& pkt, FaceId face, const Tag& tag) {
    auto& n = nodes[r];
    auto out = n.router->receive(pkt, face, now);
    std::string line = std::string(to_string(pkt.kind)) + " face=" + std::to_string(face) +
                       " d=" + short_hex(packet_digest(pkt));
    switch (out.disposition) {
      case forwarding::Disposition::Dropped:
        drop(r, out.reason, tag);
        log(r, line + " drop " + out.reason);
        return;
      case forwarding::Disposition::Forwarded:
        log(r, line + " fwd face=" + std::to_string(out.sends.front().face));
        note_forwarded(out.sends.front().packet);
        transmit(r, out.sends.front().face, out.sends.front().packet, tag);
        return;
      case forwarding::Disposition::Absorbed: {
        ++n.c.absorbed[out.reason];
        log(r, line + " " + out.reason + " sends=" + std::to_string(out.sends.size()));
        Tag out_tag = out.reason == "cs_satisfied" ? Tag{} : tag;
        for (const auto& s : out.sends) {
          note_forwarded(s.packet);
          ++n.c.originated;
          transmit(r, s.face, s.packet, out_tag);
        }
        for (const auto& why : out.refused) {
          ++n.c.originated;
          drop(r, why, out_tag);
        }
        return;
      }
    }
  }

  // -------------------------------------------------------------------------
  // Attacks

  void start_attack(const AttackAction& a) {
    AttackRt rt;
    rt.spec = a;
    rt.attacker = index.at(a.attacker);
    rt.rogue = crypto::SecretKey(random_seed());
    if (a.tap) {
      auto from = index.at(a.tap->first);
      rt.tap_to = index.at(a.tap->second);
      for (const auto& adj : nodes[from].adj) {
        if (adj.peer == rt.tap_to) rt.tap_link = adj.link;
      }
    }
    rt.active = true;
    attacks.push_back(std::move(rt));
    auto k = attacks.size() - 1;
    log(attacks[k].attacker, std::string("attack start ") + std::string(to_string(a.kind)));
    if (a.kind != AttackKind::Replay && a.kind != AttackKind::StolenStampFlood) {
      schedule(now + 1, attacks[k].attacker, AttackTick{k, 0});
    }
  }

  Identifier attack_name(const AttackRt& rt, std::uint32_t i) const {
    auto base = rt.spec.name.value_or(Identifier::content("/attack"));
    return child(base, "x" + std::to_string(i));
  }

  void attack_tick(std::size_t k, std::uint32_t i) {
    auto& rt = attacks[k];
    if (i >= rt.spec.count) return;
    Tag tag{true, rt.spec.kind};
    MinPacket p;
    p.kind = PacketKind::Interest;
    p.identifiers = {attack_name(rt, i)};
    p.readonly.timestamp = unix_now();
    p.readonly.nonce = random_nonce();
    switch (rt.spec.kind) {
      case AttackKind::ForgedVisa: {
        SignatureBlock sig;
        sig.signer_id = users[user_index.at(rt.spec.victim)].record.id_digest;
        sig.signature.resize(64);
        for (auto& b : sig.signature) b = static_cast<std::uint8_t>(rng());
        p.signature = std::move(sig);
        p.readonly.cyber_visa = random_digest();
        p.readonly.cyber_pass = random_digest();
        break;
      }
      case AttackKind::SpoofedSignature:
        p = identity::sign_packet(std::move(p), rt.rogue);
        p.signature->signer_id = users[user_index.at(rt.spec.victim)].record.id_digest;
        break;
      case AttackKind::UnregisteredIdentity:
        p = identity::sign_packet(std::move(p), rt.rogue);
        break;
      case AttackKind::StolenStampFlood: {
        p = *rt.stolen;
        if (rng() % 2 == 0) {
          p.variable.payload.push_back(static_cast<std::uint8_t>(rng()));
        } else {
          p.readonly.nonce = random_nonce();
          p.variable.payload.push_back(static_cast<std::uint8_t>(rng()));
        }
        break;
      }
      case AttackKind::Replay: return;
    }
    log(rt.attacker, "attack packet " + std::to_string(i) + " d=" + short_hex(packet_digest(p)));
    originate(rt.attacker, 1, p, tag);
    schedule(now + std::max<TimeMs>(1, rt.spec.interval_ms), rt.attacker, AttackTick{k, i + 1});
  }

  void observe_taps(std::size_t node, FaceId face, const MinPacket& pkt, const Tag& tag) {
    if (tag.attack || pkt.kind == PacketKind::Data) return;
    for (std::size_t k = 0; k < attacks.size(); ++k) {
      auto& rt = attacks[k];
      if (!rt.active || !rt.spec.tap || rt.tap_to != node) continue;
      if (nodes[node].adj[face - 1].link != rt.tap_link) continue;
      if (rt.captured >= rt.spec.count && rt.spec.kind == AttackKind::Replay) continue;
      if (rt.spec.kind == AttackKind::Replay) {
        ++rt.captured;
        schedule(now + rt.spec.delay_ms, rt.attacker, Inject{encode_packet(pkt), Tag{true, AttackKind::Replay}});
      } else if (!rt.stolen) {
        rt.stolen = pkt;
        ++rt.captured;
        schedule(now + rt.spec.delay_ms, rt.attacker, AttackTick{k, 0});
      }
    }
  }

  // -------------------------------------------------------------------------
  // Registry

  void submit(const registry::Transaction& tx) {
    for (auto r : registries) send_control(kOperator, r, registry::TxSubmit{tx});
  }

  std::uint64_t round_at(TimeMs t) const { return t / sc.round_ms + 1; }

  void maybe_propose(std::size_t node) {
    auto& reg = *nodes[node].reg;
    auto round = round_at(now);
    if (reg.proposer_for(round) != reg.name()) return;
    auto p = reg.propose(round, unix_now());
    if (!p) return;
    log(node, "propose round=" + std::to_string(round) + " txs=" + std::to_string(p->block.txs.size()));
    for (auto r : registries) {
      if (r != node) send_control(node, r, *p);
    }
  }

  void committed(std::size_t node, const registry::LedgerBlock& b) {
    log(node, "commit height=" + std::to_string(b.height) + " h=" + short_hex(b.hash()));
    for (const auto& tx : b.txs) {
      if (auto* ban = std::get_if<registry::BanBody>(&tx.body)) pending_bans.insert(ban->id);
    }
    for (auto it = pending_bans.begin(); it != pending_bans.end();) {
      bool everywhere = true;
      for (auto r : registries) {
        if (nodes[r].crashed) continue;
        auto rec = nodes[r].reg->find_identity(*it);
        if (!rec || rec->status != identity::Status::Banned) everywhere = false;
      }
      if (everywhere) {
        ban_committed.emplace(*it, now);
        it = pending_bans.erase(it);
      } else {
        ++it;
      }
    }
  }

  void registry_receive(std::size_t node, const RegMsg& m) {
    auto& reg = *nodes[node].reg;
    auto msg = registry::decode_message(m.wire);
    if (auto* t = std::get_if<registry::TxSubmit>(&msg)) {
      reg.relay(t->tx);
      log(node, "tx " + short_hex(t->tx.digest()) + " " + std::string(registry::to_string(t->tx.kind())));
      maybe_propose(node);
    } else if (auto* p = std::get_if<registry::Proposal>(&msg)) {
      auto v = reg.on_proposal(*p);
      log(node, std::string("proposal round=") + std::to_string(p->block.round) + (v ? " vote" : " reject"));
      if (v) send_control(node, index.at(p->block.proposer), *v);
    } else if (auto* v = std::get_if<registry::VoteMsg>(&msg)) {
      auto block = reg.on_vote(*v);
      log(node, "vote from " + v->vote.node);
      if (block && reg.on_commit(*block)) {
        committed(node, *block);
        for (auto r : registries) {
          if (r != node) send_control(node, r, registry::Commit{*block});
        }
      }
    } else if (auto* c = std::get_if<registry::Commit>(&msg)) {
      if (reg.on_commit(c->block)) {
        committed(node, c->block);
      } else {
        log(node, "commit rejected height=" + std::to_string(c->block.height));
      }
    }
  }

  // -------------------------------------------------------------------------
  // Actions

  void fire(const Action& a, std::size_t idx) {
    std::visit(
        [&](const auto& b) {
          using T = std::decay_t<decltype(b)>;
          if constexpr (std::is_same_v<T, InterestAction> || std::is_same_v<T, GpAction>) {
            if (!nodes[index.at(b.host)].crashed) issue(idx, 0);
          } else if constexpr (std::is_same_v<T, AttackAction>) {
            start_attack(b);
          } else if constexpr (std::is_same_v<T, CrashAction>) {
            nodes[index.at(b.node)].crashed = true;
            log(index.at(b.node), "crash");
          } else if constexpr (std::is_same_v<T, BanAction>) {
            const auto& u = users[user_index.at(b.user)];
            log(kOperator, "ban " + u.name);
            submit(operator_tx(u.domain, registry::BanBody{u.record.id_digest}));
          } else if constexpr (std::is_same_v<T, RevokeVisaAction>) {
            auto& u = users[user_index.at(b.user)];
            u.visa_revoked = true;
            log(kOperator, "revoke_visa " + u.name);
            struct Sink : customs::RevocationSink {
              Impl* sim;
              void record_visa_revocation(const Digest& subject, const std::string& domain) override {
                sim->submit(sim->operator_tx(domain, registry::RevokeBody{std::nullopt, subject, domain}));
              }
            } sink;
            sink.sim = this;
            customs::revoke_visa(keystore, sink, u.record.id_digest);
            for (auto& ctx : customs_contexts) ctx->keys.revoke(u.record.id_digest);
          } else if constexpr (std::is_same_v<T, RegisterAction>) {
            const auto& u = users[user_index.at(b.owner)];
            log(kOperator, "register " + b.identifier.to_string());
            submit(registry::make_transaction(registry::RegisterIdentifierBody{b.identifier, u.record.id_digest, u.domain},
                                              u.key, operator_nonce++));
          }
        },
        a.body);
  }

  void issue(std::size_t action, std::uint32_t i) {
    const auto& body = sc.actions[action].body;
    if (const auto* ia = std::get_if<InterestAction>(&body)) {
      if (i >= ia->count) return;
      auto host = index.at(ia->host);
      Request req;
      req.host = host;
      req.user = pick_user(host, ia->user);
      req.name = ia->distinct ? child(ia->name, std::to_string(i)) : ia->name;
      req.sanctioned = sanctioned(req.user);
      requests.push_back(req);
      nodes[host].waiting[req.name].push_back(requests.size() - 1);
      express(requests.size() - 1);
      if (i + 1 < ia->count) schedule(now + std::max<TimeMs>(1, ia->interval_ms), host, IssueTick{action, i + 1});
    } else if (const auto* ga = std::get_if<GpAction>(&body)) {
      if (i >= ga->count) return;
      auto host = index.at(ga->host);
      GpMessage m;
      m.from = pick_user(host, ga->user);
      m.to = user_index.at(ga->to);
      m.sanctioned = sanctioned(m.from);
      auto id = next_gp++;
      gp_messages.emplace(id, m);
      send_gp(id);
      if (i + 1 < ga->count) schedule(now + std::max<TimeMs>(1, ga->interval_ms), host, IssueTick{action, i + 1});
    }
  }

  // -------------------------------------------------------------------------
  // Main loop

  void process(Event& e) {
    std::visit(
        [&](auto& b) {
          using T = std::decay_t<decltype(b)>;
          if constexpr (std::is_same_v<T, Arrival>) {
            --in_flight;
            auto& n = nodes[e.node];
            ++n.c.received;
            if (n.crashed) {
              drop(e.node, "NodeDown", b.tag);
              log(e.node, "down");
              return;
            }
            MinPacket pkt;
            try {
              pkt = decode_packet(b.wire);
            } catch (const Error& err) {
              drop(e.node, "Malformed", b.tag);
              log(e.node, std::string("malformed ") + std::string(cogmin::to_string(err.code())));
              return;
            }
            observe_taps(e.node, b.face, pkt, b.tag);
            if (n.spec.role == Role::Host) {
              host_receive(e.node, pkt, b.face, b.tag);
            } else if (n.router) {
              router_receive(e.node, pkt, b.face, b.tag);
            } else {
              drop(e.node, "NotForwarded", b.tag);
              log(e.node, "not a router");
            }
          } else if constexpr (std::is_same_v<T, RegMsg>) {
            if (nodes[e.node].crashed) return;
            registry_receive(e.node, b);
          } else if constexpr (std::is_same_v<T, FireAction>) {
            fire(sc.actions[b.index], b.index);
          } else if constexpr (std::is_same_v<T, IssueTick>) {
            if (nodes[e.node].crashed) return;
            issue(b.action, b.i);
          } else if constexpr (std::is_same_v<T, RetryRequest>) {
            auto& req = requests[b.request];
            if (req.done || req.retries >= sc.max_retries || nodes[req.host].crashed) return;
            ++req.retries;
            express(b.request);
          } else if constexpr (std::is_same_v<T, RetryGp>) {
            auto& m = gp_messages.at(b.message);
            if (m.acked || m.retries >= sc.max_retries || nodes[users[m.from].host].crashed) return;
            ++m.retries;
            send_gp(b.message);
          } else if constexpr (std::is_same_v<T, AttackTick>) {
            attack_tick(b.attack, b.i);
          } else if constexpr (std::is_same_v<T, Inject>) {
            auto pkt = decode_packet(b.wire);
            log(e.node, "replay d=" + short_hex(packet_digest(pkt)));
            originate(e.node, 1, pkt, b.tag);
          } else if constexpr (std::is_same_v<T, RoundTick>) {
            for (auto r : registries) {
              if (!nodes[r].crashed) maybe_propose(r);
            }
            if (now + sc.round_ms <= sc.duration_ms) schedule(now + sc.round_ms, e.node, RoundTick{});
          } else if constexpr (std::is_same_v<T, SampleTick>) {
            sample();
            if (now + sc.sample_ms <= sc.duration_ms) schedule(now + sc.sample_ms, e.node, SampleTick{});
          } else if constexpr (std::is_same_v<T, AnchorTick>) {
            anchor();
            if (now + sc.anchor_interval_ms <= sc.duration_ms) {
              schedule(now + sc.anchor_interval_ms, e.node, AnchorTick{});
            }
          }
        },
        e.body);
  }

  void anchor() {
    for (auto& n : nodes) {
      if (!n.router || n.crashed) continue;
      const auto& log_ = n.router->audit();
      if (log_.records().size() == n.anchored_records) continue;
      n.anchored_records = log_.records().size();
      submit(operator_tx(n.spec.domain, registry::AuditAnchorBody{n.spec.name, n.spec.domain, log_.head_hash(),
                                                                  n.anchored_records}));
    }
  }

  struct Totals {
    std::uint64_t originated = 0, delivered = 0, absorbed = 0, dropped = 0, received = 0, sent = 0;
  };

  Totals totals() const {
    Totals t;
    for (const auto& n : nodes) {
      t.originated += n.c.originated;
      t.delivered += n.c.delivered;
      t.absorbed += total(n.c.absorbed);
      t.dropped += total(n.c.dropped);
      t.received += n.c.received;
      t.sent += n.c.sent;
    }
    return t;
  }

  std::uint64_t satisfied() const {
    std::uint64_t s = 0;
    for (const auto& r : requests) s += (!r.sanctioned && r.done) ? 1 : 0;
    for (const auto& [id, m] : gp_messages) s += (!m.sanctioned && m.delivered) ? 1 : 0;
    return s;
  }

  void sample() {
    auto t = totals();
    std::uint64_t attack_dropped = total(attack_drops);
    std::uint64_t height = 0;
    for (auto r : registries) height = std::max(height, nodes[r].reg->height());
    std::ostringstream os;
    os << now << ',' << t.originated << ',' << t.delivered << ',' << t.absorbed << ',' << t.dropped << ','
       << in_flight << ',' << satisfied() << ',' << attack_injected << ',' << attack_dropped << ','
       << attack_delivered << ',' << height << '\n';
    csv += os.str();
  }

  Report run() {
    csv = "time_ms,originated,delivered,absorbed,dropped,in_flight,legit_satisfied,attack_injected,"
          "attack_dropped,attack_delivered,ledger_height\n";
    for (std::size_t i = 0; i < sc.actions.size(); ++i) schedule(sc.actions[i].at, kOperator, FireAction{i});
    schedule(0, kOperator, RoundTick{});
    schedule(0, kOperator, SampleTick{});
    if (sc.anchor_interval_ms > 0) schedule(sc.anchor_interval_ms, kOperator, AnchorTick{});
    while (!queue.empty() && queue.top().time <= sc.duration_ms) {
      Event e = queue.top();
      queue.pop();
      now = e.time;
      ++events;
      process(e);
    }
    now = sc.duration_ms;
    return report();
  }

  json registry_json() const {
    json heights = json::object();
    bool consistent = true;
    std::size_t anchors = 0;
    for (auto r : registries) {
      heights[nodes[r].spec.name] = nodes[r].reg->height();
      anchors = std::max(anchors, nodes[r].reg->state().anchors().size());
    }
    for (std::size_t i = 0; i < registries.size(); ++i) {
      for (std::size_t j = i + 1; j < registries.size(); ++j) {
        const auto& a = nodes[registries[i]].reg->chain();
        const auto& b = nodes[registries[j]].reg->chain();
        for (std::size_t h = 0; h < std::min(a.size(), b.size()); ++h) {
          if (a[h].hash() != b[h].hash()) consistent = false;
        }
      }
    }
    std::uint64_t live_min = std::numeric_limits<std::uint64_t>::max(), live_max = 0;
    for (auto r : registries) {
      if (nodes[r].crashed) continue;
      live_min = std::min<std::uint64_t>(live_min, nodes[r].reg->height());
      live_max = std::max<std::uint64_t>(live_max, nodes[r].reg->height());
    }
    if (live_min == std::numeric_limits<std::uint64_t>::max()) live_min = 0;
    return json{{"heights", heights},
                {"consistent", consistent},
                {"live_height_min", live_min},
                {"live_height_max", live_max},
                {"live_heights_equal", live_min == live_max},
                {"anchors", anchors}};
  }

  Report report() {
    Report rep;
    auto t = totals();
    bool per_node_ok = true;
    json node_json = json::object();
    for (const auto& n : nodes) {
      std::uint64_t in = n.c.received + n.c.originated;
      std::uint64_t outv = n.c.delivered + total(n.c.absorbed) + total(n.c.dropped) + n.c.sent;
      if (in != outv) per_node_ok = false;
      json nj{{"role", std::string(to_string(n.spec.role))},
              {"domain", n.spec.domain},
              {"crashed", n.crashed},
              {"received", n.c.received},
              {"originated", n.c.originated},
              {"delivered", n.c.delivered},
              {"sent", n.c.sent},
              {"absorbed", n.c.absorbed},
              {"dropped", n.c.dropped},
              {"balanced", in == outv}};
      if (n.router) {
        const auto& m = n.router->metrics();
        nj["router"] = json{{"interests_in", m.interests_in},     {"data_in", m.data_in},
                            {"gppkts_in", m.gppkts_in},           {"cs_hits", m.cs_hits},
                            {"pit_aggregations", m.pit_aggregations}, {"pit_expired", m.pit_expired},
                            {"forwarded", m.forwarded},           {"drops_by_reason", m.drops_by_reason},
                            {"audit_records", n.router->audit().records().size()}};
      }
      if (n.reg) nj["ledger_height"] = n.reg->height();
      node_json[n.spec.name] = std::move(nj);
    }
    bool global_ok = t.originated == t.delivered + t.absorbed + t.dropped + in_flight &&
                     t.sent == t.received + in_flight;

    std::map<std::string, std::uint64_t> drops, absorbed;
    std::uint64_t cs_hits = 0;
    for (const auto& n : nodes) {
      for (const auto& [k, v] : n.c.dropped) drops[k] += v;
      for (const auto& [k, v] : n.c.absorbed) absorbed[k] += v;
      if (n.router) cs_hits += n.router->metrics().cs_hits;
    }

    std::uint64_t legit_total = 0, sanctioned_total = 0, req_done = 0, gp_done = 0, gp_total = 0, req_total = 0;
    for (const auto& r : requests) {
      if (r.sanctioned) {
        ++sanctioned_total;
        continue;
      }
      ++req_total;
      req_done += r.done ? 1 : 0;
    }
    for (const auto& [id, m] : gp_messages) {
      if (m.sanctioned) {
        ++sanctioned_total;
        continue;
      }
      ++gp_total;
      gp_done += m.delivered ? 1 : 0;
    }
    legit_total = req_total + gp_total;
    double ratio = legit_total == 0 ? 1.0 : static_cast<double>(req_done + gp_done) / static_cast<double>(legit_total);

    // Attribution: every delivered legitimate packet is traceable to its signer.
    std::map<Digest, std::vector<identity::AuditRecord>> by_digest;
    for (const auto& n : nodes) {
      if (!n.router) continue;
      for (const auto& rec : n.router->audit().records()) by_digest[rec.packet_digest].push_back(rec);
    }
    std::uint64_t trace_failures = 0;
    for (const auto& [digest, signer] : delivered_signed) {
      auto it = by_digest.find(digest);
      bool ok = it != by_digest.end();
      if (ok) {
        auto recs = identity::trace(it->second, digest);
        bool any = false;
        for (const auto& rec : recs) {
          if (rec.verdict != identity::AuditVerdict::Forwarded) continue;
          any = true;
          ok = ok && rec.signer == signer;
        }
        ok = ok && any;
      }
      trace_failures += ok ? 0 : 1;
    }

    json attack_kinds = json::object();
    for (const auto& [k, v] : attack_by_kind) attack_kinds[k] = json{{"injected", v.first}, {"delivered", v.second}};

    rep.trace = trace;
    rep.trace_hash = crypto::sha256(ByteView(reinterpret_cast<const std::uint8_t*>(trace.data()), trace.size()));
    rep.metrics = json{
        {"scenario", sc.name},
        {"seed", sc.seed},
        {"duration_ms", sc.duration_ms},
        {"events", events},
        {"trace_hash", to_hex(rep.trace_hash)},
        {"delivery_ratio", ratio},
        {"legit",
         json{{"requests", req_total},
              {"satisfied", req_done},
              {"gppkts", gp_total},
              {"gppkts_delivered", gp_done},
              {"sanctioned", sanctioned_total},
              {"cs_hits", cs_hits}}},
        {"attack",
         json{{"injected", attack_injected},
              {"delivered", attack_delivered},
              {"dropped", total(attack_drops)},
              {"drops_by_reason", attack_drops},
              {"by_kind", attack_kinds}}},
        {"conservation",
         json{{"ok", global_ok && per_node_ok},
              {"global_ok", global_ok},
              {"per_node_ok", per_node_ok},
              {"originated", t.originated},
              {"delivered", t.delivered},
              {"absorbed", t.absorbed},
              {"dropped", t.dropped},
              {"in_flight", in_flight}}},
        {"drops_by_reason", drops},
        {"absorbed_by_reason", absorbed},
        {"traceability", json{{"checked", delivered_signed.size()}, {"failures", trace_failures}}},
        {"bans", json{{"committed", ban_committed.size()}, {"forwarded_after_commit", banned_forwarded}}},
        {"registry", registry_json()},
        {"nodes", node_json},
    };
    json results = json::array();
    for (const auto& a : sc.assertions) {
      std::string detail;
      bool ok = check_assertion(rep.metrics, a, detail);
      if (!ok) rep.assertion_failures.push_back(detail);
      results.push_back(json{{"metric", a.metric}, {"op", a.op}, {"value", a.value}, {"ok", ok}, {"detail", detail}});
    }
    rep.metrics["assertions"] = results;
    rep.csv = csv;
    return rep;
  }
};

Simulation::Simulation(Scenario scenario) : impl_(std::make_unique<Impl>(std::move(scenario))) {}
Simulation::~Simulation() = default;

Report Simulation::run() { return impl_->run(); }

const Scenario& Simulation::scenario() const noexcept { return impl_->sc; }

std::vector<identity::AuditRecord> Simulation::audit_records() const {
  std::vector<identity::AuditRecord> out;
  for (const auto& n : impl_->nodes) {
    if (!n.router) continue;
    const auto& recs = n.router->audit().records();
    out.insert(out.end(), recs.begin(), recs.end());
  }
  return out;
}

std::vector<const forwarding::Router*> Simulation::routers() const {
  std::vector<const forwarding::Router*> out;
  for (const auto& n : impl_->nodes) {
    if (n.router) out.push_back(n.router.get());
  }
  return out;
}

std::vector<const registry::RegistryNode*> Simulation::registry_nodes() const {
  std::vector<const registry::RegistryNode*> out;
  for (const auto& n : impl_->nodes) {
    if (n.reg) out.push_back(n.reg.get());
  }
  return out;
}

Report run_scenario(const Scenario& scenario) {
  Simulation sim(scenario);
  return sim.run();
}

}  // namespace cogmin::simnet
