// Prints one PASS/FAIL line per acceptance criterion; exits non-zero on any FAIL.

#include "cogmin/codec.hpp"
#include "cogmin/customs.hpp"
#include "cogmin/forwarding.hpp"
#include "cogmin/registry.hpp"
#include "cogmin/simnet.hpp"
#include "oracle.hpp"
#include "registry_support.hpp"
#include "support.hpp"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>

using namespace cogmin;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::filesystem::path scenario_dir() {
  const char* env = std::getenv("COGMIN_SCENARIOS");
  return env != nullptr ? env : "scenarios";
}

simnet::Scenario load(const std::string& name) {
  return simnet::Scenario::load((scenario_dir() / (name + ".json")).string());
}

std::vector<simnet::Scenario> all_scenarios() {
  std::vector<std::filesystem::path> paths;
  for (const auto& e : std::filesystem::directory_iterator(scenario_dir())) {
    if (e.path().extension() == ".json") paths.push_back(e.path());
  }
  std::sort(paths.begin(), paths.end());
  std::vector<simnet::Scenario> out;
  for (const auto& p : paths) out.push_back(simnet::Scenario::load(p.string()));
  return out;
}

struct Result {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok && pass) detail << "first failure: " << what << "; ";
    pass = pass && ok;
  }
};

// ---------------------------------------------------------------------------

Result codec() {
  Result r;
  auto t0 = Clock::now();
  std::mt19937_64 rng(0xACCE1);
  std::size_t mismatches = 0;
  std::vector<Bytes> corpus;
  for (int i = 0; i < 100'000; ++i) {
    auto p = testsupport::random_packet(rng);
    auto wire = encode_packet(p);
    auto back = decode_packet(wire);
    if (!(back == p) || encode_packet(back) != wire) ++mismatches;
    if (i % 500 == 0) corpus.push_back(std::move(wire));
  }
  std::size_t accepted = 0, rejected = 0, unstable = 0, foreign_errors = 0;
  for (int i = 0; i < 1'000'000; ++i) {
    auto input = testsupport::fuzz_input(rng, corpus);
    auto heap = std::make_unique<std::uint8_t[]>(input.size() + 1);
    std::copy(input.begin(), input.end(), heap.get());
    try {
      auto p = decode_packet(ByteView(heap.get(), input.size()));
      ++accepted;
      if (encode_packet(p) != input) ++unstable;
    } catch (const Error&) {
      ++rejected;
    } catch (...) {
      ++foreign_errors;
    }
  }
  auto secs = seconds_since(t0);
  r.require(mismatches == 0, "round-trip mismatch");
  r.require(unstable == 0, "accepted fuzz input did not re-encode identically");
  r.require(foreign_errors == 0, "decoder threw a non-library exception");
  r.require(secs < 120, "runtime over 2 min");
  r.detail << "1e5 round-trips, " << mismatches << " mismatches; 1e6 fuzz inputs, " << accepted << " accepted, "
           << rejected << " rejected, 0 crashes; " << secs << " s";
  return r;
}

Result customs_correctness() {
  Result r;
  std::mt19937_64 rng(0xACCE2);
  std::size_t mismatches = 0;
  for (int i = 0; i < 10'000; ++i) {
    std::uint64_t now = rng() % 4 == 0 ? rng() : 1'700'000'000 + rng() % 500'000'000;
    auto cvk = testsupport::random_array<32>(rng);
    auto cpk = testsupport::random_array<32>(rng);
    if (customs::mask_time(now) != oracle::mask(now)) ++mismatches;
    if (customs::time256(customs::mask_time(now)) != oracle::time256(oracle::mask(now))) ++mismatches;
    auto visa = customs::compute_visa(now, {cvk, {}, "d", ~0ull, false});
    if (visa.value != oracle::visa(now, cvk)) ++mismatches;
    if (customs::compute_pass(visa, customs::CyberPassKey::between("a", "b", cpk)).value !=
        oracle::pass(visa.value, cpk)) {
      ++mismatches;
    }
  }
  r.require(mismatches == 0, "stamp differs from oracle");

  customs::CyberVisaKey cvk{Digest{0x5A}, Digest{1}, "b", ~0ull, false};
  auto cpk = customs::CyberPassKey::between("a", "b", Digest{0xA5});
  std::size_t checked = 0, wrong = 0, accepted_far = 0, rejected_near = 0;
  for (std::uint64_t phase = 0; phase < 16; ++phase) {
    std::uint64_t t = 1'700'000'000 + phase;
    MinPacket p;
    p.identifiers = {Identifier::content("/x")};
    p.readonly.nonce = testsupport::random_array<8>(rng);
    auto stamped = customs::stamp_outbound(p, cvk, cpk, t);
    for (int off = -64; off <= 64; ++off) {
      auto t2 = static_cast<std::uint64_t>(static_cast<std::int64_t>(t) + off);
      auto a = customs::mask_time(t2), b = customs::mask_time(t);
      bool expect = (a > b ? a - b : b - a) <= 16;
      bool got = customs::verify_inbound(stamped, cvk, cpk, t2, 1, nullptr) == customs::Verdict::Accept;
      ++checked;
      if (got != expect) ++wrong;
      if (got && std::abs(off) > 32) ++accepted_far;
      if (!got && std::abs(off) < 16) ++rejected_near;
    }
  }
  r.require(wrong == 0 && accepted_far == 0 && rejected_near == 0, "window rule violated");
  r.detail << "1e4 oracle pairs, " << mismatches << " mismatches; " << checked
           << " window checks over +-64 s at skew 1, " << wrong << " wrong";
  return r;
}

Result customs_security() {
  Result r;
  std::mt19937_64 rng(0xACCE3);
  customs::CyberVisaKey cvk{testsupport::random_array<32>(rng), Digest{1}, "b", ~0ull, false};
  auto cpk = customs::CyberPassKey::between("a", "b", testsupport::random_array<32>(rng));
  constexpr std::uint64_t kNow = 1'700'000'123;
  auto base = [&] {
    MinPacket p;
    p.identifiers = {Identifier::content("/target")};
    p.readonly.timestamp = kNow;
    p.readonly.nonce = testsupport::random_array<8>(rng);
    return p;
  };

  std::size_t forged_accepted = 0;
  customs::ReplayCache cache;
  for (int i = 0; i < 100'000; ++i) {
    auto p = base();
    customs::VisaStamp visa{testsupport::random_array<32>(rng)};
    p.readonly.cyber_visa = visa.value;
    // Pass consistent with the forged visa.
    p.readonly.cyber_pass = customs::compute_pass(visa, cpk).value;
    if (customs::verify_inbound(p, cvk, cpk, kNow, 1, &cache) == customs::Verdict::Accept) ++forged_accepted;
  }
  r.require(forged_accepted == 0, "forged visa accepted");

  std::size_t first_rejected = 0, replays_caught = 0;
  std::vector<MinPacket> stamped;
  for (int i = 0; i < 10'000; ++i) stamped.push_back(customs::stamp_outbound(base(), cvk, cpk, kNow));
  for (const auto& p : stamped) {
    if (customs::verify_inbound(p, cvk, cpk, kNow + 1, 1, &cache) != customs::Verdict::Accept) ++first_rejected;
  }
  for (const auto& p : stamped) {
    if (customs::verify_inbound(p, cvk, cpk, kNow + 5, 1, &cache) == customs::Verdict::Replay) ++replays_caught;
  }
  r.require(first_rejected == 0, "fresh stamped packet refused");
  r.require(replays_caught == stamped.size(), "replay not rejected as Replay");

  std::size_t wrong_cpk_accepted = 0;
  for (int i = 0; i < 10'000; ++i) {
    auto other = customs::CyberPassKey::between("a", "c", testsupport::random_array<32>(rng));
    auto p = customs::stamp_outbound(base(), cvk, other, kNow);
    if (customs::verify_inbound(p, cvk, cpk, kNow, 1, nullptr) != customs::Verdict::BadPass) ++wrong_cpk_accepted;
  }
  r.require(wrong_cpk_accepted == 0, "wrong-domain CPK not rejected");
  r.detail << "1e5 forged visas, " << forged_accepted << " accepted; 1e4 replays, " << replays_caught
           << " rejected as Replay; 1e4 wrong-CPK packets, " << wrong_cpk_accepted << " not rejected";
  return r;
}

Result customs_throughput() {
  Result r;
  std::mt19937_64 rng(0xACCE4);
  customs::CyberVisaKey cvk{testsupport::random_array<32>(rng), Digest{1}, "b", ~0ull, false};
  auto cpk = customs::CyberPassKey::between("a", "b", testsupport::random_array<32>(rng));
  constexpr std::uint64_t kNow = 1'700'000'000;
  constexpr int kOps = 400'000;
  std::vector<MinPacket> packets;
  packets.reserve(kOps);
  for (int i = 0; i < kOps; ++i) {
    MinPacket p;
    p.identifiers = {Identifier::content("/t")};
    p.readonly.nonce = testsupport::random_array<8>(rng);
    // Mix of windows so some packets match only the adjacent window.
    packets.push_back(customs::stamp_outbound(std::move(p), cvk, cpk, kNow + (i % 3) * 16));
  }
  customs::ReplayCache cache;
  std::size_t accepted = 0;
  auto t0 = Clock::now();
  for (const auto& p : packets) {
    if (customs::verify_inbound(p, cvk, cpk, kNow + 16, 1, &cache) == customs::Verdict::Accept) ++accepted;
  }
  auto secs = seconds_since(t0);
  double rate = kOps / secs;
  r.require(accepted == packets.size(), "valid packet refused");
  r.require(rate >= 1e5, "under 1e5 verifications per second");
  r.detail << kOps << " verify_inbound calls in " << secs << " s = " << static_cast<std::uint64_t>(rate) << "/s";
  return r;
}

Result forwarding_plane() {
  Result r;
  using namespace forwarding;
  crypto::SecretKey key(crypto::Seed{9});
  auto data = [&](const Identifier& name) {
    MinPacket p;
    p.kind = PacketKind::Data;
    p.identifiers = {name};
    return identity::sign_packet(p, key);
  };

  std::size_t pit_bad = 0;
  for (int k = 1; k <= 64; ++k) {
    Router router(RouterConfig{.name = "r", .domain = "d"});
    router.add_face(1000, FaceKind::Internal);
    router.fib().add(Identifier::content("/v"), 1000);
    std::size_t upstream = 0;
    for (int i = 0; i < k; ++i) {
      auto face = static_cast<FaceId>(i + 1);
      router.add_face(face, FaceKind::Host);
      MinPacket interest;
      interest.identifiers = {Identifier::content("/v/obj")};
      interest.readonly.nonce = {static_cast<std::uint8_t>(i), 0xAB};
      auto out = router.receive(interest, face, 5);
      for (const auto& s : out.sends) upstream += s.face == 1000;
    }
    auto back = router.receive(data(Identifier::content("/v/obj")), 1000, 9);
    std::set<FaceId> down;
    for (const auto& s : back.sends) down.insert(s.face);
    if (upstream != 1 || down.size() != static_cast<std::size_t>(k) || back.sends.size() != down.size()) ++pit_bad;
  }
  r.require(pit_bad == 0, "PIT aggregation");

  std::mt19937_64 rng(0xACCE5);
  std::size_t lru_bad = 0;
  for (std::size_t cap : {1u, 8u, 50u}) {
    ContentStore cs(cap);
    std::vector<Identifier> model;
    for (int step = 0; step < 10'000; ++step) {
      auto name = Identifier::content("/c/" + std::to_string(rng() % 120));
      auto pos = std::find(model.begin(), model.end(), name);
      if (rng() % 2 == 0) {
        cs.insert(data(name), static_cast<TimeMs>(step));
        if (pos != model.end()) model.erase(pos);
        else if (model.size() == cap) model.pop_back();
        model.insert(model.begin(), name);
      } else {
        bool hit = cs.lookup(name, static_cast<TimeMs>(step)) != nullptr;
        if (hit != (pos != model.end())) ++lru_bad;
        if (pos != model.end()) {
          model.erase(pos);
          model.insert(model.begin(), name);
        }
      }
      if (cs.names() != model) ++lru_bad;
    }
  }
  r.require(lru_bad == 0, "CS differs from LRU oracle");

  std::size_t scenarios = 0, conserved = 0;
  for (const auto& s : all_scenarios()) {
    auto rep = simnet::run_scenario(s);
    const auto& c = rep.metrics["conservation"];
    auto sum = c["delivered"].get<std::uint64_t>() + c["absorbed"].get<std::uint64_t>() +
               c["dropped"].get<std::uint64_t>() + c["in_flight"].get<std::uint64_t>();
    ++scenarios;
    bool ok = c["ok"] == true && c["global_ok"] == true && c["per_node_ok"] == true &&
              c["originated"].get<std::uint64_t>() == sum;
    conserved += ok;
    r.require(ok, "conservation broken in " + s.name);
  }
  r.require(scenarios >= 8, "shipped scenarios missing");
  r.detail << "PIT k=1..64, " << pit_bad << " failures; CS LRU over 3x1e4 events, " << lru_bad
           << " mismatches; conservation holds in " << conserved << "/" << scenarios << " scenarios";
  return r;
}

Result registry_safety() {
  Result r;
  using namespace registry;
  std::size_t schedules = 0, late_commits = 0, forks = 0;
  std::uint64_t worst_rounds = 0;

  auto run = [&](std::size_t n, std::uint64_t seed, const std::function<void(Committee&, std::uint64_t)>& faults) {
    Committee c(n, seed, testsupport::edu_domains());
    std::uint64_t tx_count = 2 * n + 2;
    for (std::uint64_t tx = 0; tx < tx_count; ++tx) {
      faults(c, tx);
      auto t = c.submit(testsupport::register_item(tx));
      std::uint64_t rounds = 0;
      bool done = false;
      while (!done && rounds < 4 * n) {
        c.run_round();
        ++rounds;
        for (std::size_t i = 0; i < n && !done; ++i) {
          done = c.fault(i) != NodeFault::Crashed && c.node(i).status(t).state == TicketState::Committed;
        }
      }
      worst_rounds = std::max(worst_rounds, rounds);
      if (!done || rounds > n) ++late_commits;
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (!verify_chain(c.node(i).chain()).ok) ++forks;
      for (std::size_t j = 0; j < n; ++j) {
        const auto& a = c.node(i).chain();
        const auto& b = c.node(j).chain();
        auto m = std::min(a.size(), b.size());
        if (!std::equal(a.begin(), a.begin() + static_cast<std::ptrdiff_t>(m), b.begin())) ++forks;
      }
    }
    ++schedules;
  };

  for (std::size_t n : {3u, 4u, 5u}) {
    for (std::size_t victim = 0; victim < n; ++victim) {
      // Crash before any traffic, and at every later transaction index.
      for (std::uint64_t at = 0; at <= n + 1; ++at) {
        run(n, 100 + n * 10 + victim, [&](Committee& c, std::uint64_t tx) {
          if (tx == at) c.set_fault(victim, NodeFault::Crashed);
        });
      }
      for (std::uint64_t seed = 0; seed < 4; ++seed) {
        run(n, 500 + seed * 7 + victim, [&](Committee& c, std::uint64_t tx) {
          if (tx == 0) c.set_fault(victim, NodeFault::ArbitraryVoter);
        });
      }
    }
  }
  r.require(late_commits == 0, "transaction not committed within n rounds");
  r.require(forks == 0, "committed prefixes diverge");

  auto chain = testsupport::build_chain(4, 8, 77);
  auto file = registry::serialize_ledger(chain);
  std::vector<std::size_t> starts;
  std::size_t pos = 0;
  for (const auto& b : chain) {
    starts.push_back(pos);
    pos += 4 + b.encode().size();
  }
  std::mt19937_64 rng(0xACCE6);
  std::size_t detected = 0, exact = 0;
  for (int i = 0; i < 1000; ++i) {
    auto at = rng() % file.size();
    auto bad = file;
    bad[at] ^= static_cast<std::uint8_t>(1 + rng() % 255);
    auto owner = static_cast<std::size_t>(std::upper_bound(starts.begin(), starts.end(), at) - starts.begin()) - 1;
    auto check = registry::verify_chain_file(bad);
    detected += !check.ok;
    exact += !check.ok && check.first_bad_height == owner;
  }
  r.require(detected == 1000 && exact == 1000, "corruption missed or misattributed");
  r.detail << schedules << " fault schedules over n=3,4,5, worst commit " << worst_rounds << " rounds, "
           << late_commits << " late, " << forks << " divergent prefixes; 1e3 corruptions, " << detected
           << " detected, " << exact << " at the exact height";
  return r;
}

Result traceability() {
  Result r;
  auto s = load("ban_trace");
  std::size_t routers = 0;
  for (const auto& n : s.nodes) routers += n.role == simnet::Role::Mir || n.role == simnet::Role::BorderMir;
  r.require(s.domains.size() == 3 && routers == 5, "scenario shape is not 3 domains / 5 routers");
  auto rep = simnet::run_scenario(s);
  const auto& m = rep.metrics;
  auto checked = m["traceability"]["checked"].get<std::uint64_t>();
  auto failures = m["traceability"]["failures"].get<std::uint64_t>();
  auto bans = m["bans"]["committed"].get<std::uint64_t>();
  auto after = m["bans"]["forwarded_after_commit"].get<std::uint64_t>();
  r.require(checked > 0 && failures == 0, "signer not recovered by trace");
  r.require(bans >= 1, "ban never committed");
  r.require(after == 0, "banned identity forwarded after commit");
  r.detail << s.domains.size() << " domains, " << routers << " routers; " << checked
           << " delivered packets traced, " << failures << " failures; " << bans << " ban committed, " << after
           << " packets forwarded after commit";
  return r;
}

Result attack_suite() {
  Result r;
  auto t0 = Clock::now();
  for (const char* name :
       {"forged_visa", "replay_attack", "spoofed_signature", "unregistered_identity", "stolen_stamp_flood"}) {
    auto s = load(name);
    bool lossy = std::any_of(s.links.begin(), s.links.end(), [](const simnet::LinkSpec& l) { return l.loss >= 0.01; });
    auto rep = simnet::run_scenario(s);
    const auto& m = rep.metrics;
    auto delivered = m["attack"]["delivered"].get<std::uint64_t>();
    auto injected = m["attack"]["injected"].get<std::uint64_t>();
    auto ratio = m["delivery_ratio"].get<double>();
    r.require(lossy, std::string(name) + " has no 1% lossy link");
    r.require(injected > 0 && delivered == 0, std::string(name) + " attack packet reached an endpoint");
    r.require(ratio >= 0.99, std::string(name) + " legit delivery ratio below 0.99");
    r.detail << name << ": " << injected << " injected, " << delivered << " delivered, ratio " << ratio << "; ";
  }
  auto secs = seconds_since(t0);
  r.require(secs < 300, "runtime over 5 min");
  r.detail << secs << " s";
  return r;
}

Result determinism() {
  Result r;
  std::size_t count = 0;
  for (const auto& s : all_scenarios()) {
    auto first = simnet::run_scenario(s);
    for (int run = 1; run < 3; ++run) {
      auto again = simnet::run_scenario(s);
      r.require(again.trace_hash == first.trace_hash && again.trace == first.trace, s.name + " trace differs");
    }
    ++count;
  }
  r.detail << count << " scenarios x 3 runs, trace hashes compared";
  return r;
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* title;
    Result (*run)();
  };
  const Criterion criteria[] = {
      {1, "codec round-trip and fuzzing", codec},
      {2, "customs stamps and window rule", customs_correctness},
      {3, "customs forgery, replay, wrong passport key", customs_security},
      {4, "customs verification throughput", customs_throughput},
      {5, "PIT aggregation, CS LRU, conservation", forwarding_plane},
      {6, "registry agreement and chain verification", registry_safety},
      {7, "traceability and bans", traceability},
      {8, "end-to-end attack suite", attack_suite},
      {9, "deterministic replay", determinism},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    Result res;
    try {
      res = c.run();
    } catch (const std::exception& e) {
      res.pass = false;
      res.detail << "exception: " << e.what();
    }
    failed += !res.pass;
    std::cout << "criterion " << c.id << " [" << c.title << "]: " << (res.pass ? "PASS" : "FAIL") << " - "
              << res.detail.str() << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
