#include "cogmin/codec.hpp"
#include "cogmin/customs.hpp"
#include "cogmin/identity.hpp"
#include "cogmin/registry.hpp"
#include "cogmin/simnet.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

using namespace cogmin;

namespace {

/// Domain failure that is not a library Error (failed verification, unmet assertion).
struct Failure {
  std::string message;
};

std::string trim(std::string s) {
  auto notspace = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), notspace));
  s.erase(std::find_if(s.rbegin(), s.rend(), notspace).base(), s.end());
  return s;
}

/// A literal hex string, or "-" to read it from standard input.
Bytes hex_arg(const std::string& arg) {
  if (arg == "-") {
    std::string all((std::istreambuf_iterator<char>(std::cin)), std::istreambuf_iterator<char>());
    return from_hex(trim(all));
  }
  return from_hex(trim(arg));
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot write " + path);
  out << text;
}

void print_packet(std::ostream& out, const MinPacket& p) {
  out << "kind       " << to_string(p.kind) << '\n';
  for (const auto& id : p.identifiers) out << "identifier " << id.to_string() << '\n';
  if (p.signature) {
    out << "signer     " << to_hex(as_view(p.signature->signer_id)) << '\n';
    out << "signature  " << to_hex(p.signature->signature) << '\n';
  }
  out << "timestamp  " << p.readonly.timestamp << '\n';
  if (p.readonly.cyber_visa) out << "visa       " << to_hex(as_view(*p.readonly.cyber_visa)) << '\n';
  if (p.readonly.cyber_pass) out << "pass       " << to_hex(as_view(*p.readonly.cyber_pass)) << '\n';
  out << "nonce      " << to_hex(p.readonly.nonce) << '\n';
  out << "hop_limit  " << static_cast<int>(p.variable.hop_limit) << '\n';
  out << "payload    " << to_hex(p.variable.payload) << '\n';
  std::size_t ext = p.extensions.size() + p.readonly.extensions.size() + p.variable.extensions.size() +
                    (p.signature ? p.signature->extensions.size() : 0);
  if (ext != 0) out << "extensions " << ext << '\n';
  out << "digest     " << to_hex(as_view(packet_digest(p))) << '\n';
}

PacketKind parse_kind(const std::string& s) {
  if (s == "interest") return PacketKind::Interest;
  if (s == "data") return PacketKind::Data;
  if (s == "gppkt") return PacketKind::GPPkt;
  throw CLI::ValidationError("--kind", "expected interest, data or gppkt");
}

crypto::SecretKey secret_arg(const std::string& hex) { return crypto::SecretKey(digest_from_hex(trim(hex))); }

/// Replays a ledger file into a read-only node.
std::unique_ptr<registry::RegistryNode> load_ledger(const std::string& path) {
  auto blocks = registry::parse_ledger(registry::read_file(path));
  if (blocks.empty() || !blocks.front().genesis) throw Error(Errc::InvalidProposal, path + ": no genesis block");
  auto node = std::make_unique<registry::RegistryNode>("reader", crypto::SecretKey(crypto::Seed{}),
                                                       *blocks.front().genesis);
  if (node->chain().front() != blocks.front()) throw Error(Errc::InvalidProposal, path + ": genesis mismatch");
  for (std::size_t i = 1; i < blocks.size(); ++i) {
    if (!node->on_commit(blocks[i])) throw Error(Errc::InvalidProposal, "block " + std::to_string(i) + " rejected");
  }
  return node;
}

void print_record(std::ostream& out, const registry::IdentifierRecord& r) {
  out << "identifier " << r.id.to_string() << '\n'
      << "owner      " << to_hex(as_view(r.owner)) << '\n'
      << "domain     " << r.domain << '\n'
      << "height     " << r.height << '\n'
      << "revoked    " << (r.revoked ? "yes" : "no") << '\n';
  for (const auto& l : r.links) out << "link       " << l.to_string() << '\n';
}

void dump_block(std::ostream& out, const registry::LedgerBlock& b) {
  out << "block " << b.height << " hash=" << to_hex(as_view(b.hash())) << '\n'
      << "  prev     " << to_hex(as_view(b.prev_hash)) << '\n'
      << "  proposer " << b.proposer << " round=" << b.round << " time=" << b.time << '\n';
  if (b.genesis) {
    for (const auto& m : b.genesis->committee) out << "  member   " << m.node << ' ' << to_hex(m.key) << '\n';
    for (const auto& d : b.genesis->domains) out << "  domain   " << d.name << " operators=" << d.operators.size() << '\n';
  }
  for (const auto& tx : b.txs) {
    out << "  tx       " << registry::to_string(tx.kind()) << ' ' << to_hex(as_view(tx.digest()))
        << " submitter=" << to_hex(as_view(tx.submitter)) << " nonce=" << tx.nonce << '\n';
  }
  for (const auto& v : b.votes) out << "  vote     " << v.node << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-identifier network toolkit"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "More output on stderr");

  // keygen
  auto* keygen = app.add_subcommand("keygen", "Generate an Ed25519 identity key");
  std::string keygen_seed;
  keygen->add_option("--seed", keygen_seed, "32-octet seed (hex) for a reproducible key");

  // packet
  auto* packet = app.add_subcommand("packet", "Encode or decode packets (hex)");
  packet->require_subcommand(1);
  auto* encode = packet->add_subcommand("encode", "Build a packet and print its hex encoding");
  std::string kind = "interest", payload, nonce_hex, secret_hex;
  std::vector<std::string> names;
  std::uint64_t timestamp = 0;
  unsigned hop_limit = 64;
  encode->add_option("--kind", kind, "interest, data or gppkt");
  encode->add_option("--id", names, "Identifier, e.g. content:/a/b (repeatable)")->required();
  encode->add_option("--payload", payload, "Payload (hex)");
  encode->add_option("--nonce", nonce_hex, "8-octet nonce (hex)");
  encode->add_option("--timestamp", timestamp, "UNIX seconds");
  encode->add_option("--hop-limit", hop_limit)->check(CLI::Range(0, 255));
  encode->add_option("--secret", secret_hex, "Signer seed (hex); signs the packet");
  auto* decode = packet->add_subcommand("decode", "Pretty-print a hex packet");
  std::string packet_hex;
  decode->add_option("packet", packet_hex, "Packet hex, or - for stdin")->required();

  // customs
  auto* customs_cmd = app.add_subcommand("customs", "Border stamping with a key file");
  customs_cmd->require_subcommand(1);
  std::string keys_path, subject_hex, from_domain, to_domain, revoke_domain;
  std::uint64_t now = 0;
  int skew = customs::kDefaultSkewWindows;
  auto* stamp = customs_cmd->add_subcommand("stamp", "Stamp an outbound packet");
  stamp->add_option("packet", packet_hex, "Packet hex, or - for stdin")->required();
  stamp->add_option("--keys", keys_path)->required();
  stamp->add_option("--subject", subject_hex, "Visa holder (defaults to the signer)");
  stamp->add_option("--from", from_domain, "Sending domain")->required();
  stamp->add_option("--to", to_domain, "Receiving domain")->required();
  stamp->add_option("--now", now, "UNIX seconds")->required();
  auto* verify = customs_cmd->add_subcommand("verify", "Check an inbound packet's stamps");
  verify->add_option("packet", packet_hex, "Packet hex, or - for stdin")->required();
  verify->add_option("--keys", keys_path)->required();
  verify->add_option("--subject", subject_hex, "Visa holder (defaults to the signer)");
  verify->add_option("--from", from_domain, "Sending domain")->required();
  verify->add_option("--to", to_domain, "Receiving domain")->required();
  verify->add_option("--now", now, "UNIX seconds")->required();
  verify->add_option("--skew", skew, "Tolerated windows either side")->check(CLI::NonNegativeNumber);
  auto* revoke = customs_cmd->add_subcommand("revoke", "Revoke a subject's visas in the key file");
  revoke->add_option("--keys", keys_path)->required();
  revoke->add_option("--subject", subject_hex)->required();
  revoke->add_option("--domain", revoke_domain, "Only this issuing domain");

  // registry
  auto* reg = app.add_subcommand("registry", "Registry ledger and node");
  reg->require_subcommand(1);
  std::string ledger_path, member_seed_hex;
  std::uint64_t committee_seed = 1;
  std::size_t member_index = 0, members = 1;
  std::vector<std::string> domains;
  auto* serve = reg->add_subcommand("serve", "Run one committee member over hex messages on stdin");
  serve->add_option("--ledger", ledger_path, "Ledger file (created with a fresh genesis if absent)")->required();
  serve->add_option("--committee-seed", committee_seed, "Seed the committee keys derive from");
  serve->add_option("--members", members, "Committee size for a fresh genesis")->check(CLI::PositiveNumber);
  serve->add_option("--index", member_index, "This node's committee index");
  serve->add_option("--domain", domains, "Domain for a fresh genesis, NAME or NAME=OPERATOR_PUBKEY (repeatable)");
  auto* submit = reg->add_subcommand("submit", "Sign a transaction and print its TxSubmit message");
  std::string ban_hex, register_id, owner_hex, tx_domain, revoke_id;
  std::vector<std::string> link;
  std::uint64_t tx_nonce = 1;
  submit->add_option("--secret", secret_hex, "Submitter seed (hex)")->required();
  submit->add_option("--nonce", tx_nonce);
  auto* body_group = submit->add_option_group("body");
  body_group->add_option("--register", register_id, "Identifier to register");
  body_group->add_option("--ban", ban_hex, "Identity digest to ban");
  body_group->add_option("--revoke", revoke_id, "Identifier to revoke");
  body_group->add_option("--link", link, "Translation link: FROM TO")->expected(2);
  body_group->require_option(1);
  submit->add_option("--owner", owner_hex, "Owner digest for --register (defaults to the submitter)");
  submit->add_option("--domain", tx_domain, "Domain for --register");
  auto* resolve = reg->add_subcommand("resolve", "Look up an identifier in a ledger");
  std::string resolve_id;
  resolve->add_option("--ledger", ledger_path)->required();
  resolve->add_option("identifier", resolve_id)->required();
  auto* dump = reg->add_subcommand("dump", "Print every block of a ledger");
  dump->add_option("ledger", ledger_path)->required();
  auto* rverify = reg->add_subcommand("verify", "Check a ledger's hash chain, votes and transactions");
  rverify->add_option("ledger", ledger_path)->required();

  // sim
  auto* sim = app.add_subcommand("sim", "Run network scenarios");
  sim->require_subcommand(1);
  std::string scenario_path, report_path, csv_path, trace_path, audit_dir;
  std::optional<std::uint64_t> seed_override;
  auto* run = sim->add_subcommand("run", "Run a scenario and check its assertions");
  run->add_option("scenario", scenario_path)->required();
  run->add_option("--seed", seed_override, "Override the scenario seed");
  run->add_option("--report", report_path, "Write the metrics JSON here instead of stdout");
  run->add_option("--csv", csv_path, "Write the sampled counters here");
  run->add_option("--trace", trace_path, "Write the event trace here");
  run->add_option("--audit-dir", audit_dir, "Write each router's audit log here");
  auto* validate = sim->add_subcommand("validate", "Check a scenario file");
  validate->add_option("scenario", scenario_path)->required();

  // trace
  auto* trace_cmd = app.add_subcommand("trace", "Find a packet's records in audit logs");
  std::string trace_digest;
  std::vector<std::string> audit_files;
  trace_cmd->add_option("digest", trace_digest, "Packet digest (hex)")->required();
  trace_cmd->add_option("--audit", audit_files, "Audit log files")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (*keygen) {
      auto kp = keygen_seed.empty() ? crypto::generate_keypair()
                                    : crypto::keypair_from_seed(digest_from_hex(keygen_seed));
      std::cout << "identity " << to_hex(as_view(identity::identity_digest(kp.public_key))) << ' '
                << to_hex(kp.public_key) << '\n'
                << "secret " << to_hex(kp.secret.seed()) << '\n';
    } else if (*encode) {
      MinPacket p;
      p.kind = parse_kind(kind);
      for (const auto& n : names) p.identifiers.push_back(Identifier::parse(n));
      if (!payload.empty()) p.variable.payload = from_hex(payload);
      if (!nonce_hex.empty()) {
        p.readonly.nonce = to_array<8>(from_hex(nonce_hex));
      } else {
        crypto::random_bytes(p.readonly.nonce);
      }
      p.readonly.timestamp = timestamp;
      p.variable.hop_limit = static_cast<std::uint8_t>(hop_limit);
      if (!secret_hex.empty()) p = identity::sign_packet(std::move(p), secret_arg(secret_hex));
      std::cout << to_hex(encode_packet(p)) << '\n';
    } else if (*decode) {
      print_packet(std::cout, decode_packet(hex_arg(packet_hex)));
    } else if (*stamp || *verify) {
      auto store = customs::KeyStore::load(keys_path);
      auto pkt = decode_packet(hex_arg(packet_hex));
      Digest subject{};
      if (!subject_hex.empty()) {
        subject = digest_from_hex(subject_hex);
      } else if (pkt.signature) {
        subject = pkt.signature->signer_id;
      } else {
        throw Failure{"unsigned packet: pass --subject"};
      }
      const auto* cvk = store.find_visa(subject, *stamp ? to_domain : from_domain);
      const auto* cpk = store.find_pass(from_domain, to_domain);
      if (cvk == nullptr) throw Error(Errc::UnknownSubject, "no visa key for subject");
      if (cpk == nullptr) throw Failure{"no passport key for " + from_domain + "/" + to_domain};
      if (*stamp) {
        std::cout << to_hex(encode_packet(customs::stamp_outbound(std::move(pkt), *cvk, *cpk, now))) << '\n';
      } else {
        auto v = customs::verify_inbound(pkt, *cvk, *cpk, now, skew, nullptr);
        std::cout << customs::to_string(v) << '\n';
        if (v != customs::Verdict::Accept) return 1;
      }
    } else if (*revoke) {
      auto store = customs::KeyStore::load(keys_path);
      std::optional<std::string> only;
      if (!revoke_domain.empty()) only = revoke_domain;
      for (const auto& d : store.revoke(digest_from_hex(subject_hex), only)) std::cout << "revoked " << d << '\n';
      write_text(keys_path, store.serialize());
    } else if (*serve) {
      if (!std::filesystem::exists(ledger_path)) {
        std::vector<registry::Domain> doms;
        for (const auto& d : domains) {
          auto eq = d.find('=');
          registry::Domain dom{d.substr(0, eq), {}};
          if (eq != std::string::npos) dom.operators.push_back(to_array<32>(from_hex(d.substr(eq + 1))));
          doms.push_back(std::move(dom));
        }
        registry::Committee fresh(members, committee_seed, doms);
        registry::append_block_to_file(ledger_path, fresh.node(0).chain().front());
      }
      auto blocks = registry::parse_ledger(registry::read_file(ledger_path));
      if (blocks.empty() || !blocks.front().genesis) throw Error(Errc::InvalidProposal, "ledger lacks genesis");
      const auto& genesis = *blocks.front().genesis;
      if (member_index >= genesis.committee.size()) throw Failure{"--index outside the committee"};
      crypto::SecretKey key(registry::Committee::node_seed(committee_seed, member_index));
      if (key.public_key() != genesis.committee[member_index].key) throw Failure{"key does not match the committee"};
      registry::RegistryNode node(genesis.committee[member_index].node, key, genesis);
      for (std::size_t i = 1; i < blocks.size(); ++i) {
        if (!node.on_commit(blocks[i])) throw Error(Errc::InvalidProposal, "stored block rejected");
      }
      auto emit = [&](const registry::Message& m) { std::cout << to_hex(registry::encode_message(m)) << std::endl; };
      auto commit = [&](const registry::LedgerBlock& b) {
        if (node.on_commit(b)) {
          registry::append_block_to_file(ledger_path, b);
          emit(registry::Commit{b});
        }
      };
      std::string line;
      while (std::getline(std::cin, line)) {
        line = trim(line);
        if (line.empty() || line.front() == '#') continue;
        try {
          if (line.rfind("propose ", 0) == 0) {
            auto round = std::stoull(line.substr(8));
            if (auto p = node.propose(round, round)) {
              emit(*p);
              if (genesis.committee.size() == 1) {
                registry::VoteMsg own{round, p->block.header_hash(), {node.name(), p->proposer_signature}};
                if (auto b = node.on_vote(own)) commit(*b);
              }
            }
            continue;
          }
          auto msg = registry::decode_message(from_hex(line));
          if (auto* t = std::get_if<registry::TxSubmit>(&msg)) {
            auto ticket = node.submit(t->tx);
            std::cerr << "pooled " << to_hex(as_view(ticket)) << '\n';
          } else if (auto* p = std::get_if<registry::Proposal>(&msg)) {
            if (auto v = node.on_proposal(*p)) emit(*v);
          } else if (auto* v = std::get_if<registry::VoteMsg>(&msg)) {
            if (auto b = node.on_vote(*v)) commit(*b);
          } else if (auto* c = std::get_if<registry::Commit>(&msg)) {
            commit(c->block);
          } else if (auto* q = std::get_if<registry::QueryReq>(&msg)) {
            emit(node.query(q->id));
          }
        } catch (const Error& e) {
          std::cerr << "error: " << e.what() << '\n';
        } catch (const std::exception& e) {
          std::cerr << "error: " << e.what() << '\n';
        }
      }
    } else if (*submit) {
      auto key = secret_arg(secret_hex);
      auto me = identity::identity_digest(key.public_key());
      registry::TxBody body;
      if (!register_id.empty()) {
        if (tx_domain.empty()) throw CLI::RequiredError("--domain");
        body = registry::RegisterIdentifierBody{Identifier::parse(register_id),
                                                owner_hex.empty() ? me : digest_from_hex(owner_hex), tx_domain};
      } else if (!ban_hex.empty()) {
        body = registry::BanBody{digest_from_hex(ban_hex)};
      } else if (!revoke_id.empty()) {
        body = registry::RevokeBody{Identifier::parse(revoke_id), {}, {}};
      } else {
        body = registry::TranslateLinkBody{Identifier::parse(link.at(0)), Identifier::parse(link.at(1))};
      }
      auto tx = registry::make_transaction(std::move(body), key, tx_nonce);
      std::cout << to_hex(registry::encode_message(registry::TxSubmit{tx})) << '\n';
    } else if (*resolve) {
      auto node = load_ledger(ledger_path);
      print_record(std::cout, node->resolve(Identifier::parse(resolve_id)));
    } else if (*dump) {
      for (const auto& b : registry::parse_ledger(registry::read_file(ledger_path))) dump_block(std::cout, b);
    } else if (*rverify) {
      auto check = registry::verify_chain_file(registry::read_file(ledger_path));
      if (!check.ok) {
        std::cout << "first bad height " << check.first_bad_height << ": " << check.reason << '\n';
        return 1;
      }
      std::cout << "ok\n";
    } else if (*validate) {
      auto s = simnet::Scenario::load(scenario_path);
      std::cout << "ok " << s.name << ": " << s.nodes.size() << " nodes, " << s.links.size() << " links, "
                << s.actions.size() << " actions\n";
    } else if (*run) {
      auto s = simnet::Scenario::load(scenario_path);
      simnet::apply_seed_override(s);
      if (seed_override) s.seed = *seed_override;
      simnet::Simulation simulation(s);
      auto rep = simulation.run();
      auto text = rep.metrics.dump(2) + "\n";
      if (report_path.empty()) {
        std::cout << text;
      } else {
        write_text(report_path, text);
      }
      if (!csv_path.empty()) write_text(csv_path, rep.csv);
      if (!trace_path.empty()) write_text(trace_path, rep.trace);
      if (!audit_dir.empty()) {
        std::filesystem::create_directories(audit_dir);
        for (const auto* router : simulation.routers()) {
          std::ofstream out(std::filesystem::path(audit_dir) / (router->config().name + ".audit"), std::ios::binary);
          router->audit().write(out);
        }
      }
      if (verbose) std::cerr << "trace_hash " << to_hex(as_view(rep.trace_hash)) << '\n';
      for (const auto& f : rep.assertion_failures) std::cerr << "assertion failed: " << f << '\n';
      if (!rep.assertion_failures.empty()) return 1;
    } else if (*trace_cmd) {
      std::vector<identity::AuditRecord> all;
      for (const auto& f : audit_files) {
        std::ifstream in(f, std::ios::binary);
        auto recs = identity::AuditLog::read(in);
        if (auto bad = identity::AuditLog::first_broken(recs)) {
          std::cerr << f << ": chain broken at record " << *bad << '\n';
        }
        all.insert(all.end(), recs.begin(), recs.end());
      }
      auto found = identity::trace(all, digest_from_hex(trace_digest));
      for (const auto& r : found) {
        std::cout << r.router << " seq=" << r.seq << " time=" << r.time << ' ' << identity::to_string(r.verdict)
                  << " signer=" << (r.signer == kZeroDigest ? std::string("unknown") : to_hex(as_view(r.signer)))
                  << '\n';
      }
      if (found.empty()) throw Failure{"no records for digest"};
    }
  } catch (const CLI::Error& e) {
    std::cerr << e.what() << '\n';
    return 2;
  } catch (const Failure& f) {
    std::cerr << "error: " << f.message << '\n';
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
