#include "cogmin/identifier.hpp"

#include <arpa/inet.h>

#include <algorithm>
#include <charconv>
#include <deque>

namespace cogmin {

std::string_view to_string(IdType type) {
  switch (type) {
    case IdType::Identity: return "identity";
    case IdType::Content: return "content";
    case IdType::Service: return "service";
    case IdType::Ip: return "ip";
    case IdType::Hyperbolic: return "hyp";
  }
  return "unknown";
}

bool is_hierarchical(IdType type) noexcept {
  return type == IdType::Content || type == IdType::Service;
}

namespace {

constexpr std::size_t kMaxComponents = 32;
constexpr std::size_t kMaxComponentOctets = 255;

bool unreserved(std::uint8_t c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
         c == '-' || c == '.' || c == '_' || c == '~';
}

std::vector<Bytes> parse_path(std::string_view path) {
  if (path.empty() || path.front() != '/') {
    throw Error(Errc::BadIdentifierSyntax, "name must start with '/'");
  }
  std::vector<Bytes> out;
  std::size_t pos = 1;
  while (pos <= path.size()) {
    auto next = path.find('/', pos);
    if (next == std::string_view::npos) next = path.size();
    auto piece = path.substr(pos, next - pos);
    if (piece.empty()) {
      if (next == path.size() && !out.empty()) break;  // tolerate one trailing '/'
      throw Error(Errc::BadIdentifierSyntax, "empty name component");
    }
    Bytes comp;
    for (std::size_t i = 0; i < piece.size(); ++i) {
      if (piece[i] == '%') {
        if (i + 2 >= piece.size()) {
          throw Error(Errc::BadIdentifierSyntax, "truncated percent escape");
        }
        auto raw = from_hex(piece.substr(i + 1, 2));
        comp.push_back(raw[0]);
        i += 2;
      } else {
        comp.push_back(static_cast<std::uint8_t>(piece[i]));
      }
    }
    out.push_back(std::move(comp));
    pos = next + 1;
  }
  return out;
}

std::string format_path(const std::vector<Bytes>& comps) {
  static constexpr char kDigits[] = "0123456789ABCDEF";
  std::string out;
  for (const auto& c : comps) {
    out.push_back('/');
    for (auto b : c) {
      if (unreserved(b)) {
        out.push_back(static_cast<char>(b));
      } else {
        out.push_back('%');
        out.push_back(kDigits[b >> 4]);
        out.push_back(kDigits[b & 0x0f]);
      }
    }
  }
  return out;
}

Bytes be64(std::int64_t v) {
  Bytes out;
  put_be64(out, static_cast<std::uint64_t>(v));
  return out;
}

constexpr long double kFixedScale = 4294967296.0L;

// Exact decimal -> 32.32 fixed point (round half away from zero).
std::int64_t parse_fixed(std::string_view s) {
  bool neg = false;
  if (!s.empty() && (s.front() == '-' || s.front() == '+')) {
    neg = s.front() == '-';
    s.remove_prefix(1);
  }
  auto dot = s.find('.');
  auto int_part = s.substr(0, dot);
  auto frac_part = dot == std::string_view::npos ? std::string_view{} : s.substr(dot + 1);
  if (int_part.empty() && frac_part.empty()) {
    throw Error(Errc::BadIdentifierSyntax, "empty coordinate");
  }
  unsigned __int128 whole = 0;
  for (char c : int_part) {
    if (c < '0' || c > '9') throw Error(Errc::BadIdentifierSyntax, "bad coordinate digit");
    whole = whole * 10 + static_cast<unsigned>(c - '0');
    if (whole > (static_cast<unsigned __int128>(1) << 31)) {
      throw Error(Errc::BadIdentifierSyntax, "coordinate out of range");
    }
  }
  if (frac_part.size() > 24) frac_part = frac_part.substr(0, 24);
  unsigned __int128 num = 0;
  unsigned __int128 den = 1;
  for (char c : frac_part) {
    if (c < '0' || c > '9') throw Error(Errc::BadIdentifierSyntax, "bad coordinate digit");
    num = num * 10 + static_cast<unsigned>(c - '0');
    den *= 10;
  }
  unsigned __int128 frac = (num * (static_cast<unsigned __int128>(1) << 32) + den / 2) / den;
  unsigned __int128 mag = (whole << 32) + frac;
  unsigned __int128 limit = static_cast<unsigned __int128>(1) << 63;
  if ((!neg && mag >= limit) || (neg && mag > limit)) {
    throw Error(Errc::BadIdentifierSyntax, "coordinate out of range");
  }
  return neg ? static_cast<std::int64_t>(-static_cast<__int128>(mag))
             : static_cast<std::int64_t>(mag);
}

std::string format_fixed(std::int64_t v) {
  bool neg = v < 0;
  unsigned __int128 mag = neg ? static_cast<unsigned __int128>(-static_cast<__int128>(v))
                              : static_cast<unsigned __int128>(v);
  auto whole = static_cast<std::uint64_t>(mag >> 32);
  auto frac = static_cast<std::uint64_t>(mag & 0xffffffffu);
  std::string out = neg ? "-" : "";
  out += std::to_string(whole);
  if (frac == 0) return out;
  // Shortest decimal fraction that parses back to the same fixed-point value.
  for (int digits = 1; digits <= 12; ++digits) {
    unsigned __int128 pow10 = 1;
    for (int i = 0; i < digits; ++i) pow10 *= 10;
    auto scaled = static_cast<std::uint64_t>((frac * pow10 + (1ull << 31)) >> 32);
    if (scaled >= pow10) continue;  // would round into the integer part
    std::string text = std::to_string(scaled);
    text.insert(0, static_cast<std::size_t>(digits) - text.size(), '0');
    std::string candidate = out + "." + text;
    if (parse_fixed(candidate) == v) return candidate;
  }
  return out;
}

}  // namespace

Identifier::Identifier(IdType type, std::vector<Bytes> components)
    : type_(type), components_(std::move(components)) {
  validate();
}

void Identifier::validate() const {
  auto fail = [&](const std::string& why) {
    throw Error(Errc::InvariantViolation, std::string(cogmin::to_string(type_)) + ": " + why);
  };
  switch (type_) {
    case IdType::Content:
    case IdType::Service:
      if (components_.empty() || components_.size() > kMaxComponents) {
        fail("name must have 1-32 components");
      }
      for (const auto& c : components_) {
        if (c.empty() || c.size() > kMaxComponentOctets) fail("component must be 1-255 octets");
      }
      break;
    case IdType::Identity:
      if (components_.size() != 1 || components_[0].size() != 32) fail("expects one 32-octet digest");
      break;
    case IdType::Ip:
      if (components_.size() != 1 || (components_[0].size() != 4 && components_[0].size() != 16)) {
        fail("expects one 4- or 16-octet address");
      }
      break;
    case IdType::Hyperbolic:
      if (components_.size() != 2 || components_[0].size() != 8 || components_[1].size() != 8) {
        fail("expects two 8-octet coordinates");
      }
      break;
    default:
      if (components_.empty()) fail("needs at least one component");
      for (const auto& c : components_) {
        if (c.empty()) fail("empty component");
      }
  }
}

Identifier Identifier::content(std::string_view path) {
  return Identifier(IdType::Content, parse_path(path));
}

Identifier Identifier::service(std::string_view path) {
  return Identifier(IdType::Service, parse_path(path));
}

Identifier Identifier::identity(const Digest& digest) {
  return Identifier(IdType::Identity, {Bytes(digest.begin(), digest.end())});
}

Identifier Identifier::ip(std::string_view text) {
  std::string s(text);
  Bytes addr(16);
  if (inet_pton(AF_INET, s.c_str(), addr.data()) == 1) {
    addr.resize(4);
  } else if (inet_pton(AF_INET6, s.c_str(), addr.data()) != 1) {
    throw Error(Errc::BadIdentifierSyntax, "bad IP address '" + s + "'");
  }
  return Identifier(IdType::Ip, {std::move(addr)});
}

Identifier Identifier::hyperbolic(std::int64_t x_fixed, std::int64_t y_fixed) {
  return Identifier(IdType::Hyperbolic, {be64(x_fixed), be64(y_fixed)});
}

Identifier Identifier::parse(std::string_view text) {
  auto colon = text.find(':');
  if (colon == std::string_view::npos) {
    throw Error(Errc::BadIdentifierSyntax, "missing type prefix in '" + std::string(text) + "'");
  }
  auto scheme = text.substr(0, colon);
  auto rest = text.substr(colon + 1);
  if (scheme == "content") return content(rest);
  if (scheme == "service") return service(rest);
  if (scheme == "identity") return identity(digest_from_hex(rest));
  if (scheme == "ip") return ip(rest);
  if (scheme == "hyp") {
    auto comma = rest.find(',');
    if (comma == std::string_view::npos) throw Error(Errc::BadIdentifierSyntax, "hyp needs x,y");
    return hyperbolic(parse_fixed(rest.substr(0, comma)), parse_fixed(rest.substr(comma + 1)));
  }
  throw Error(Errc::BadIdentifierSyntax, "unknown identifier type '" + std::string(scheme) + "'");
}

std::string Identifier::to_string() const {
  switch (type_) {
    case IdType::Content: return "content:" + format_path(components_);
    case IdType::Service: return "service:" + format_path(components_);
    case IdType::Identity: return "identity:" + to_hex(components_.at(0));
    case IdType::Ip: {
      char buf[INET6_ADDRSTRLEN] = {};
      const auto& a = components_.at(0);
      inet_ntop(a.size() == 4 ? AF_INET : AF_INET6, a.data(), buf, sizeof buf);
      return std::string("ip:") + buf;
    }
    case IdType::Hyperbolic:
      return "hyp:" + format_fixed(static_cast<std::int64_t>(get_be64(components_.at(0)))) + "," +
             format_fixed(static_cast<std::int64_t>(get_be64(components_.at(1))));
  }
  std::string out = "type" + std::to_string(static_cast<unsigned>(type_)) + ":";
  for (const auto& c : components_) out += "/" + to_hex(c);
  return out;
}

Identifier Identifier::prefix(std::size_t n) const {
  if (!is_hierarchical(type_) || n == 0 || n > components_.size()) {
    throw Error(Errc::InvariantViolation, "invalid prefix length");
  }
  return Identifier(type_, std::vector<Bytes>(components_.begin(), components_.begin() + n));
}

bool is_prefix(const Identifier& a, const Identifier& b) {
  if (a.type() != b.type()) return false;
  if (!is_hierarchical(a.type())) return a == b;
  const auto& ac = a.components();
  const auto& bc = b.components();
  if (ac.size() > bc.size()) return false;
  return std::equal(ac.begin(), ac.end(), bc.begin());
}

int type_rank(IdType type) noexcept {
  switch (type) {
    case IdType::Content: return 0;
    case IdType::Service: return 1;
    case IdType::Identity: return 2;
    case IdType::Ip: return 3;
    case IdType::Hyperbolic: return 4;
  }
  return 5 + static_cast<int>(type);
}

bool candidate_less(const Identifier& a, const Identifier& b) {
  if (int ra = type_rank(a.type()), rb = type_rank(b.type()); ra != rb) return ra < rb;
  if (a.size() != b.size()) return a.size() < b.size();
  return a.components() < b.components();
}

std::vector<Identifier> sort_candidates(std::span<const Identifier> ids,
                                        const Reachability& reachable,
                                        const CandidateOrder& order) {
  std::vector<Identifier> out;
  for (const auto& id : ids) {
    if (reachable(id)) out.push_back(id);
  }
  if (out.empty()) throw Error(Errc::NoValidIdentifier, "no reachable identifier");
  std::stable_sort(out.begin(), out.end(), order);
  return out;
}

void IdentifierGraph::add_node(const Identifier& id) { adjacency_.try_emplace(id); }

void IdentifierGraph::add_edge(const Identifier& a, const Identifier& b) {
  adjacency_[a].insert(b);
  adjacency_[b].insert(a);
}

const std::set<Identifier>& IdentifierGraph::neighbors(const Identifier& id) const {
  static const std::set<Identifier> kNone;
  auto it = adjacency_.find(id);
  return it == adjacency_.end() ? kNone : it->second;
}

std::vector<Identifier> IdentifierGraph::nodes() const {
  std::vector<Identifier> out;
  out.reserve(adjacency_.size());
  for (const auto& [id, _] : adjacency_) out.push_back(id);
  return out;
}

Identifier translate(const IdentifierGraph& graph, const Identifier& src, IdType target) {
  if (!graph.contains(src)) throw Error(Errc::NoTranslation, "source not in graph");
  if (src.type() == target) return src;

  // Level-synchronous BFS: the first level containing a target-type node wins.
  std::set<Identifier> seen{src};
  std::vector<Identifier> frontier{src};
  while (!frontier.empty()) {
    std::vector<Identifier> next;
    const Identifier* best = nullptr;
    for (const auto& node : frontier) {
      for (const auto& nb : graph.neighbors(node)) {
        if (!seen.insert(nb).second) continue;
        next.push_back(nb);
      }
    }
    for (const auto& nb : next) {
      if (nb.type() == target && (best == nullptr || candidate_less(nb, *best))) best = &nb;
    }
    if (best != nullptr) return *best;
    frontier = std::move(next);
  }
  throw Error(Errc::NoTranslation, "no " + std::string(to_string(target)) + " identifier reachable");
}

}  // namespace cogmin
