#pragma once

#include "cogmin/common.hpp"

#include <compare>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace cogmin {

/// Identifier type codes as carried on the wire. Codes outside the known set
/// are carried opaquely so that new identifier spaces can be introduced.
enum class IdType : std::uint8_t {
  Identity = 1,
  Content = 2,
  Service = 3,
  Ip = 4,
  Hyperbolic = 5,
};

std::string_view to_string(IdType type);

/// A typed, possibly hierarchical network identifier.
///
/// Content and Service identifiers are names of 1 to 32 components of 1 to
/// 255 octets. Identity is a single 32-octet digest, Ip a single 4- or
/// 16-octet address, Hyperbolic two 8-octet big-endian signed fixed-point
/// coordinates with 32 fractional bits.
class Identifier {
 public:
  Identifier() = default;
  /// Validates; throws Error(InvariantViolation).
  Identifier(IdType type, std::vector<Bytes> components);

  static Identifier content(std::string_view path);
  static Identifier service(std::string_view path);
  static Identifier identity(const Digest& digest);
  static Identifier ip(std::string_view dotted_or_colon);
  static Identifier hyperbolic(std::int64_t x_fixed, std::int64_t y_fixed);

  /// Parses `content:/a/b`, `service:/x`, `identity:<hex>`, `ip:10.0.0.1`, `hyp:<x>,<y>`.
  static Identifier parse(std::string_view text);
  std::string to_string() const;

  IdType type() const noexcept { return type_; }
  const std::vector<Bytes>& components() const noexcept { return components_; }
  std::size_t size() const noexcept { return components_.size(); }

  /// Leading `n` components as a new identifier (Content and Service only).
  Identifier prefix(std::size_t n) const;

  void validate() const;

  friend auto operator<=>(const Identifier&, const Identifier&) = default;
  friend bool operator==(const Identifier&, const Identifier&) = default;

 private:
  IdType type_ = IdType::Content;
  std::vector<Bytes> components_;
};

bool is_hierarchical(IdType type) noexcept;

/// True iff same type and `a` is a leading sublist of `b` (equality for flat types).
bool is_prefix(const Identifier& a, const Identifier& b);

/// Rank used by the candidate ordering: Content, Service, Identity, Ip,
/// Hyperbolic, then unknown codes in numeric order.
int type_rank(IdType type) noexcept;

/// Strict total order used to rank routing candidates: type rank, then fewer
/// components, then lexicographic component order.
bool candidate_less(const Identifier& a, const Identifier& b);

using Reachability = std::function<bool(const Identifier&)>;
using CandidateOrder = std::function<bool(const Identifier&, const Identifier&)>;

/// Keeps the reachable identifiers and orders them by `order`.
/// Throws Error(NoValidIdentifier) when nothing is reachable.
std::vector<Identifier> sort_candidates(std::span<const Identifier> ids,
                                        const Reachability& reachable,
                                        const CandidateOrder& order = candidate_less);

/// Undirected graph of translation links between identifiers.
class IdentifierGraph {
 public:
  void add_node(const Identifier& id);
  /// Adds both endpoints as nodes when missing.
  void add_edge(const Identifier& a, const Identifier& b);

  bool contains(const Identifier& id) const { return adjacency_.contains(id); }
  const std::set<Identifier>& neighbors(const Identifier& id) const;
  std::size_t node_count() const noexcept { return adjacency_.size(); }
  std::vector<Identifier> nodes() const;

 private:
  std::map<Identifier, std::set<Identifier>> adjacency_;
};

/// Nearest node of `target` type by hop count; equal-distance ties go to the
/// candidate-order minimum. Throws Error(NoTranslation).
Identifier translate(const IdentifierGraph& graph, const Identifier& src, IdType target);

}  // namespace cogmin
