#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace hgr {

using EntityId = std::uint32_t;
using RelationId = std::uint32_t;
using EdgeId = std::uint32_t;

inline constexpr std::size_t kDefaultMaxArity = 7;

struct RolePair {
  RelationId role = 0;
  EntityId entity = 0;

  friend bool operator==(const RolePair&, const RolePair&) = default;
  friend auto operator<=>(const RolePair&, const RolePair&) = default;
};

// An n-ary fact. Pair order is storage order only.
struct Hyperedge {
  EdgeId id = 0;
  std::vector<RolePair> pairs;
  // true = head/tail (primary), false = qualifier. Empty means all primary.
  std::vector<bool> primary;

  std::size_t arity() const { return pairs.size(); }
  bool is_primary(std::size_t slot) const { return primary.empty() || primary[slot]; }
};

struct Membership {
  EdgeId edge = 0;
  RelationId role = 0;

  friend bool operator==(const Membership&, const Membership&) = default;
};

struct GraphOptions {
  std::size_t max_arity = kDefaultMaxArity;
  // Allow the same entity to appear more than once in a fact under different roles.
  bool multi_role = true;
};

// Entity/relation/hyperedge store whose incidence values are relation ids
// rather than booleans. The |V| x |E| matrix is never materialized; it is
// represented by the per-entity membership lists.
class SemanticHypergraph {
 public:
  SemanticHypergraph() = default;

  std::size_t entity_count() const { return entity_count_; }
  std::size_t relation_count() const { return relation_count_; }
  std::size_t edge_count() const { return edges_.size(); }
  std::size_t max_arity() const { return options_.max_arity; }

  const std::vector<Hyperedge>& edges() const { return edges_; }
  const Hyperedge& edge(EdgeId e) const;
  std::span<const Membership> memberships(EntityId v) const;
  std::size_t degree(EntityId v) const { return memberships(v).size(); }
  std::size_t max_degree() const;

  // All roles v plays in e; empty when v is not a member.
  std::vector<RelationId> incidence_roles(EntityId v, EdgeId e) const;
  // Single-role view of the incidence matrix. With several roles returns the first.
  std::optional<RelationId> incidence_value(EntityId v, EdgeId e) const;

  // Member entities of e without v, deduplicated and sorted.
  std::vector<EntityId> intra_edge_neighbors(EntityId v, EdgeId e) const;
  // Distinct member entities of e, sorted.
  std::vector<EntityId> members(EdgeId e) const;

  // Exact k-hop neighborhood (edge ids, sorted).
  std::vector<EdgeId> k_hop_neighborhood(EntityId v, std::size_t k) const;

  // Number of entity-edge links of the star expansion (one per pair).
  std::size_t star_link_count() const;

  friend SemanticHypergraph build_hypergraph(std::vector<Hyperedge> facts, std::size_t entity_count,
                                             std::size_t relation_count, const GraphOptions& options);

 private:
  void check_entity(EntityId v) const;
  void check_edge(EdgeId e) const;

  std::size_t entity_count_ = 0;
  std::size_t relation_count_ = 0;
  GraphOptions options_;
  std::vector<Hyperedge> edges_;
  // CSR incidence: memberships of entity v are
  // incidence_[offsets_[v] .. offsets_[v + 1]).
  std::vector<std::size_t> offsets_{0};
  std::vector<Membership> incidence_;
};

// Validates and indexes the facts. Edge ids are reassigned to 0..|facts|-1 in
// input order.
SemanticHypergraph build_hypergraph(std::vector<Hyperedge> facts, std::size_t entity_count,
                                    std::size_t relation_count, const GraphOptions& options = {});

// An incomplete fact [r1:v1, ..., rp:?, ..., rn:vn].
struct Query {
  std::vector<RolePair> pairs;  // entity of pairs[missing] is ignored
  std::vector<bool> primary;
  std::size_t missing = 0;
  std::optional<EntityId> answer;
  // Graph edge this query was ablated from, excluded from sampling.
  std::optional<EdgeId> source_edge;

  RelationId missing_role() const { return pairs[missing].role; }
  bool missing_is_primary() const { return primary.empty() || primary[missing]; }
  // Entities of the non-missing slots, in slot order (may repeat).
  std::vector<EntityId> known_entities() const;

  friend bool operator==(const Query&, const Query&) = default;
};

// Ablates slot `slot` of edge e. The query remembers e as its source edge.
Query ablate(const SemanticHypergraph& graph, EdgeId e, std::size_t slot);

void validate_query(const SemanticHypergraph& graph, const Query& query);

}  // namespace hgr
