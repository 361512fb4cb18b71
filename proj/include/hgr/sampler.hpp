#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "hgr/hypergraph.hpp"

namespace hgr {

// Per-hop edge budgets: m at hop 1, floor(log_k m) (at least 1) at hop k >= 2.
struct FanoutSchedule {
  std::size_t base = 0;
  std::vector<std::size_t> per_hop;

  std::size_t hops() const { return per_hop.size(); }
};

FanoutSchedule fanout_schedule(std::size_t m, std::size_t hops);

// Sampled neighborhood around a query fact. The query itself is not a graph
// edge here; `edges` holds only sampled graph edges.
struct Subgraph {
  Query source;
  std::vector<EdgeId> edges;  // sorted, unique
  std::vector<EntityId> nodes;  // sorted, unique; members of `edges` plus known query entities
  std::map<EntityId, std::size_t> hop_distance;
  std::optional<EntityId> target;  // set for pair subgraphs
  std::size_t hops = 0;
  std::uint64_t seed = 0;

  bool contains_node(EntityId v) const;
  std::size_t distance(EntityId v) const;  // hops + 1 when unknown

  friend bool operator==(const Subgraph&, const Subgraph&) = default;
};

// Seed for query `index` under global seed `seed` (splitmix64 mixing).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

// Frontier expansion from the known query entities. The query's source edge,
// when set, is never sampled.
Subgraph sample_query_subgraph(const SemanticHypergraph& graph, const Query& query, std::size_t hops,
                               const FanoutSchedule& schedule, std::uint64_t seed);

// Query subgraph merged with the target's own sampled neighborhood. Hop
// distances are shortest distances from the query entities inside the merged
// edge set, capped at hops + 1.
Subgraph sample_pair_subgraph(const SemanticHypergraph& graph, const Query& query, EntityId target,
                              std::size_t hops, const FanoutSchedule& schedule, std::uint64_t seed);

// Only the query's known entities, no graph edges. Used by the intra-edge
// variant that performs a single V->E pass on the query itself.
Subgraph source_only_subgraph(const Query& query, std::size_t hops);

// Member edges of `node` inside the subgraph, at most `cap`, chosen by a
// seeded draw. Order follows the subgraph's edge order.
std::vector<EdgeId> aggregation_edges(const SemanticHypergraph& graph, const Subgraph& sub, EntityId node,
                                      std::size_t cap);

}  // namespace hgr
