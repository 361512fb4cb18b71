#include "hgr/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <random>
#include <set>
#include <string>

#include "hgr/error.hpp"

namespace hgr {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// floor(log_base(m)) computed in integers, at least 1.
std::size_t floor_log(std::size_t m, std::size_t base) {
  std::size_t exponent = 0;
  std::size_t power = 1;
  while (power <= m / base) {
    power *= base;
    ++exponent;
  }
  return std::max<std::size_t>(exponent, 1);
}

// Distinct member edges of v, in membership order, minus `skip`.
std::vector<EdgeId> candidate_edges(const SemanticHypergraph& graph, EntityId v, std::optional<EdgeId> skip) {
  std::vector<EdgeId> out;
  for (const Membership& m : graph.memberships(v)) {
    if (skip && m.edge == *skip) continue;
    if (std::find(out.begin(), out.end(), m.edge) == out.end()) out.push_back(m.edge);
  }
  return out;
}

// Draws min(k, |pool|) items without replacement (partial Fisher-Yates).
template <class T>
std::vector<T> draw(std::vector<T> pool, std::size_t k, std::mt19937_64& rng) {
  if (pool.size() <= k) return pool;
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(k);
  return pool;
}

struct Expansion {
  std::set<EdgeId> edges;
  std::map<EntityId, std::size_t> distance;
};

Expansion expand(const SemanticHypergraph& graph, const std::vector<EntityId>& roots, std::optional<EdgeId> skip,
                 std::size_t hops, const FanoutSchedule& schedule, std::uint64_t seed) {
  Expansion ex;
  std::mt19937_64 rng(seed);
  std::vector<EntityId> frontier;
  for (EntityId v : roots) {
    if (ex.distance.emplace(v, 0).second) frontier.push_back(v);
  }
  for (std::size_t hop = 1; hop <= hops && !frontier.empty(); ++hop) {
    const std::size_t budget = schedule.per_hop[hop - 1];
    std::vector<EdgeId> added;
    for (EntityId u : frontier) {
      for (EdgeId e : draw(candidate_edges(graph, u, skip), budget, rng)) {
        if (ex.edges.insert(e).second) added.push_back(e);
      }
    }
    std::vector<EntityId> next;
    for (EdgeId e : added) {
      for (const RolePair& p : graph.edge(e).pairs) {
        if (ex.distance.emplace(p.entity, hop).second) next.push_back(p.entity);
      }
    }
    frontier = std::move(next);
  }
  return ex;
}

void check_schedule(const FanoutSchedule& schedule, std::size_t hops) {
  if (hops == 0) throw ValidationError("hop count must be >= 1");
  if (schedule.per_hop.size() < hops) {
    throw ValidationError("fanout schedule covers " + std::to_string(schedule.per_hop.size()) + " hops, need " +
                          std::to_string(hops));
  }
}

std::vector<EntityId> known_roots(const SemanticHypergraph& graph, const Query& query) {
  validate_query(graph, query);
  auto roots = query.known_entities();
  if (roots.empty()) throw ValidationError("query has no known entities");
  return roots;
}

}  // namespace

FanoutSchedule fanout_schedule(std::size_t m, std::size_t hops) {
  if (m == 0) throw ValidationError("base fanout m must be >= 1");
  if (hops == 0) throw ValidationError("hop count K must be >= 1");
  FanoutSchedule s;
  s.base = m;
  s.per_hop.push_back(m);
  for (std::size_t k = 2; k <= hops; ++k) s.per_hop.push_back(floor_log(m, k));
  return s;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  return splitmix64(splitmix64(seed) ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

bool Subgraph::contains_node(EntityId v) const { return std::binary_search(nodes.begin(), nodes.end(), v); }

std::size_t Subgraph::distance(EntityId v) const {
  auto it = hop_distance.find(v);
  return it == hop_distance.end() ? hops + 1 : it->second;
}

Subgraph sample_query_subgraph(const SemanticHypergraph& graph, const Query& query, std::size_t hops,
                               const FanoutSchedule& schedule, std::uint64_t seed) {
  check_schedule(schedule, hops);
  const auto roots = known_roots(graph, query);
  Expansion ex = expand(graph, roots, query.source_edge, hops, schedule, seed);

  Subgraph sub;
  sub.source = query;
  sub.hops = hops;
  sub.seed = seed;
  sub.edges.assign(ex.edges.begin(), ex.edges.end());
  for (const auto& [v, d] : ex.distance) sub.nodes.push_back(v);
  sub.hop_distance = std::move(ex.distance);
  return sub;
}

Subgraph sample_pair_subgraph(const SemanticHypergraph& graph, const Query& query, EntityId target,
                              std::size_t hops, const FanoutSchedule& schedule, std::uint64_t seed) {
  if (target >= graph.entity_count()) throw ValidationError("target entity id out of range");
  Subgraph sub = sample_query_subgraph(graph, query, hops, schedule, seed);
  Expansion side = expand(graph, {target}, query.source_edge, hops, schedule, derive_seed(seed, 1));

  std::set<EdgeId> edges(sub.edges.begin(), sub.edges.end());
  edges.insert(side.edges.begin(), side.edges.end());
  std::set<EntityId> nodes(sub.nodes.begin(), sub.nodes.end());
  for (const auto& [v, d] : side.distance) nodes.insert(v);

  // Shortest distances from the query entities over the merged edge set.
  std::map<EntityId, std::vector<EdgeId>> incident;
  for (EdgeId e : edges) {
    for (const RolePair& p : graph.edge(e).pairs) incident[p.entity].push_back(e);
  }
  std::map<EntityId, std::size_t> dist;
  std::deque<EntityId> queue;
  for (EntityId v : known_roots(graph, query)) {
    if (dist.emplace(v, 0).second) queue.push_back(v);
  }
  std::set<EdgeId> used;
  while (!queue.empty()) {
    EntityId u = queue.front();
    queue.pop_front();
    const std::size_t du = dist[u];
    if (du >= hops + 1) continue;
    for (EdgeId e : incident[u]) {
      if (!used.insert(e).second) continue;
      for (const RolePair& p : graph.edge(e).pairs) {
        if (dist.emplace(p.entity, du + 1).second) queue.push_back(p.entity);
      }
    }
  }
  for (EntityId v : nodes) dist.emplace(v, hops + 1);

  sub.edges.assign(edges.begin(), edges.end());
  sub.nodes.assign(nodes.begin(), nodes.end());
  sub.hop_distance = std::move(dist);
  sub.target = target;
  return sub;
}

Subgraph source_only_subgraph(const Query& query, std::size_t hops) {
  Subgraph sub;
  sub.source = query;
  sub.hops = hops;
  for (EntityId v : query.known_entities()) sub.hop_distance.emplace(v, 0);
  for (const auto& [v, d] : sub.hop_distance) sub.nodes.push_back(v);
  return sub;
}

std::vector<EdgeId> aggregation_edges(const SemanticHypergraph& graph, const Subgraph& sub, EntityId node,
                                      std::size_t cap) {
  std::vector<EdgeId> mine;
  for (const Membership& m : graph.memberships(node)) {
    if (std::binary_search(sub.edges.begin(), sub.edges.end(), m.edge) &&
        std::find(mine.begin(), mine.end(), m.edge) == mine.end()) {
      mine.push_back(m.edge);
    }
  }
  if (mine.size() > cap) {
    std::mt19937_64 rng(derive_seed(sub.seed, 0x100000000ULL + node));
    mine = draw(std::move(mine), cap, rng);
  }
  std::sort(mine.begin(), mine.end());
  return mine;
}

}  // namespace hgr
