#include "hgr/hypergraph.hpp"

#include <algorithm>
#include <string>

#include "hgr/error.hpp"

namespace hgr {

namespace {

void sort_unique(std::vector<EntityId>& v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
}

}  // namespace

SemanticHypergraph build_hypergraph(std::vector<Hyperedge> facts, std::size_t entity_count,
                                    std::size_t relation_count, const GraphOptions& options) {
  SemanticHypergraph g;
  g.entity_count_ = entity_count;
  g.relation_count_ = relation_count;
  g.options_ = options;

  std::vector<std::size_t> counts(entity_count, 0);
  for (std::size_t i = 0; i < facts.size(); ++i) {
    Hyperedge& f = facts[i];
    const std::string where = "fact " + std::to_string(i);
    if (f.arity() < 2) {
      throw ValidationError(where + ": arity " + std::to_string(f.arity()) + " < 2");
    }
    if (f.arity() > options.max_arity) {
      throw ValidationError(where + ": arity " + std::to_string(f.arity()) + " exceeds max arity " +
                            std::to_string(options.max_arity));
    }
    if (!f.primary.empty() && f.primary.size() != f.arity()) {
      throw ValidationError(where + ": primary flag count does not match arity");
    }
    for (const RolePair& p : f.pairs) {
      if (p.role >= relation_count) {
        throw ValidationError(where + ": relation id " + std::to_string(p.role) + " out of range");
      }
      if (p.entity >= entity_count) {
        throw ValidationError(where + ": entity id " + std::to_string(p.entity) + " out of range");
      }
    }
    for (std::size_t a = 0; a < f.arity(); ++a) {
      for (std::size_t b = a + 1; b < f.arity(); ++b) {
        if (f.pairs[a] == f.pairs[b]) throw ValidationError(where + ": duplicate role-entity pair");
        if (!options.multi_role && f.pairs[a].entity == f.pairs[b].entity) {
          throw ValidationError(where + ": entity " + std::to_string(f.pairs[a].entity) +
                                " holds several roles but multi-role support is disabled");
        }
      }
    }
    f.id = static_cast<EdgeId>(i);
    for (const RolePair& p : f.pairs) ++counts[p.entity];
  }

  g.offsets_.assign(entity_count + 1, 0);
  for (std::size_t v = 0; v < entity_count; ++v) g.offsets_[v + 1] = g.offsets_[v] + counts[v];
  g.incidence_.resize(g.offsets_.back());
  std::vector<std::size_t> cursor(g.offsets_.begin(), g.offsets_.end() - 1);
  for (const Hyperedge& f : facts) {
    for (const RolePair& p : f.pairs) g.incidence_[cursor[p.entity]++] = Membership{f.id, p.role};
  }
  g.edges_ = std::move(facts);
  return g;
}

void SemanticHypergraph::check_entity(EntityId v) const {
  if (v >= entity_count_) throw ValidationError("entity id " + std::to_string(v) + " out of range");
}

void SemanticHypergraph::check_edge(EdgeId e) const {
  if (e >= edges_.size()) throw ValidationError("edge id " + std::to_string(e) + " out of range");
}

const Hyperedge& SemanticHypergraph::edge(EdgeId e) const {
  check_edge(e);
  return edges_[e];
}

std::span<const Membership> SemanticHypergraph::memberships(EntityId v) const {
  check_entity(v);
  return {incidence_.data() + offsets_[v], offsets_[v + 1] - offsets_[v]};
}

std::size_t SemanticHypergraph::max_degree() const {
  std::size_t best = 0;
  for (std::size_t v = 0; v < entity_count_; ++v) best = std::max(best, offsets_[v + 1] - offsets_[v]);
  return best;
}

std::vector<RelationId> SemanticHypergraph::incidence_roles(EntityId v, EdgeId e) const {
  check_entity(v);
  check_edge(e);
  std::vector<RelationId> roles;
  for (const RolePair& p : edges_[e].pairs) {
    if (p.entity == v) roles.push_back(p.role);
  }
  return roles;
}

std::optional<RelationId> SemanticHypergraph::incidence_value(EntityId v, EdgeId e) const {
  auto roles = incidence_roles(v, e);
  if (roles.empty()) return std::nullopt;
  return roles.front();
}

std::vector<EntityId> SemanticHypergraph::members(EdgeId e) const {
  check_edge(e);
  std::vector<EntityId> out;
  for (const RolePair& p : edges_[e].pairs) out.push_back(p.entity);
  sort_unique(out);
  return out;
}

std::vector<EntityId> SemanticHypergraph::intra_edge_neighbors(EntityId v, EdgeId e) const {
  check_entity(v);
  auto all = members(e);
  auto it = std::lower_bound(all.begin(), all.end(), v);
  if (it == all.end() || *it != v) {
    throw ContractError("entity " + std::to_string(v) + " is not a member of edge " + std::to_string(e));
  }
  all.erase(it);
  return all;
}

std::vector<EdgeId> SemanticHypergraph::k_hop_neighborhood(EntityId v, std::size_t k) const {
  check_entity(v);
  if (k == 0) throw ValidationError("hop count must be >= 1");
  std::vector<char> edge_seen(edges_.size(), 0);
  std::vector<char> node_seen(entity_count_, 0);
  std::vector<EdgeId> result;
  std::vector<EntityId> frontier{v};
  node_seen[v] = 1;
  for (std::size_t hop = 1; hop <= k && !frontier.empty(); ++hop) {
    std::vector<EdgeId> added;
    for (EntityId u : frontier) {
      for (const Membership& m : memberships(u)) {
        if (!edge_seen[m.edge]) {
          edge_seen[m.edge] = 1;
          added.push_back(m.edge);
        }
      }
    }
    std::vector<EntityId> next;
    for (EdgeId e : added) {
      result.push_back(e);
      for (const RolePair& p : edges_[e].pairs) {
        if (!node_seen[p.entity]) {
          node_seen[p.entity] = 1;
          next.push_back(p.entity);
        }
      }
    }
    frontier = std::move(next);
  }
  std::sort(result.begin(), result.end());
  return result;
}

std::size_t SemanticHypergraph::star_link_count() const { return incidence_.size(); }

std::vector<EntityId> Query::known_entities() const {
  std::vector<EntityId> out;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (i != missing) out.push_back(pairs[i].entity);
  }
  return out;
}

Query ablate(const SemanticHypergraph& graph, EdgeId e, std::size_t slot) {
  const Hyperedge& edge = graph.edge(e);
  if (slot >= edge.arity()) throw ValidationError("slot " + std::to_string(slot) + " out of range");
  Query q;
  q.pairs = edge.pairs;
  q.primary = edge.primary;
  q.missing = slot;
  q.answer = edge.pairs[slot].entity;
  q.source_edge = e;
  return q;
}

void validate_query(const SemanticHypergraph& graph, const Query& query) {
  if (query.pairs.size() < 2) throw ValidationError("query arity < 2");
  if (query.pairs.size() > graph.max_arity()) throw ValidationError("query arity exceeds max arity");
  if (query.missing >= query.pairs.size()) throw ValidationError("missing slot out of range");
  for (std::size_t i = 0; i < query.pairs.size(); ++i) {
    if (query.pairs[i].role >= graph.relation_count()) {
      throw ValidationError("query relation id " + std::to_string(query.pairs[i].role) + " out of range");
    }
    if (i != query.missing && query.pairs[i].entity >= graph.entity_count()) {
      throw ValidationError("query entity id " + std::to_string(query.pairs[i].entity) + " out of range");
    }
  }
  if (query.answer && *query.answer >= graph.entity_count()) {
    throw ValidationError("query answer id out of range");
  }
}

}  // namespace hgr
