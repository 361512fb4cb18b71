#include <map>
#include <random>
#include <set>
#include <tuple>

#include "doctest.h"
#include "hgr/error.hpp"
#include "hgr/hypergraph.hpp"
#include "oracles.hpp"

using namespace hgr;

namespace {

Hyperedge fact(std::initializer_list<RolePair> pairs) {
  Hyperedge e;
  e.pairs = pairs;
  return e;
}

}  // namespace

TEST_CASE("empty fact list gives an empty graph") {
  auto g = build_hypergraph({}, 4, 2);
  CHECK(g.edge_count() == 0);
  for (EntityId v = 0; v < 4; ++v) CHECK(g.memberships(v).empty());
}

TEST_CASE("single binary fact") {
  auto g = build_hypergraph({fact({{0, 0}, {1, 1}})}, 2, 2);
  REQUIRE(g.memberships(0).size() == 1);
  CHECK(g.memberships(0)[0] == Membership{0, 0});
  CHECK(g.memberships(1)[0] == Membership{0, 1});
}

TEST_CASE("build errors") {
  CHECK_THROWS_AS(build_hypergraph({fact({{0, 0}})}, 2, 2), ValidationError);
  CHECK_THROWS_AS(build_hypergraph({fact({{0, 0}, {1, 5}})}, 2, 2), ValidationError);
  CHECK_THROWS_AS(build_hypergraph({fact({{0, 0}, {9, 1}})}, 2, 2), ValidationError);
  try {
    build_hypergraph({fact({{0, 0}, {1, 1}}), fact({{0, 0}, {1, 7}})}, 2, 2);
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("fact 1") != std::string::npos);
  }
  GraphOptions narrow;
  narrow.max_arity = 2;
  CHECK_THROWS_AS(build_hypergraph({fact({{0, 0}, {1, 1}, {0, 2}})}, 3, 2, narrow), ValidationError);
}

TEST_CASE("incidence value") {
  auto g = build_hypergraph({fact({{3, 7}, {1, 2}}), fact({{1, 2}, {4, 2}, {0, 5}})}, 8, 5);
  CHECK(g.incidence_value(7, 0) == RelationId{3});
  CHECK_FALSE(g.incidence_value(5, 0).has_value());
  CHECK(g.incidence_roles(2, 1) == std::vector<RelationId>{1, 4});
  CHECK(g.incidence_roles(7, 1).empty());
  CHECK_THROWS_AS(g.incidence_value(9, 0), ValidationError);
  CHECK_THROWS_AS(g.incidence_value(0, 2), ValidationError);
}

TEST_CASE("incidence agrees with a full scan of random facts") {
  std::mt19937_64 rng(11);
  auto facts = oracle::random_facts(100, 30, 5, 5, rng);
  auto g = build_hypergraph(facts, 30, 5);
  std::multiset<std::tuple<RelationId, EntityId, EdgeId>> from_facts, from_index;
  for (std::size_t e = 0; e < facts.size(); ++e)
    for (const auto& p : facts[e].pairs) from_facts.insert({p.role, p.entity, static_cast<EdgeId>(e)});
  for (EntityId v = 0; v < 30; ++v)
    for (const Membership& m : g.memberships(v)) {
      from_index.insert({m.role, v, m.edge});
      const auto& pairs = g.edge(m.edge).pairs;
      CHECK(std::find(pairs.begin(), pairs.end(), RolePair{m.role, v}) != pairs.end());
    }
  CHECK(from_facts == from_index);
  std::size_t links = 0;
  for (const auto& f : facts) links += f.pairs.size();
  CHECK(g.star_link_count() == links);
  for (EntityId v = 0; v < 30; ++v)
    for (EdgeId e = 0; e < g.edge_count(); ++e) {
      auto members = g.members(e);
      bool in = std::find(members.begin(), members.end(), v) != members.end();
      CHECK(g.incidence_value(v, e).has_value() == in);
    }
}

TEST_CASE("intra-edge neighbors") {
  auto g = build_hypergraph({fact({{0, 1}, {1, 2}, {2, 3}}), fact({{0, 1}, {1, 2}})}, 4, 3);
  CHECK(g.intra_edge_neighbors(1, 0) == std::vector<EntityId>{2, 3});
  CHECK(g.intra_edge_neighbors(2, 1) == std::vector<EntityId>{1});
  CHECK_THROWS_AS(g.intra_edge_neighbors(0, 0), ContractError);

  std::mt19937_64 rng(3);
  auto facts = oracle::random_facts(40, 12, 3, 4, rng);
  auto r = build_hypergraph(facts, 12, 3);
  for (EdgeId e = 0; e < r.edge_count(); ++e)
    for (const auto& p : facts[e].pairs) {
      std::set<EntityId> expect;
      for (const auto& q : facts[e].pairs)
        if (q.entity != p.entity) expect.insert(q.entity);
      CHECK(r.intra_edge_neighbors(p.entity, e) == std::vector<EntityId>(expect.begin(), expect.end()));
    }
}

TEST_CASE("k-hop neighborhood") {
  auto g = build_hypergraph({fact({{0, 0}, {1, 1}}), fact({{0, 2}, {1, 3}})}, 5, 2);
  CHECK(g.k_hop_neighborhood(4, 3).empty());
  CHECK(g.k_hop_neighborhood(0, 2) == g.k_hop_neighborhood(0, 1));
  CHECK_THROWS_AS(g.k_hop_neighborhood(0, 0), ValidationError);

  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    auto facts = oracle::random_facts(25, 30, 3, 3, rng);
    auto r = build_hypergraph(facts, 30, 3);
    for (EntityId v = 0; v < 30; ++v) {
      std::vector<EdgeId> prev;
      for (std::size_t k = 1; k <= 3; ++k) {
        auto got = r.k_hop_neighborhood(v, k);
        auto want = oracle::khop_bfs(facts, 30, {v}, k);
        CHECK(std::set<EdgeId>(got.begin(), got.end()) == want);
        CHECK(std::includes(got.begin(), got.end(), prev.begin(), prev.end()));
        prev = got;
      }
    }
  }
}
