#include "hgr/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <string>

#include "hgr/error.hpp"
#include "hgr/sampler.hpp"

namespace hgr {

void SynthConfig::validate() const {
  if (train_companies < 3 || inference_companies < 3) throw ConfigError("synthetic config needs >= 3 companies per graph");
  if (persons_per_company == 0 || positions == 0) throw ConfigError("synthetic config needs persons and positions");
  if (links_per_company == 0) throw ConfigError("infeasible synthetic config: links_per_company = 0 plants no rule pairs");
  if (links_per_company >= std::min(train_companies, inference_companies)) {
    throw ConfigError("infeasible synthetic config: links_per_company must be below the company count");
  }
  if (!(noise >= 0.0 && noise < 1.0)) throw ConfigError("noise must be in [0, 1)");
  if (valid_fraction < 0.0 || test_fraction < 0.0 || valid_fraction + test_fraction >= 1.0) {
    throw ConfigError("valid_fraction + test_fraction must be below 1");
  }
}

namespace {

struct NamedFact {
  std::vector<std::pair<std::string, std::string>> pairs;
  std::vector<bool> primary;
};

struct NamedGraph {
  std::vector<NamedFact> facts;      // works_at and acquaintance, then cooperate
  std::vector<NamedFact> cooperate;  // cooperate facts only
  std::vector<std::pair<std::string, std::string>> types;  // entity -> type, in creation order
};

std::string name(const std::string& prefix, const char* kind, std::size_t i) {
  return prefix + kind + "_" + std::to_string(i);
}

NamedGraph build_graph(const SynthConfig& cfg, std::size_t companies, const std::string& prefix,
                       std::mt19937_64& rng) {
  NamedGraph g;
  const std::size_t ppc = cfg.persons_per_company;
  for (std::size_t k = 0; k < cfg.positions; ++k) g.types.emplace_back(name(prefix, "position", k), "position");
  for (std::size_t c = 0; c < companies; ++c) {
    g.types.emplace_back(name(prefix, "company", c), "company");
    for (std::size_t i = 0; i < ppc; ++i) {
      const std::size_t p = c * ppc + i;
      g.types.emplace_back(name(prefix, "person", p), "person");
      std::uniform_int_distribution<std::size_t> pos(0, cfg.positions - 1);
      g.facts.push_back({{{"employee", name(prefix, "person", p)},
                          {"employer", name(prefix, "company", c)},
                          {"position", name(prefix, "position", pos(rng))}},
                         {true, true, false}});
    }
  }

  // Company links through acquaintances.
  std::set<std::pair<std::size_t, std::size_t>> linked;
  std::vector<std::size_t> order(companies);
  for (std::size_t round = 0; round < cfg.links_per_company; ++round) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i = 0; i + 1 < companies; i += 2) {
      auto a = std::min(order[i], order[i + 1]);
      auto b = std::max(order[i], order[i + 1]);
      if (!linked.insert({a, b}).second) continue;
      std::uniform_int_distribution<std::size_t> who(0, ppc - 1);
      g.facts.push_back({{{"acquainted", name(prefix, "person", a * ppc + who(rng))},
                          {"acquainted", name(prefix, "person", b * ppc + who(rng))}},
                         {true, true}});
    }
  }

  std::bernoulli_distribution flip(cfg.noise);
  std::uniform_int_distribution<std::size_t> any(0, companies - 1);
  std::size_t project = 0;
  for (auto [a, b] : linked) {
    if (flip(rng)) {
      do {
        a = any(rng);
        b = any(rng);
      } while (a == b || linked.count({std::min(a, b), std::max(a, b)}));
    }
    if (std::bernoulli_distribution(0.5)(rng)) std::swap(a, b);
    const std::string j = name(prefix, "project", project++);
    g.types.emplace_back(j, "project");
    g.cooperate.push_back({{{"party", name(prefix, "company", a)},
                            {"party", name(prefix, "company", b)},
                            {"project", j}},
                           {true, true, false}});
  }
  return g;
}

Fact intern(const NamedFact& f, Vocabulary& relations, Vocabulary& entities) {
  Fact out;
  for (const auto& [r, e] : f.pairs) out.pairs.push_back({relations.intern(r), entities.intern(e)});
  out.primary = f.primary;
  return out;
}

EntityFeatures make_features(const SynthConfig& cfg, const NamedGraph& g, const Vocabulary& entities,
                             std::mt19937_64& rng) {
  static const std::vector<std::string> kTypes{"company", "person", "position", "project"};
  EntityFeatures f;
  f.dim = kTypes.size() + cfg.feature_noise_dims;
  f.values.assign(entities.size() * f.dim, 0.0);
  f.present.assign(entities.size(), true);
  std::normal_distribution<double> noise(0.0, 0.1);
  std::vector<std::string> type_of(entities.size());
  for (const auto& [e, t] : g.types) {
    if (auto id = entities.find(e)) type_of[*id] = t;
  }
  for (std::uint32_t v = 0; v < entities.size(); ++v) {
    double* row = f.values.data() + v * f.dim;
    auto it = std::find(kTypes.begin(), kTypes.end(), type_of[v]);
    row[it - kTypes.begin()] = 1.0;
    for (std::size_t c = kTypes.size(); c < f.dim; ++c) row[c] = noise(rng);
  }
  return f;
}

}  // namespace

DatasetBundle generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(derive_seed(cfg.seed, 0));
  NamedGraph train = build_graph(cfg, cfg.train_companies, "t_", rng);
  NamedGraph inf = build_graph(cfg, cfg.inference_companies, "i_", rng);

  // Hold out inference-side cooperate facts.
  std::vector<std::size_t> order(inf.cooperate.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  const auto n = static_cast<double>(order.size());
  const auto n_valid = static_cast<std::size_t>(std::round(cfg.valid_fraction * n));
  const auto n_test = static_cast<std::size_t>(std::round(cfg.test_fraction * n));
  if (n_valid + n_test >= order.size() || n_test == 0) {
    throw ConfigError("infeasible synthetic config: too few cooperate facts to split");
  }
  std::vector<std::size_t> held(order.size(), 0);  // 0 graph, 1 valid, 2 test
  for (std::size_t i = 0; i < n_valid; ++i) held[order[i]] = 1;
  for (std::size_t i = n_valid; i < n_valid + n_test; ++i) held[order[i]] = 2;

  DatasetBundle b;
  for (const NamedFact& f : train.facts) b.train.push_back(intern(f, b.relations, b.train_entities));
  for (const NamedFact& f : train.cooperate) b.train.push_back(intern(f, b.relations, b.train_entities));
  for (const NamedFact& f : inf.facts) b.inference.push_back(intern(f, b.relations, b.inference_entities));
  for (std::size_t i = 0; i < inf.cooperate.size(); ++i) {
    if (held[i] == 0) b.inference.push_back(intern(inf.cooperate[i], b.relations, b.inference_entities));
  }
  std::bernoulli_distribution slot(0.5);
  for (std::size_t pass = 1; pass <= 2; ++pass) {
    for (std::size_t i = 0; i < inf.cooperate.size(); ++i) {
      if (held[i] != pass) continue;
      EvalQuery q{intern(inf.cooperate[i], b.relations, b.inference_entities), slot(rng) ? 1u : 0u};
      (pass == 1 ? b.valid : b.test).push_back(std::move(q));
    }
  }
  b.train_features = make_features(cfg, train, b.train_entities, rng);
  b.inference_features = make_features(cfg, inf, b.inference_entities, rng);
  return b;
}

bool satisfies_rule(const DatasetBundle& b, const std::vector<Fact>& facts, const Fact& coop) {
  const auto employer = b.relations.find("employer");
  const auto employee = b.relations.find("employee");
  const auto acquainted = b.relations.find("acquainted");
  if (!employer || !employee || !acquainted || coop.pairs.size() < 2) return false;
  const EntityId cx = coop.pairs[0].entity;
  const EntityId cy = coop.pairs[1].entity;
  std::set<EntityId> staff_x, staff_y;
  for (const Fact& f : facts) {
    EntityId person = 0, company = 0;
    bool has_person = false, has_company = false;
    for (const RolePair& p : f.pairs) {
      if (p.role == *employee) person = p.entity, has_person = true;
      if (p.role == *employer) company = p.entity, has_company = true;
    }
    if (!has_person || !has_company) continue;
    if (company == cx) staff_x.insert(person);
    if (company == cy) staff_y.insert(person);
  }
  for (const Fact& f : facts) {
    if (f.pairs.size() != 2 || f.pairs[0].role != *acquainted || f.pairs[1].role != *acquainted) continue;
    const EntityId a = f.pairs[0].entity;
    const EntityId c = f.pairs[1].entity;
    if ((staff_x.count(a) && staff_y.count(c)) || (staff_x.count(c) && staff_y.count(a))) return true;
  }
  return false;
}

}  // namespace hgr
