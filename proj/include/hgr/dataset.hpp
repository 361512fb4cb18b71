#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "hgr/hypergraph.hpp"
#include "hgr/model.hpp"

namespace hgr {

// Name <-> dense id map.
class Vocabulary {
 public:
  std::uint32_t intern(const std::string& name);
  std::optional<std::uint32_t> find(const std::string& name) const;
  const std::string& name(std::uint32_t id) const { return names_.at(id); }
  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.names_ == b.names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::uint32_t> ids_;
};

struct Fact {
  std::vector<RolePair> pairs;
  std::vector<bool> primary;  // empty = all primary

  friend bool operator==(const Fact&, const Fact&) = default;
};

// A held-out fact with one slot to predict.
struct EvalQuery {
  Fact fact;
  std::size_t missing = 0;

  EntityId answer() const { return fact.pairs[missing].entity; }
  Query query() const;

  friend bool operator==(const EvalQuery&, const EvalQuery&) = default;
};

struct Manifest {
  std::size_t relations = 0;
  std::size_t train_entities = 0;
  std::size_t train_facts = 0;
  std::size_t inference_entities = 0;
  std::size_t inference_facts = 0;
  std::size_t valid_queries = 0;
  std::size_t test_queries = 0;
  std::size_t min_arity = 0;
  std::size_t max_arity = 0;
  double nary_proportion = 0.0;  // share of facts with arity > 2
  std::size_t feature_dim = 0;

  friend bool operator==(const Manifest&, const Manifest&) = default;
};

// Train graph plus an entity-disjoint inference graph; validation and test
// queries live in the inference graph's id space.
struct DatasetBundle {
  Vocabulary relations;
  Vocabulary train_entities;
  Vocabulary inference_entities;
  std::vector<Fact> train;
  std::vector<Fact> inference;
  std::vector<EvalQuery> valid;
  std::vector<EvalQuery> test;
  EntityFeatures train_features;
  EntityFeatures inference_features;

  Manifest manifest() const;
  SemanticHypergraph train_graph(std::size_t max_arity = kDefaultMaxArity) const;
  SemanticHypergraph inference_graph(std::size_t max_arity = kDefaultMaxArity) const;

  friend bool operator==(const DatasetBundle&, const DatasetBundle&) = default;
};

// Directory layout: train.jsonl, inference.jsonl, valid.jsonl, test.jsonl,
// manifest.json and optionally features.tsv. Fact lines look like
//   {"pairs": [["role", "entity"], ...], "primary": [true, ...]}
// and query lines add "missing": slot.
DatasetBundle load_dataset(const std::string& directory);
void save_dataset(const DatasetBundle& bundle, const std::string& directory);

std::vector<Hyperedge> to_hyperedges(const std::vector<Fact>& facts);

}  // namespace hgr
