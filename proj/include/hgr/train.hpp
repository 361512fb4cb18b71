#pragma once

#include <functional>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "hgr/config.hpp"
#include "hgr/dataset.hpp"
#include "hgr/model.hpp"
#include "hgr/optim.hpp"

namespace hgr {

// Known answers per query pattern: all facts that agree on every non-missing
// (role, entity) pair and on the missing role.
class FilterIndex {
 public:
  void add(const std::vector<RolePair>& pairs);
  void add_all(std::span<const Fact> facts);
  // Every known answer for the query's pattern (may include the query's own answer).
  std::span<const EntityId> answers(const Query& query) const;
  std::size_t size() const { return answers_.size(); }

 private:
  static std::vector<std::uint32_t> key(const std::vector<RolePair>& pairs, std::size_t missing);
  std::map<std::vector<std::uint32_t>, std::vector<EntityId>> answers_;
};

// One query per ablatable slot of every graph fact. `roles` restricts the
// slots to the given relation ids (empty = all).
std::vector<Query> training_instances(const SemanticHypergraph& graph, std::span<const RelationId> roles,
                                      bool primary_only);

struct NegativeSample {
  std::vector<EntityId> ids;
  bool short_pool = false;  // fewer candidates than requested
};

// TR: uniform over graph entities with at least one membership; PSR: uniform over subgraph nodes other than
// the query's known entities. The answer and `filter` are always excluded.
NegativeSample negative_sample(const Query& query, Task task, const SemanticHypergraph& graph, const Subgraph* sub,
                               std::size_t count, std::mt19937_64& rng, std::span<const EntityId> filter);

// Shared settings for building per-query forward passes.
struct ForwardPlan {
  Variant variant = Variant::Full;
  std::size_t sample_hops = 2;
  FanoutSchedule schedule;
};

ForwardPlan make_plan(const TrainConfig& config);

// Subgraph the model sees for a TR query.
Subgraph query_subgraph(const SemanticHypergraph& graph, const Query& query, const ForwardPlan& plan,
                        std::uint64_t seed);

// Logits h . x (1 x n) for the candidates of a TR query; sigmoid gives the
// probabilities.
Var transfer_logits(const Model& model, Tape& tape, const SemanticHypergraph& graph, const Subgraph& sub,
                    std::span<const EntityId> candidates, const EntityFeatures* features, std::mt19937_64& rng,
                    bool prune);

// Logit for one (query, candidate) pair on its merged pair subgraph.
Var pair_logit(const Model& model, Tape& tape, const SemanticHypergraph& graph, const Query& query,
               EntityId candidate, const ForwardPlan& plan, std::uint64_t seed, std::mt19937_64& rng);

struct EpochStats {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  std::size_t examples = 0;
  std::size_t short_pools = 0;
  double lr = 0.0;
  std::optional<double> valid_metric;
};

class Trainer {
 public:
  Trainer(const TrainConfig& config, std::size_t relation_count, std::size_t feature_dim);

  Model& model() { return model_; }
  const Model& model() const { return model_; }
  const TrainConfig& config() const { return config_; }
  double lr() const { return plateau_.lr; }
  void set_lr(double lr) { plateau_.lr = lr; }

  // One pass over `instances` in seeded shuffled order.
  EpochStats train_epoch(const SemanticHypergraph& graph, std::span<const Query> instances, const FilterIndex& filter,
                         const EntityFeatures* features, std::size_t epoch);
  // Feeds a validation metric to the plateau scheduler; returns the new lr.
  double observe(double metric) { return plateau_step(plateau_, metric); }

 private:
  Var instance_loss(Tape& tape, const SemanticHypergraph& graph, const Query& query, const FilterIndex& filter,
                    const EntityFeatures* features, std::uint64_t seed, std::mt19937_64& rng, bool& short_pool);

  TrainConfig config_;
  ForwardPlan plan_;
  std::mt19937_64 init_rng_;
  Model model_;
  AdamWState adam_;
  AdamWSettings adam_settings_;
  PlateauState plateau_;
};

struct FitResult {
  std::vector<EpochStats> history;
  std::size_t best_epoch = 0;
  double best_metric = 0.0;
};

// Full training run: epochs, validation on the inference graph, plateau
// schedule, and restore of the best validation snapshot.
FitResult fit(Trainer& trainer, const DatasetBundle& data,
              const std::function<void(const EpochStats&)>& on_epoch = {});

}  // namespace hgr
