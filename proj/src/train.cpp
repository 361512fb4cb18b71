#include "hgr/train.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <string>

#include "hgr/error.hpp"
#include "hgr/evaluate.hpp"

namespace hgr {

std::vector<std::uint32_t> FilterIndex::key(const std::vector<RolePair>& pairs, std::size_t missing) {
  std::vector<RolePair> rest;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (i != missing) rest.push_back(pairs[i]);
  }
  std::sort(rest.begin(), rest.end());
  std::vector<std::uint32_t> k{pairs[missing].role};
  for (const RolePair& p : rest) {
    k.push_back(p.role);
    k.push_back(p.entity);
  }
  return k;
}

void FilterIndex::add(const std::vector<RolePair>& pairs) {
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    auto& list = answers_[key(pairs, i)];
    if (std::find(list.begin(), list.end(), pairs[i].entity) == list.end()) list.push_back(pairs[i].entity);
  }
}

void FilterIndex::add_all(std::span<const Fact> facts) {
  for (const Fact& f : facts) add(f.pairs);
}

std::span<const EntityId> FilterIndex::answers(const Query& query) const {
  auto it = answers_.find(key(query.pairs, query.missing));
  if (it == answers_.end()) return {};
  return it->second;
}

std::vector<Query> training_instances(const SemanticHypergraph& graph, std::span<const RelationId> roles,
                                      bool primary_only) {
  std::vector<Query> out;
  for (const Hyperedge& e : graph.edges()) {
    for (std::size_t slot = 0; slot < e.arity(); ++slot) {
      if (primary_only && !e.is_primary(slot)) continue;
      if (!roles.empty() && std::find(roles.begin(), roles.end(), e.pairs[slot].role) == roles.end()) continue;
      out.push_back(ablate(graph, e.id, slot));
    }
  }
  return out;
}

NegativeSample negative_sample(const Query& query, Task task, const SemanticHypergraph& graph, const Subgraph* sub,
                               std::size_t count, std::mt19937_64& rng, std::span<const EntityId> filter) {
  if (count == 0) throw ValidationError("negative count must be >= 1");
  std::set<EntityId> excluded(filter.begin(), filter.end());
  if (query.answer) excluded.insert(*query.answer);
  std::vector<EntityId> pool;
  if (task == Task::PairwiseSubgraph) {
    if (sub == nullptr) throw ContractError("psr negatives need the query subgraph");
    for (EntityId v : query.known_entities()) excluded.insert(v);
    for (EntityId v : sub->nodes) {
      if (!excluded.count(v)) pool.push_back(v);
    }
  } else {
    for (EntityId v = 0; v < graph.entity_count(); ++v) {
      if (!excluded.count(v) && graph.degree(v) > 0) pool.push_back(v);
    }
  }
  NegativeSample out;
  if (pool.size() <= count) {
    out.short_pool = pool.size() < count;
    out.ids = std::move(pool);
    return out;
  }
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(count);
  out.ids = std::move(pool);
  return out;
}

ForwardPlan make_plan(const TrainConfig& config) {
  const TrainConfig c = config.resolved();
  return {c.variant, c.sample_hops, fanout_schedule(c.fanout, c.sample_hops)};
}

Subgraph query_subgraph(const SemanticHypergraph& graph, const Query& query, const ForwardPlan& plan,
                        std::uint64_t seed) {
  if (plan.variant == Variant::IntraEdge) {
    validate_query(graph, query);
    Subgraph sub = source_only_subgraph(query, plan.sample_hops);
    sub.seed = seed;
    return sub;
  }
  return sample_query_subgraph(graph, query, plan.sample_hops, plan.schedule, seed);
}

Var transfer_logits(const Model& model, Tape& tape, const SemanticHypergraph& graph, const Subgraph& sub,
                    std::span<const EntityId> candidates, const EntityFeatures* features, std::mt19937_64& rng,
                    bool prune) {
  Var initial = model.initial_embeddings(tape, graph, sub.nodes, &sub, features);
  ForwardOptions opts;
  if (prune) opts.readout = std::vector<EntityId>(candidates.begin(), candidates.end());
  ForwardResult fwd = model.forward(tape, graph, sub, initial, rng, opts);
  Var x = model.candidate_embeddings(tape, fwd, graph, candidates, &sub, features);
  return matmul_nt(fwd.source_edge, x);
}

Var pair_logit(const Model& model, Tape& tape, const SemanticHypergraph& graph, const Query& query,
               EntityId candidate, const ForwardPlan& plan, std::uint64_t seed, std::mt19937_64& rng) {
  Subgraph sub = sample_pair_subgraph(graph, query, candidate, plan.sample_hops, plan.schedule, seed);
  const EntityId one[1] = {candidate};
  return transfer_logits(model, tape, graph, sub, one, nullptr, rng, true);
}

Trainer::Trainer(const TrainConfig& config, std::size_t relation_count, std::size_t feature_dim)
    : config_(config.resolved()),
      plan_(make_plan(config_)),
      init_rng_(derive_seed(config_.seed, 1)),
      model_(config_.model_config(relation_count, feature_dim), init_rng_) {
  config_.validate();
  adam_settings_ = {config_.beta1, config_.beta2, config_.adam_eps, config_.weight_decay};
  plateau_.lr = config_.lr;
  plateau_.lr_min = config_.lr_min;
  plateau_.factor = config_.plateau_factor;
  plateau_.patience = config_.plateau_patience;
}

Var Trainer::instance_loss(Tape& tape, const SemanticHypergraph& graph, const Query& query, const FilterIndex& filter,
                           const EntityFeatures* features, std::uint64_t seed, std::mt19937_64& rng,
                           bool& short_pool) {
  const EntityId answer = *query.answer;
  const auto known = filter.answers(query);
  if (config_.task == Task::PairwiseSubgraph) {
    Subgraph qsub = sample_query_subgraph(graph, query, plan_.sample_hops, plan_.schedule, seed);
    NegativeSample neg = negative_sample(query, config_.task, graph, &qsub, config_.negatives, rng, known);
    short_pool = short_pool || neg.short_pool;
    std::vector<Var> probs{pair_logit(model_, tape, graph, query, answer, plan_, seed, rng)};
    std::vector<double> labels{1.0};
    for (EntityId v : neg.ids) {
      probs.push_back(pair_logit(model_, tape, graph, query, v, plan_, seed, rng));
      labels.push_back(0.0);
    }
    return bce_with_logits(concat_rows(probs), labels);
  }
  Subgraph sub = query_subgraph(graph, query, plan_, seed);
  NegativeSample neg = negative_sample(query, config_.task, graph, nullptr, config_.negatives, rng, known);
  short_pool = short_pool || neg.short_pool;
  std::vector<EntityId> candidates{answer};
  candidates.insert(candidates.end(), neg.ids.begin(), neg.ids.end());
  std::vector<double> labels(candidates.size(), 0.0);
  labels[0] = 1.0;
  return bce_with_logits(transfer_logits(model_, tape, graph, sub, candidates, features, rng, true), labels);
}

EpochStats Trainer::train_epoch(const SemanticHypergraph& graph, std::span<const Query> instances,
                                const FilterIndex& filter, const EntityFeatures* features, std::size_t epoch) {
  if (instances.empty()) throw ValidationError("no training instances");
  std::vector<std::size_t> order(instances.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 shuffle_rng(derive_seed(config_.seed, 1000 + epoch));
  std::shuffle(order.begin(), order.end(), shuffle_rng);
  std::mt19937_64 rng(derive_seed(config_.seed, 2000 + epoch));

  EpochStats stats;
  stats.epoch = epoch;
  double total = 0.0;
  for (std::size_t start = 0, batch = 0; start < order.size(); start += config_.batch_size, ++batch) {
    const std::size_t end = std::min(order.size(), start + config_.batch_size);
    Tape tape(true, &rng);
    std::vector<Var> losses;
    bool short_pool = false;
    try {
      for (std::size_t i = start; i < end; ++i) {
        const std::uint64_t seed = derive_seed(config_.seed, (static_cast<std::uint64_t>(epoch) << 32) | order[i]);
        losses.push_back(instance_loss(tape, graph, instances[order[i]], filter, features, seed, rng, short_pool));
      }
      Var loss = scale(sum_all(concat_rows(losses)), 1.0 / static_cast<double>(losses.size()));
      total += loss.value().item() * static_cast<double>(losses.size());
      model_.params().zero_grad();
      tape.backward(loss);
    } catch (const NumericError& e) {
      throw NumericError("epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch) +
                         ": non-finite value during training (" + e.what() + ")");
    }
    adamw_step(model_.params(), adam_, plateau_.lr, adam_settings_);
    stats.short_pools += short_pool ? 1 : 0;
  }
  stats.examples = order.size();
  stats.mean_loss = total / static_cast<double>(order.size());
  stats.lr = plateau_.lr;
  return stats;
}

FitResult fit(Trainer& trainer, const DatasetBundle& data, const std::function<void(const EpochStats&)>& on_epoch) {
  const TrainConfig& config = trainer.config();
  const SemanticHypergraph train_graph = data.train_graph(config.max_arity);
  const SemanticHypergraph inf_graph = data.inference_graph(config.max_arity);
  std::vector<RelationId> roles;
  for (const std::string& name : config.train_roles) {
    auto id = data.relations.find(name);
    if (!id) throw ConfigError("train_roles names unknown relation '" + name + "'");
    roles.push_back(*id);
  }
  const std::vector<Query> instances = training_instances(train_graph, roles, config.primary_only);
  FilterIndex train_filter;
  train_filter.add_all(data.train);
  const FilterIndex valid_filter = inference_filter(data);
  const bool features = config.task == Task::TransferWithFeatures;
  const EntityFeatures* train_features = features ? &data.train_features : nullptr;
  const EntityFeatures* inf_features = features ? &data.inference_features : nullptr;

  FitResult result;
  std::vector<Tensor> best;
  bool has_best = false;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    EpochStats stats = trainer.train_epoch(train_graph, instances, train_filter, train_features, epoch);
    if (!data.valid.empty() && (epoch % config.eval_every == 0 || epoch == config.epochs)) {
      EvalSettings settings{config.eval_seed, config.threads, config.valid_limit};
      MetricReport report =
          evaluate_split(trainer.model(), inf_graph, data.valid, valid_filter, inf_features, config, settings, "valid");
      const double metric = config.task == Task::PairwiseSubgraph ? report.auc_pr.value_or(0.0) : report.overall.mrr;
      stats.valid_metric = metric;
      if (!has_best || metric > result.best_metric) {
        result.best_metric = metric;
        result.best_epoch = epoch;
        best = trainer.model().params().snapshot();
        has_best = true;
      }
      trainer.observe(metric);
    }
    result.history.push_back(stats);
    if (on_epoch) on_epoch(stats);
  }
  if (has_best) {
    trainer.model().params().restore(best);
  } else {
    result.best_epoch = config.epochs;
  }
  return result;
}

}  // namespace hgr
