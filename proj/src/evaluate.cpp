#include "hgr/evaluate.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "hgr/error.hpp"

namespace hgr {

namespace {

nlohmann::json metrics_json(const RankingMetrics& m) {
  return {{"mrr", m.mrr}, {"hits_at_10", m.hits}, {"count", m.count}};
}

RankingMetrics metrics_or_empty(const std::vector<std::size_t>& ranks) {
  return ranks.empty() ? RankingMetrics{} : ranking_metrics(ranks);
}

struct QueryOutcome {
  std::size_t rank = 0;
  std::vector<LabeledScore> pairs;
};

QueryOutcome evaluate_query(const Model& model, const SemanticHypergraph& graph, const EvalQuery& eq,
                            std::size_t index, const FilterIndex& filter, const EntityFeatures* features,
                            const TrainConfig& config, const ForwardPlan& plan, std::uint64_t eval_seed) {
  const Query query = eq.query();
  const EntityId answer = eq.answer();
  const std::uint64_t seed = derive_seed(eval_seed, index);
  std::mt19937_64 rng(derive_seed(seed, 2));
  const auto known = filter.answers(query);
  QueryOutcome out;
  if (config.task == Task::PairwiseSubgraph) {
    Tape tape(false);
    Subgraph qsub = sample_query_subgraph(graph, query, plan.sample_hops, plan.schedule, seed);
    NegativeSample neg = negative_sample(query, config.task, graph, &qsub, 1, rng, known);
    out.pairs.push_back({pair_logit(model, tape, graph, query, answer, plan, seed, rng).value().item(), true});
    for (EntityId v : neg.ids) {
      out.pairs.push_back({pair_logit(model, tape, graph, query, v, plan, seed, rng).value().item(), false});
    }
    return out;
  }
  Tape tape(false);
  Subgraph sub = query_subgraph(graph, query, plan, seed);
  // Entities with no membership in the graph are not candidates.
  std::vector<double> scores(graph.entity_count(), 0.0);
  std::vector<EntityId> candidates;
  std::vector<EntityId> skipped(known.begin(), known.end());
  for (EntityId v = 0; v < graph.entity_count(); ++v) {
    if (v == answer || graph.degree(v) > 0) {
      candidates.push_back(v);
    } else {
      skipped.push_back(v);
    }
  }
  Var logits = transfer_logits(model, tape, graph, sub, candidates, features, rng, false);
  for (std::size_t i = 0; i < candidates.size(); ++i) scores[candidates[i]] = logits.value().values[i];
  out.rank = filtered_rank(scores, answer, skipped);
  return out;
}

}  // namespace

FilterIndex inference_filter(const DatasetBundle& data) {
  FilterIndex f;
  f.add_all(data.inference);
  for (const EvalQuery& q : data.valid) f.add(q.fact.pairs);
  for (const EvalQuery& q : data.test) f.add(q.fact.pairs);
  return f;
}

MetricReport evaluate_split(const Model& model, const SemanticHypergraph& graph, std::span<const EvalQuery> queries,
                            const FilterIndex& filter, const EntityFeatures* features, const TrainConfig& config,
                            const EvalSettings& settings, const std::string& split) {
  const std::size_t n = settings.limit == 0 ? queries.size() : std::min(settings.limit, queries.size());
  if (n == 0) throw ValidationError("split '" + split + "' has no queries");
  for (std::size_t i = 0; i < n; ++i) {
    if (queries[i].answer() >= graph.entity_count()) {
      throw ValidationError("query " + std::to_string(i) + " of split '" + split + "' answers outside the graph");
    }
  }
  const ForwardPlan plan = make_plan(config);
  std::vector<QueryOutcome> outcomes(n);
  auto work = [&](std::size_t first, std::size_t stride) {
    for (std::size_t i = first; i < n; i += stride) {
      outcomes[i] = evaluate_query(model, graph, queries[i], i, filter, features, config, plan, settings.seed);
    }
  };
  const std::size_t threads = std::max<std::size_t>(1, std::min(settings.threads, n));
  if (threads == 1) {
    work(0, 1);
  } else {
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        try {
          work(t, threads);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  MetricReport report;
  report.task = config.task;
  report.split = split;
  if (config.task == Task::PairwiseSubgraph) {
    for (const QueryOutcome& o : outcomes) {
      report.pair_scores.insert(report.pair_scores.end(), o.pairs.begin(), o.pairs.end());
    }
    report.pairs = report.pair_scores.size();
    report.auc_pr = auc_pr(report.pair_scores);
    return report;
  }
  std::vector<std::size_t> primary, qualifier, all;
  for (std::size_t i = 0; i < n; ++i) {
    const bool is_primary = queries[i].query().missing_is_primary();
    report.ranks.push_back({i, is_primary, outcomes[i].rank});
    (is_primary ? primary : qualifier).push_back(outcomes[i].rank);
    all.push_back(outcomes[i].rank);
  }
  report.primary = metrics_or_empty(primary);
  report.qualifier = metrics_or_empty(qualifier);
  report.overall = ranking_metrics(all);
  return report;
}

std::string MetricReport::to_json() const {
  nlohmann::json j;
  j["task"] = to_string(task);
  j["split"] = split;
  if (task == Task::PairwiseSubgraph) {
    j["auc_pr"] = auc_pr.value_or(0.0);
    j["pairs"] = pairs;
  } else {
    j["primary"] = metrics_json(primary);
    j["qualifier"] = metrics_json(qualifier);
    j["overall"] = metrics_json(overall);
  }
  return j.dump(2);
}

std::string MetricReport::table() const {
  std::ostringstream out;
  char line[128];
  if (task == Task::PairwiseSubgraph) {
    std::snprintf(line, sizeof(line), "%-10s %-8s %8s\n", "split", "pairs", "AUC-PR");
    out << line;
    std::snprintf(line, sizeof(line), "%-10s %-8zu %8.4f\n", split.c_str(), pairs, auc_pr.value_or(0.0));
    out << line;
    return out.str();
  }
  std::snprintf(line, sizeof(line), "%-10s %-10s %6s %8s %8s\n", "split", "slots", "count", "MRR", "HITS@10");
  out << line;
  auto row = [&](const char* name, const RankingMetrics& m) {
    std::snprintf(line, sizeof(line), "%-10s %-10s %6zu %8.4f %8.4f\n", split.c_str(), name, m.count, m.mrr, m.hits);
    out << line;
  };
  row("primary", primary);
  row("qualifier", qualifier);
  row("all", overall);
  return out.str();
}

std::string MetricReport::ranks_csv() const {
  std::ostringstream out;
  out << "query,slot,rank\n";
  for (const QueryRank& r : ranks) out << r.query << ',' << (r.primary ? "primary" : "qualifier") << ',' << r.rank << "\n";
  return out.str();
}

}  // namespace hgr
