#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hgr/config.hpp"
#include "hgr/dataset.hpp"
#include "hgr/metrics.hpp"
#include "hgr/model.hpp"
#include "hgr/train.hpp"

namespace hgr {

struct QueryRank {
  std::size_t query = 0;
  bool primary = true;
  std::size_t rank = 0;
};

struct MetricReport {
  Task task = Task::TransferNoFeatures;
  std::string split;
  RankingMetrics primary;
  RankingMetrics qualifier;
  RankingMetrics overall;
  std::optional<double> auc_pr;
  std::size_t pairs = 0;  // PSR (query, candidate) pairs scored
  std::vector<QueryRank> ranks;
  std::vector<LabeledScore> pair_scores;

  std::string to_json() const;
  std::string table() const;
  // "query,slot,rank" lines.
  std::string ranks_csv() const;

  friend bool operator==(const MetricReport& a, const MetricReport& b) { return a.to_json() == b.to_json(); }
};

struct EvalSettings {
  std::uint64_t seed = 7;
  std::size_t threads = 1;
  std::size_t limit = 0;  // 0 = all queries
};

// Single-fact evaluation on `graph`. TR: rank the answer against every graph
// entity with at least one membership, under the filter. PSR: score the answer and one sampled negative
// per query and report AUC-PR.
MetricReport evaluate_split(const Model& model, const SemanticHypergraph& graph, std::span<const EvalQuery> queries,
                            const FilterIndex& filter, const EntityFeatures* features, const TrainConfig& config,
                            const EvalSettings& settings, const std::string& split = "test");

// Filter over the inference graph plus both held-out splits.
FilterIndex inference_filter(const DatasetBundle& data);

}  // namespace hgr
