#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "hgr/hypergraph.hpp"

namespace hgr {

// 1-based rank of `answer` among candidate ids 0..scores.size()-1, skipping
// `filtered` (other true answers). Ties count against the answer.
std::size_t filtered_rank(std::span<const double> scores, EntityId answer, std::span<const EntityId> filtered);

struct RankingMetrics {
  double mrr = 0.0;
  double hits = 0.0;  // HITS@k
  std::size_t count = 0;
};

RankingMetrics ranking_metrics(std::span<const std::size_t> ranks, std::size_t k = 10);

struct LabeledScore {
  double score = 0.0;
  bool positive = false;
};

// Average precision over descending scores. Tied scores are scored as one
// threshold: each positive in the tie gets the precision of the whole group.
double auc_pr(std::span<const LabeledScore> scores);

}  // namespace hgr
