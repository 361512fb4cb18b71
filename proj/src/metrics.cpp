#include "hgr/metrics.hpp"

#include <algorithm>
#include <string>

#include "hgr/error.hpp"

namespace hgr {

std::size_t filtered_rank(std::span<const double> scores, EntityId answer, std::span<const EntityId> filtered) {
  if (answer >= scores.size()) {
    throw ContractError("answer " + std::to_string(answer) + " is not among " + std::to_string(scores.size()) +
                        " candidates");
  }
  std::vector<char> skip(scores.size(), 0);
  for (EntityId f : filtered) {
    if (f < scores.size() && f != answer) skip[f] = 1;
  }
  const double target = scores[answer];
  std::size_t rank = 1;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (i == answer || skip[i]) continue;
    if (scores[i] >= target) ++rank;
  }
  return rank;
}

RankingMetrics ranking_metrics(std::span<const std::size_t> ranks, std::size_t k) {
  if (ranks.empty()) throw ContractError("ranking metrics need at least one rank");
  RankingMetrics m;
  m.count = ranks.size();
  for (std::size_t r : ranks) {
    if (r == 0) throw ContractError("ranks are 1-based");
    m.mrr += 1.0 / static_cast<double>(r);
    if (r <= k) m.hits += 1.0;
  }
  m.mrr /= static_cast<double>(ranks.size());
  m.hits /= static_cast<double>(ranks.size());
  return m;
}

double auc_pr(std::span<const LabeledScore> scores) {
  std::vector<LabeledScore> sorted(scores.begin(), scores.end());
  const auto positives = static_cast<std::size_t>(
      std::count_if(sorted.begin(), sorted.end(), [](const LabeledScore& s) { return s.positive; }));
  if (positives == 0 || positives == sorted.size()) {
    throw ContractError("AUC-PR needs at least one positive and one negative");
  }
  std::sort(sorted.begin(), sorted.end(),
            [](const LabeledScore& a, const LabeledScore& b) { return a.score > b.score; });
  // Every positive of a tie group gets the precision at the end of the group.
  double ap = 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    std::size_t group_hits = 0;
    while (j < sorted.size() && sorted[j].score == sorted[i].score) group_hits += sorted[j++].positive ? 1 : 0;
    hits += group_hits;
    ap += static_cast<double>(group_hits) * static_cast<double>(hits) / static_cast<double>(j);
    i = j;
  }
  return ap / static_cast<double>(positives);
}

}  // namespace hgr
