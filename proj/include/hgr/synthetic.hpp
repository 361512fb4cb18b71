#pragma once

#include <cstdint>

#include "hgr/dataset.hpp"

namespace hgr {

// Planted-rule benchmark. Facts:
//   works_at(employee: p, employer: c, position: pos)    arity 3
//   acquaintance(acquainted: p1, acquainted: p2)         arity 2
//   cooperate(party: cX, party: cY, project: j)          arity 3
// Companies are linked when an employee of one knows an employee of the
// other; every linked pair cooperates on a fresh project. With probability
// `noise` a cooperate fact is moved to a random unlinked pair.
struct SynthConfig {
  std::size_t train_companies = 55;
  std::size_t inference_companies = 80;
  std::size_t persons_per_company = 3;
  std::size_t positions = 4;
  std::size_t links_per_company = 2;
  double noise = 0.1;
  // Share of inference-side cooperate facts held out as validation and test queries.
  double valid_fraction = 0.20;
  double test_fraction = 0.25;
  std::size_t feature_noise_dims = 4;
  std::uint64_t seed = 1;

  void validate() const;
};

DatasetBundle generate_synthetic(const SynthConfig& config);

// True when some employee of cX knows some employee of cY in `facts`.
// Relation and entity ids follow the bundle's vocabularies.
bool satisfies_rule(const DatasetBundle& bundle, const std::vector<Fact>& facts, const Fact& cooperate);

}  // namespace hgr
