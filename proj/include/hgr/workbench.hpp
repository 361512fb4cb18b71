#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "hgr/dataset.hpp"
#include "hgr/model.hpp"
#include "hgr/sampler.hpp"

namespace hgr {

// One JSON object per aggregation:
//   {"hop": 1, "stage": "v2e", "owner": "query", "tokens": [{"label": "[CLS]", "weight": 0.2}, ...]}
// Entity and role labels come from the vocabularies.
std::string trace_to_jsonl(const AttentionTrace& trace, const Vocabulary& relations, const Vocabulary& entities);

std::string subgraph_to_json(const Subgraph& sub, const SemanticHypergraph& graph, const Vocabulary& relations,
                             const Vocabulary& entities);

// Entry point behind the hgr executable. Returns 0 on success, 1 on runtime
// failure, 2 on bad usage.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace hgr
