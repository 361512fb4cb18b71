#pragma once

#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "hgr/autodiff.hpp"
#include "hgr/hypergraph.hpp"
#include "hgr/sampler.hpp"
#include "hgr/transformer.hpp"

namespace hgr {

enum class Task { TransferWithFeatures, TransferNoFeatures, PairwiseSubgraph };
enum class PositionScheme { Random, Simple, Same };
enum class MultisetKind { RelationalTransformer, Sum, Attention, SetAttention };

const char* to_string(Task t);
const char* to_string(PositionScheme s);
const char* to_string(MultisetKind k);
Task parse_task(const std::string& s);
PositionScheme parse_position_scheme(const std::string& s);
MultisetKind parse_multiset_kind(const std::string& s);

// Rows of the positional table. Entity marks 1..n and role marks n+1..2n map
// to the same row numbers; row 0 is the shared mark of the Simple/Same
// schemes; the [CLS] and missing-role indicators sit past 2 * max_arity.
// With main-qualifier marks on, qualifier pairs are shifted past those.
struct PositionLayout {
  std::size_t max_arity = kDefaultMaxArity;
  bool main_qualifier = false;

  std::size_t cls_row() const { return 2 * max_arity + 1; }
  std::size_t missing_role_row() const { return 2 * max_arity + 2; }
  std::size_t qualifier_offset() const { return 2 * max_arity + 2; }
  std::size_t table_rows() const { return main_qualifier ? 4 * max_arity + 3 : 2 * max_arity + 3; }
};

struct EdgePositions {
  std::vector<std::size_t> entity;  // per pair, table row
  std::vector<std::size_t> role;    // per pair, table row
  std::size_t cls = 0;
};

// Random: entities take a random permutation of 1..n, roles entity + n, the
// missing slot's role the missing indicator. Simple: entities 0, roles 1.
// Same: everything 0.
EdgePositions assign_positions(std::size_t arity, std::optional<std::size_t> missing,
                               const std::vector<bool>& primary, PositionScheme scheme, const PositionLayout& layout,
                               std::mt19937_64& rng);

struct ModelConfig {
  Task task = Task::TransferNoFeatures;
  MultisetKind kind = MultisetKind::RelationalTransformer;
  PositionScheme positions = PositionScheme::Random;
  bool main_qualifier_positions = false;
  std::size_t relation_count = 0;
  std::size_t dim = 200;
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t hidden = 512;
  double dropout = 0.1;
  std::size_t max_arity = kDefaultMaxArity;
  std::size_t iterations = 2;   // K message-passing rounds
  std::size_t sample_hops = 2;  // hops used to build subgraphs
  std::size_t e2v_cap = 32;     // member edges per node in E->V
  std::size_t feature_dim = 0;  // TR-EF only

  void validate() const;
};

// Per-pair input to V->E: node row in the current node matrix (for the
// missing slot, the virtual node's row).
struct PairInput {
  RelationId role = 0;
  std::size_t node_row = 0;
  bool missing = false;
};

struct EdgeInput {
  std::vector<PairInput> pairs;
  EdgePositions positions;
};

struct TraceToken {
  enum class Kind { Cls, Role, Entity, MissingEntity, Edge, SourceEdge };
  Kind kind = Kind::Cls;
  std::uint32_t id = 0;
};

struct AttentionRecord {
  std::size_t hop = 0;
  bool v2e = true;
  bool owner_is_source = false;  // V->E on the query edge
  std::uint32_t owner = 0;       // edge id (V->E) or entity id (E->V)
  std::vector<TraceToken> tokens;
  std::vector<double> weights;
};

struct AttentionTrace {
  std::vector<AttentionRecord> records;
};

struct ForwardOptions {
  bool trace = false;
  // When set, only these entities' final embeddings (and the source edge's)
  // are guaranteed; work that cannot reach them is skipped.
  std::optional<std::vector<EntityId>> readout;
};

struct ForwardResult {
  Var source_edge;   // 1 x d, h_{e_s}^{(K)}
  Var nodes;         // |nodes| + 1 rows; last row is the virtual "?" node
  std::vector<EntityId> node_ids;
  Var edges;         // rows for edges computed in the final round
  std::vector<long> edge_row;  // per local edge (0 = source, 1.. = sub.edges), row in `edges` or -1
  AttentionTrace trace;

  std::optional<std::size_t> node_row(EntityId v) const;
};

// Entity features for TR-EF (rows follow entity ids).
struct EntityFeatures {
  std::size_t dim = 0;
  std::vector<double> values;  // entity_count x dim
  std::vector<bool> present;   // per entity; empty = all rows present

  bool empty() const { return dim == 0; }
  bool has(EntityId v) const {
    return (v + 1) * dim <= values.size() && (present.empty() || (v < present.size() && present[v]));
  }

  friend bool operator==(const EntityFeatures&, const EntityFeatures&) = default;
};

class Model {
 public:
  Model(const ModelConfig& config, std::mt19937_64& rng);

  const ModelConfig& config() const { return config_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  PositionLayout layout() const { return {config_.max_arity, config_.main_qualifier_positions}; }

  // Initial embeddings for `entities` under the task's initialization rule.
  Var initial_embeddings(Tape& tape, const SemanticHypergraph& graph, std::span<const EntityId> entities,
                         const Subgraph* sub, const EntityFeatures* features) const;

  // Batched V->E over the given edges; one output row per edge.
  Var aggregate_v_to_e(Tape& tape, std::span<const EdgeInput> edges, Var node_embeddings,
                       std::vector<std::vector<double>>* cls_weights = nullptr) const;
  // Batched E->V: one output row per entry of `member_rows` (rows of
  // edge_embeddings); every entry must be non-empty.
  Var aggregate_e_to_v(Tape& tape, std::span<const std::vector<std::size_t>> member_rows, Var edge_embeddings,
                       std::vector<std::vector<double>>* cls_weights = nullptr) const;

  // K rounds of V->E then E->V over the query edge and the subgraph.
  ForwardResult forward(Tape& tape, const SemanticHypergraph& graph, const Subgraph& sub, Var initial,
                        std::mt19937_64& rng, const ForwardOptions& options = {}) const;

  // Same as forward() with trace on; Transformer kind only.
  AttentionTrace forward_with_attention(Tape& tape, const SemanticHypergraph& graph, const Subgraph& sub,
                                        Var initial, std::mt19937_64& rng) const;

  // Candidate embedding matrix: final rows for subgraph members, initial rows
  // otherwise.
  Var candidate_embeddings(Tape& tape, const ForwardResult& fwd, const SemanticHypergraph& graph,
                           std::span<const EntityId> candidates, const Subgraph* sub,
                           const EntityFeatures* features) const;

 private:
  Var v2e_transformer(Tape& tape, std::span<const EdgeInput> edges, Var nodes,
                      std::vector<std::vector<double>>* cls_weights) const;
  Var pair_sums(Tape& tape, std::span<const EdgeInput> edges, Var nodes, std::vector<Segment>* segments) const;
  Var pooled(Tape& tape, Var tokens, std::span<const Segment> segments, bool v2e,
             std::vector<std::vector<double>>* weights) const;

  ModelConfig config_;
  ParamStore params_;
  Parameter* relations_ = nullptr;
  Parameter* positions_ = nullptr;
  Parameter* cls_ = nullptr;
  Parameter* mask_ = nullptr;
  Parameter* feature_projection_ = nullptr;
  Parameter* distance_table_ = nullptr;
  EncoderStack v2e_stack_;
  EncoderStack e2v_stack_;
  // Baseline heads.
  Parameter* v2e_proj_ = nullptr;
  Parameter* e2v_proj_ = nullptr;
  Parameter* v2e_query_ = nullptr;
  Parameter* e2v_query_ = nullptr;
  Parameter* v2e_key_ = nullptr;
  Parameter* e2v_key_ = nullptr;
  Parameter* v2e_value_ = nullptr;
  Parameter* e2v_value_ = nullptr;
};

// sigma(h . x) for every candidate row of X; returns 1 x n.
Var score(Var source_edge, Var candidates);

// Segment-wise softmax of an N x 1 column.
Var segment_softmax(Var scores, std::span<const Segment> segments);
// Row s = sum over rows i of segment s of weights[i] * values[i].
Var segment_weighted_sum(Var weights, Var values, std::span<const Segment> segments);

}  // namespace hgr
