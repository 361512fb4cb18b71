#include "hgr/model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <set>

#include "hgr/error.hpp"

namespace hgr {

const char* to_string(Task t) {
  switch (t) {
    case Task::TransferWithFeatures: return "tr-ef";
    case Task::TransferNoFeatures: return "tr-nef";
    case Task::PairwiseSubgraph: return "psr";
  }
  return "?";
}

const char* to_string(PositionScheme s) {
  switch (s) {
    case PositionScheme::Random: return "random";
    case PositionScheme::Simple: return "simple";
    case PositionScheme::Same: return "same";
  }
  return "?";
}

const char* to_string(MultisetKind k) {
  switch (k) {
    case MultisetKind::RelationalTransformer: return "transformer";
    case MultisetKind::Sum: return "sum";
    case MultisetKind::Attention: return "attention";
    case MultisetKind::SetAttention: return "set-attention";
  }
  return "?";
}

Task parse_task(const std::string& s) {
  if (s == "tr-ef") return Task::TransferWithFeatures;
  if (s == "tr-nef") return Task::TransferNoFeatures;
  if (s == "psr") return Task::PairwiseSubgraph;
  throw ConfigError("unknown task '" + s + "' (expected tr-ef, tr-nef or psr)");
}

PositionScheme parse_position_scheme(const std::string& s) {
  if (s == "random") return PositionScheme::Random;
  if (s == "simple") return PositionScheme::Simple;
  if (s == "same") return PositionScheme::Same;
  throw ConfigError("unknown position scheme '" + s + "' (expected random, simple or same)");
}

MultisetKind parse_multiset_kind(const std::string& s) {
  if (s == "transformer") return MultisetKind::RelationalTransformer;
  if (s == "sum") return MultisetKind::Sum;
  if (s == "attention") return MultisetKind::Attention;
  if (s == "set-attention") return MultisetKind::SetAttention;
  throw ConfigError("unknown multiset kind '" + s + "' (expected transformer, sum, attention or set-attention)");
}

EdgePositions assign_positions(std::size_t arity, std::optional<std::size_t> missing,
                               const std::vector<bool>& primary, PositionScheme scheme, const PositionLayout& layout,
                               std::mt19937_64& rng) {
  if (arity > layout.max_arity) {
    throw ConfigError("arity " + std::to_string(arity) + " exceeds max arity " + std::to_string(layout.max_arity));
  }
  EdgePositions p;
  p.entity.assign(arity, 0);
  p.role.assign(arity, 0);
  switch (scheme) {
    case PositionScheme::Random: {
      std::vector<std::size_t> perm(arity);
      std::iota(perm.begin(), perm.end(), std::size_t{1});
      std::shuffle(perm.begin(), perm.end(), rng);
      for (std::size_t i = 0; i < arity; ++i) {
        const bool qualifier = layout.main_qualifier && !primary.empty() && !primary[i];
        const std::size_t shift = qualifier ? layout.qualifier_offset() : 0;
        p.entity[i] = perm[i] + shift;
        p.role[i] = perm[i] + arity + shift;
        if (missing && *missing == i) p.role[i] = layout.missing_role_row();
      }
      p.cls = layout.cls_row();
      break;
    }
    case PositionScheme::Simple:
      std::fill(p.role.begin(), p.role.end(), 1);
      p.cls = layout.cls_row();
      break;
    case PositionScheme::Same:
      p.cls = 0;
      break;
  }
  return p;
}

void ModelConfig::validate() const {
  if (dim == 0 || layers == 0 || heads == 0 || hidden == 0) throw ConfigError("model sizes must be positive");
  if (dim % heads != 0) {
    throw ConfigError("embedding dim " + std::to_string(dim) + " is not divisible by " + std::to_string(heads) +
                      " heads");
  }
  if (iterations == 0) throw ConfigError("message-passing rounds K must be >= 1");
  if (sample_hops == 0) throw ConfigError("sample hops must be >= 1");
  if (e2v_cap == 0) throw ConfigError("E->V cap must be >= 1");
  if (relation_count == 0) throw ConfigError("relation count must be positive");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must be in [0, 1)");
  if (task == Task::TransferWithFeatures && feature_dim == 0) throw ConfigError("tr-ef needs entity features");
}

std::optional<std::size_t> ForwardResult::node_row(EntityId v) const {
  auto it = std::lower_bound(node_ids.begin(), node_ids.end(), v);
  if (it == node_ids.end() || *it != v) return std::nullopt;
  return static_cast<std::size_t>(it - node_ids.begin());
}

// ------------------------------------------------------------- segment ops

Var segment_softmax(Var scores, std::span<const Segment> segments) {
  const Tensor& S = scores.value();
  if (S.cols() != 1) throw ShapeError("segment_softmax expects a column, got " + shape_string(S.shape));
  Tensor Y = S;
  for (const Segment& s : segments) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < s.length; ++i) mx = std::max(mx, Y.values[s.start + i]);
    double total = 0.0;
    for (std::size_t i = 0; i < s.length; ++i) {
      Y.values[s.start + i] = std::exp(Y.values[s.start + i] - mx);
      total += Y.values[s.start + i];
    }
    for (std::size_t i = 0; i < s.length; ++i) Y.values[s.start + i] /= total;
  }
  auto segs = std::make_shared<std::vector<Segment>>(segments.begin(), segments.end());
  return scores.tape->record("segment_softmax", std::move(Y), {scores}, [scores, segs](Tape& tp, std::size_t self) {
    const Tensor& Y = tp.value(self);
    const Tensor& dY = tp.grad(self);
    Tensor& dS = tp.grad(scores.id);
    for (const Segment& s : *segs) {
      double dot = 0.0;
      for (std::size_t i = 0; i < s.length; ++i) dot += dY.values[s.start + i] * Y.values[s.start + i];
      for (std::size_t i = 0; i < s.length; ++i) {
        dS.values[s.start + i] += Y.values[s.start + i] * (dY.values[s.start + i] - dot);
      }
    }
  });
}

Var segment_weighted_sum(Var weights, Var values, std::span<const Segment> segments) {
  const Tensor& W = weights.value();
  const Tensor& V = values.value();
  if (W.cols() != 1 || W.rows() != V.rows()) {
    throw ShapeError("segment_weighted_sum: weights " + shape_string(W.shape) + " vs values " +
                     shape_string(V.shape));
  }
  const std::size_t d = V.cols();
  Tensor O = Tensor::matrix(segments.size(), d);
  for (std::size_t si = 0; si < segments.size(); ++si) {
    const Segment& s = segments[si];
    for (std::size_t i = 0; i < s.length; ++i) {
      const double w = W.values[s.start + i];
      for (std::size_t c = 0; c < d; ++c) O.values[si * d + c] += w * V.values[(s.start + i) * d + c];
    }
  }
  auto segs = std::make_shared<std::vector<Segment>>(segments.begin(), segments.end());
  return weights.tape->record("segment_weighted_sum", std::move(O), {weights, values},
                              [weights, values, segs, d](Tape& tp, std::size_t self) {
                                const Tensor& dO = tp.grad(self);
                                const Tensor& W = tp.value(weights.id);
                                const Tensor& V = tp.value(values.id);
                                const bool gw = tp.requires_grad(weights.id);
                                const bool gv = tp.requires_grad(values.id);
                                for (std::size_t si = 0; si < segs->size(); ++si) {
                                  const Segment& s = (*segs)[si];
                                  const double* g = dO.data() + si * d;
                                  for (std::size_t i = 0; i < s.length; ++i) {
                                    const std::size_t r = s.start + i;
                                    if (gw) {
                                      double dot = 0.0;
                                      for (std::size_t c = 0; c < d; ++c) dot += g[c] * V.values[r * d + c];
                                      tp.grad(weights.id).values[r] += dot;
                                    }
                                    if (gv) {
                                      double* dv = tp.grad(values.id).data() + r * d;
                                      for (std::size_t c = 0; c < d; ++c) dv[c] += W.values[r] * g[c];
                                    }
                                  }
                                }
                              });
}

Var score(Var source_edge, Var candidates) { return sigmoid(matmul_nt(source_edge, candidates)); }

// -------------------------------------------------------------------- Model

Model::Model(const ModelConfig& config, std::mt19937_64& rng) : config_(config) {
  config_.validate();
  const std::size_t d = config_.dim;
  relations_ = &params_.add("relations", glorot_init({config_.relation_count, d}, rng));
  if (config_.kind == MultisetKind::RelationalTransformer) cls_ = &params_.add("cls", glorot_init({1, d}, rng));
  mask_ = &params_.add("mask_entity", glorot_init({1, d}, rng));
  if (config_.task == Task::TransferWithFeatures) {
    feature_projection_ = &params_.add("feature_projection", glorot_init({config_.feature_dim, d}, rng));
  }
  if (config_.task == Task::PairwiseSubgraph) {
    distance_table_ = &params_.add("distance_table", glorot_init({config_.sample_hops + 2, d}, rng));
  }
  switch (config_.kind) {
    case MultisetKind::RelationalTransformer:
      positions_ = &params_.add("positions", glorot_init({layout().table_rows(), d}, rng));
      v2e_stack_ = EncoderStack(params_, "v2e", config_.layers, d, config_.hidden, rng);
      e2v_stack_ = EncoderStack(params_, "e2v", config_.layers, d, config_.hidden, rng);
      break;
    case MultisetKind::Sum:
      v2e_proj_ = &params_.add("sum.v2e.proj", glorot_init({d, d}, rng));
      e2v_proj_ = &params_.add("sum.e2v.proj", glorot_init({d, d}, rng));
      break;
    case MultisetKind::Attention:
      v2e_query_ = &params_.add("attention.v2e.query", glorot_init({1, d}, rng));
      v2e_key_ = &params_.add("attention.v2e.key", glorot_init({d, d}, rng));
      v2e_value_ = &params_.add("attention.v2e.value", glorot_init({d, d}, rng));
      e2v_query_ = &params_.add("attention.e2v.query", glorot_init({1, d}, rng));
      e2v_key_ = &params_.add("attention.e2v.key", glorot_init({d, d}, rng));
      e2v_value_ = &params_.add("attention.e2v.value", glorot_init({d, d}, rng));
      break;
    case MultisetKind::SetAttention:
      v2e_query_ = &params_.add("set.v2e.seed", glorot_init({1, d}, rng));
      e2v_query_ = &params_.add("set.e2v.seed", glorot_init({1, d}, rng));
      v2e_stack_ = EncoderStack(params_, "set.v2e", 1, d, config_.hidden, rng);
      e2v_stack_ = EncoderStack(params_, "set.e2v", 1, d, config_.hidden, rng);
      break;
  }
}

Var Model::initial_embeddings(Tape& tape, const SemanticHypergraph& graph, std::span<const EntityId> entities,
                              const Subgraph* sub, const EntityFeatures* features) const {
  switch (config_.task) {
    case Task::TransferNoFeatures: {
      RowMix mix;
      for (EntityId v : entities) {
        auto ms = graph.memberships(v);
        for (const Membership& m : ms) mix.add(m.role, 1.0 / static_cast<double>(ms.size()));
        mix.close_row();
      }
      return mix_rows(tape.parameter(*relations_), mix);
    }
    case Task::TransferWithFeatures: {
      if (features == nullptr || features->empty()) throw ValidationError("tr-ef needs an entity feature matrix");
      if (features->dim != config_.feature_dim) {
        throw ValidationError("feature dim " + std::to_string(features->dim) + " but model expects " +
                              std::to_string(config_.feature_dim));
      }
      std::string missing;
      for (EntityId v : entities) {
        if (!features->has(v)) missing += (missing.empty() ? "" : ",") + std::to_string(v);
      }
      if (!missing.empty()) throw ValidationError("entities without features: " + missing);
      Tensor rows = Tensor::matrix(entities.size(), features->dim);
      for (std::size_t i = 0; i < entities.size(); ++i) {
        std::copy_n(features->values.begin() + static_cast<std::ptrdiff_t>(entities[i] * features->dim),
                    features->dim, rows.values.begin() + static_cast<std::ptrdiff_t>(i * features->dim));
      }
      return matmul(tape.constant(std::move(rows)), tape.parameter(*feature_projection_));
    }
    case Task::PairwiseSubgraph: {
      if (sub == nullptr) throw ContractError("psr initialization needs the subgraph");
      RowMix mix;
      for (EntityId v : entities) {
        mix.add(std::min(sub->distance(v), config_.sample_hops + 1));
        mix.close_row();
      }
      return mix_rows(tape.parameter(*distance_table_), mix);
    }
  }
  throw ContractError("unknown task");
}

Var Model::v2e_transformer(Tape& tape, std::span<const EdgeInput> edges, Var nodes,
                           std::vector<std::vector<double>>* cls_weights) const {
  RowMix cls_mix, rel_mix, node_mix, pos_mix;
  std::vector<Segment> segments;
  std::vector<std::size_t> cls_rows;
  std::size_t row = 0;
  auto skip = [](RowMix& m) { m.close_row(); };
  for (const EdgeInput& e : edges) {
    segments.push_back({row, 1 + 2 * e.pairs.size()});
    cls_rows.push_back(row);
    cls_mix.add(0);
    cls_mix.close_row();
    skip(rel_mix);
    skip(node_mix);
    pos_mix.add(e.positions.cls);
    pos_mix.close_row();
    ++row;
    for (std::size_t i = 0; i < e.pairs.size(); ++i) {
      const PairInput& p = e.pairs[i];
      if (p.role >= config_.relation_count) {
        throw ValidationError("relation id " + std::to_string(p.role) + " out of range");
      }
      // role token
      skip(cls_mix);
      rel_mix.add(p.role);
      rel_mix.close_row();
      skip(node_mix);
      pos_mix.add(e.positions.role[i]);
      pos_mix.close_row();
      // entity token
      skip(cls_mix);
      skip(rel_mix);
      node_mix.add(p.node_row);
      node_mix.close_row();
      pos_mix.add(e.positions.entity[i]);
      pos_mix.close_row();
      row += 2;
    }
  }
  Var tokens = add(add(mix_rows(tape.parameter(*cls_), cls_mix), mix_rows(tape.parameter(*relations_), rel_mix)),
                   add(mix_rows(nodes, node_mix), mix_rows(tape.parameter(*positions_), pos_mix)));
  const EncoderSettings settings{config_.heads, config_.dropout};
  Var out = v2e_stack_.forward(tokens, segments, settings, cls_weights);
  return mix_rows(out, RowMix::gather(cls_rows));
}

Var Model::pair_sums(Tape& tape, std::span<const EdgeInput> edges, Var nodes, std::vector<Segment>* segments) const {
  RowMix rel_mix, node_mix;
  std::size_t row = 0;
  for (const EdgeInput& e : edges) {
    if (segments) segments->push_back({row, e.pairs.size()});
    for (const PairInput& p : e.pairs) {
      if (p.role >= config_.relation_count) {
        throw ValidationError("relation id " + std::to_string(p.role) + " out of range");
      }
      rel_mix.add(p.role);
      node_mix.add(p.node_row);
      if (segments) {
        rel_mix.close_row();
        node_mix.close_row();
        ++row;
      }
    }
    if (!segments) {
      rel_mix.close_row();
      node_mix.close_row();
    }
  }
  return add(mix_rows(tape.parameter(*relations_), rel_mix), mix_rows(nodes, node_mix));
}

Var Model::pooled(Tape& tape, Var tokens, std::span<const Segment> segments, bool v2e,
                  std::vector<std::vector<double>>* weights) const {
  if (config_.kind == MultisetKind::Attention) {
    Var keys = matmul(tokens, tape.parameter(v2e ? *v2e_key_ : *e2v_key_));
    Var values = matmul(tokens, tape.parameter(v2e ? *v2e_value_ : *e2v_value_));
    Var logits = scale(matmul_nt(keys, tape.parameter(v2e ? *v2e_query_ : *e2v_query_)),
                       1.0 / std::sqrt(static_cast<double>(config_.dim)));
    Var alpha = segment_softmax(logits, segments);
    if (weights) {
      weights->clear();
      for (const Segment& s : segments) {
        const auto& a = alpha.value().values;
        weights->emplace_back(a.begin() + static_cast<std::ptrdiff_t>(s.start),
                              a.begin() + static_cast<std::ptrdiff_t>(s.start + s.length));
      }
    }
    return segment_weighted_sum(alpha, values, segments);
  }
  // SetAttention: [seed, tokens...] through one encoder block, read the seed row.
  RowMix seed_mix, token_mix;
  std::vector<Segment> packed;
  std::vector<std::size_t> seed_rows;
  std::size_t row = 0;
  for (const Segment& s : segments) {
    packed.push_back({row, s.length + 1});
    seed_rows.push_back(row);
    seed_mix.add(0);
    seed_mix.close_row();
    token_mix.close_row();
    for (std::size_t i = 0; i < s.length; ++i) {
      seed_mix.close_row();
      token_mix.add(s.start + i);
      token_mix.close_row();
    }
    row += s.length + 1;
  }
  Var seq = add(mix_rows(tape.parameter(v2e ? *v2e_query_ : *e2v_query_), seed_mix), mix_rows(tokens, token_mix));
  const EncoderSettings settings{config_.heads, config_.dropout};
  Var out = (v2e ? v2e_stack_ : e2v_stack_).forward(seq, packed, settings, weights);
  return mix_rows(out, RowMix::gather(seed_rows));
}

Var Model::aggregate_v_to_e(Tape& tape, std::span<const EdgeInput> edges, Var node_embeddings,
                            std::vector<std::vector<double>>* cls_weights) const {
  if (edges.empty()) throw ContractError("V->E over no edges");
  switch (config_.kind) {
    case MultisetKind::RelationalTransformer:
      return v2e_transformer(tape, edges, node_embeddings, cls_weights);
    case MultisetKind::Sum:
      return matmul(pair_sums(tape, edges, node_embeddings, nullptr), tape.parameter(*v2e_proj_));
    case MultisetKind::Attention:
    case MultisetKind::SetAttention: {
      std::vector<Segment> segments;
      Var tokens = pair_sums(tape, edges, node_embeddings, &segments);
      return pooled(tape, tokens, segments, true, cls_weights);
    }
  }
  throw ContractError("unknown multiset kind");
}

Var Model::aggregate_e_to_v(Tape& tape, std::span<const std::vector<std::size_t>> member_rows, Var edge_embeddings,
                            std::vector<std::vector<double>>* cls_weights) const {
  if (member_rows.empty()) throw ContractError("E->V over no nodes");
  for (const auto& m : member_rows) {
    if (m.empty()) throw ContractError("E->V needs at least one member edge per node");
  }
  switch (config_.kind) {
    case MultisetKind::RelationalTransformer: {
      RowMix cls_mix, edge_mix;
      std::vector<Segment> segments;
      std::vector<std::size_t> cls_rows;
      std::size_t row = 0;
      for (const auto& members : member_rows) {
        segments.push_back({row, members.size() + 1});
        cls_rows.push_back(row);
        cls_mix.add(0);
        cls_mix.close_row();
        edge_mix.close_row();
        for (std::size_t e : members) {
          cls_mix.close_row();
          edge_mix.add(e);
          edge_mix.close_row();
        }
        row += members.size() + 1;
      }
      Var tokens = add(mix_rows(tape.parameter(*cls_), cls_mix), mix_rows(edge_embeddings, edge_mix));
      const EncoderSettings settings{config_.heads, config_.dropout};
      Var out = e2v_stack_.forward(tokens, segments, settings, cls_weights);
      return mix_rows(out, RowMix::gather(cls_rows));
    }
    case MultisetKind::Sum: {
      RowMix mix;
      for (const auto& members : member_rows) {
        for (std::size_t e : members) mix.add(e);
        mix.close_row();
      }
      return matmul(mix_rows(edge_embeddings, mix), tape.parameter(*e2v_proj_));
    }
    case MultisetKind::Attention:
    case MultisetKind::SetAttention: {
      RowMix mix;
      std::vector<Segment> segments;
      std::size_t row = 0;
      for (const auto& members : member_rows) {
        segments.push_back({row, members.size()});
        for (std::size_t e : members) {
          mix.add(e);
          mix.close_row();
        }
        row += members.size();
      }
      return pooled(tape, mix_rows(edge_embeddings, mix), segments, false, cls_weights);
    }
  }
  throw ContractError("unknown multiset kind");
}

ForwardResult Model::forward(Tape& tape, const SemanticHypergraph& graph, const Subgraph& sub, Var initial,
                             std::mt19937_64& rng, const ForwardOptions& options) const {
  const Query& query = sub.source;
  validate_query(graph, query);
  const std::size_t node_count = sub.nodes.size();
  const std::size_t virtual_row = node_count;
  if (initial.rows() != node_count || initial.cols() != config_.dim) {
    throw ShapeError("initial embeddings " + shape_string(initial.value().shape) + " do not cover " +
                     std::to_string(node_count) + " subgraph nodes of width " + std::to_string(config_.dim));
  }
  auto row_of = [&](EntityId v) {
    auto it = std::lower_bound(sub.nodes.begin(), sub.nodes.end(), v);
    if (it == sub.nodes.end() || *it != v) throw ContractError("entity " + std::to_string(v) + " not in subgraph");
    return static_cast<std::size_t>(it - sub.nodes.begin());
  };

  // Local edges: 0 is the query edge, i >= 1 is sub.edges[i - 1]. Positions
  // are drawn once per forward pass and reused in every round.
  const std::size_t edge_count = sub.edges.size() + 1;
  std::vector<EdgeInput> inputs(edge_count);
  std::vector<std::vector<std::size_t>> edge_nodes(edge_count);
  const PositionLayout lay = layout();
  for (std::size_t le = 0; le < edge_count; ++le) {
    const bool is_source = le == 0;
    const auto& pairs = is_source ? query.pairs : graph.edge(sub.edges[le - 1]).pairs;
    const auto& primary = is_source ? query.primary : graph.edge(sub.edges[le - 1]).primary;
    EdgeInput& in = inputs[le];
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const bool missing = is_source && i == query.missing;
      const std::size_t r = missing ? virtual_row : row_of(pairs[i].entity);
      in.pairs.push_back({pairs[i].role, r, missing});
      edge_nodes[le].push_back(r);
    }
    std::optional<std::size_t> missing_slot;
    if (is_source) missing_slot = query.missing;
    in.positions = assign_positions(pairs.size(), missing_slot, primary, config_.positions, lay, rng);
  }

  // Member edges per node row (local edge ids).
  std::vector<std::vector<std::size_t>> members(node_count + 1);
  {
    std::set<EntityId> known;
    for (EntityId v : query.known_entities()) known.insert(v);
    for (std::size_t r = 0; r < node_count; ++r) {
      const EntityId v = sub.nodes[r];
      auto& list = members[r];
      if (known.count(v)) list.push_back(0);
      for (EdgeId e : aggregation_edges(graph, sub, v, config_.e2v_cap)) {
        if (list.size() >= config_.e2v_cap) break;
        auto it = std::lower_bound(sub.edges.begin(), sub.edges.end(), e);
        list.push_back(1 + static_cast<std::size_t>(it - sub.edges.begin()));
      }
    }
    members[virtual_row].push_back(0);
  }

  // Work needed per round, walking back from the readout.
  const std::size_t rounds = config_.iterations;
  std::vector<std::vector<char>> need_node(rounds + 1, std::vector<char>(node_count + 1, 0));
  std::vector<std::vector<char>> need_edge(rounds + 1, std::vector<char>(edge_count, 0));
  if (options.readout) {
    for (EntityId v : *options.readout) {
      auto it = std::lower_bound(sub.nodes.begin(), sub.nodes.end(), v);
      if (it != sub.nodes.end() && *it == v) need_node[rounds][static_cast<std::size_t>(it - sub.nodes.begin())] = 1;
    }
  } else {
    std::fill(need_node[rounds].begin(), need_node[rounds].end(), 1);
  }
  for (std::size_t t = rounds; t >= 1; --t) {
    need_edge[t][0] = 1;
    for (std::size_t r = 0; r <= node_count; ++r) {
      if (!need_node[t][r]) continue;
      need_node[t - 1][r] = 1;
      for (std::size_t le : members[r]) need_edge[t][le] = 1;
    }
    for (std::size_t le = 0; le < edge_count; ++le) {
      if (!need_edge[t][le]) continue;
      for (std::size_t r : edge_nodes[le]) need_node[t - 1][r] = 1;
    }
  }

  ForwardResult result;
  result.node_ids = sub.nodes;
  const std::array<Var, 2> first{initial, tape.parameter(*mask_)};
  Var x = concat_rows(first);
  Var h;
  std::vector<long> edge_row;
  for (std::size_t t = 1; t <= rounds; ++t) {
    // V->E
    std::vector<EdgeInput> batch;
    std::vector<std::size_t> batch_edges;
    edge_row.assign(edge_count, -1);
    for (std::size_t le = 0; le < edge_count; ++le) {
      if (!need_edge[t][le]) continue;
      edge_row[le] = static_cast<long>(batch.size());
      batch.push_back(inputs[le]);
      batch_edges.push_back(le);
    }
    std::vector<std::vector<double>> v2e_weights;
    h = aggregate_v_to_e(tape, batch, x, options.trace ? &v2e_weights : nullptr);
    if (options.trace) {
      for (std::size_t b = 0; b < batch.size(); ++b) {
        AttentionRecord rec;
        rec.hop = t;
        rec.v2e = true;
        rec.owner_is_source = batch_edges[b] == 0;
        rec.owner = rec.owner_is_source ? 0 : sub.edges[batch_edges[b] - 1];
        rec.tokens.push_back({TraceToken::Kind::Cls, 0});
        for (const PairInput& p : batch[b].pairs) {
          rec.tokens.push_back({TraceToken::Kind::Role, p.role});
          if (p.missing) {
            rec.tokens.push_back({TraceToken::Kind::MissingEntity, 0});
          } else {
            rec.tokens.push_back({TraceToken::Kind::Entity, sub.nodes[p.node_row]});
          }
        }
        rec.weights = v2e_weights[b];
        result.trace.records.push_back(std::move(rec));
      }
    }

    // E->V
    std::vector<std::vector<std::size_t>> member_rows;
    std::vector<std::size_t> updated;
    for (std::size_t r = 0; r <= node_count; ++r) {
      if (!need_node[t][r] || members[r].empty()) continue;
      std::vector<std::size_t> rows;
      for (std::size_t le : members[r]) rows.push_back(static_cast<std::size_t>(edge_row[le]));
      member_rows.push_back(std::move(rows));
      updated.push_back(r);
    }
    if (updated.empty()) continue;
    std::vector<std::vector<double>> e2v_weights;
    Var y = aggregate_e_to_v(tape, member_rows, h, options.trace ? &e2v_weights : nullptr);
    if (options.trace) {
      for (std::size_t b = 0; b < updated.size(); ++b) {
        if (updated[b] == virtual_row) continue;
        AttentionRecord rec;
        rec.hop = t;
        rec.v2e = false;
        rec.owner = sub.nodes[updated[b]];
        rec.tokens.push_back({TraceToken::Kind::Cls, 0});
        for (std::size_t le : members[updated[b]]) {
          if (le == 0) {
            rec.tokens.push_back({TraceToken::Kind::SourceEdge, 0});
          } else {
            rec.tokens.push_back({TraceToken::Kind::Edge, sub.edges[le - 1]});
          }
        }
        rec.weights = e2v_weights[b];
        result.trace.records.push_back(std::move(rec));
      }
    }
    RowMix fresh, keep;
    std::size_t next = 0;
    for (std::size_t r = 0; r <= node_count; ++r) {
      if (next < updated.size() && updated[next] == r) {
        fresh.add(next++);
        fresh.close_row();
        keep.close_row();
      } else {
        fresh.close_row();
        keep.add(r);
        keep.close_row();
      }
    }
    x = add(mix_rows(y, fresh), mix_rows(x, keep));
  }

  result.nodes = x;
  result.edges = h;
  result.edge_row = edge_row;
  const std::size_t src_row = static_cast<std::size_t>(edge_row[0]);
  result.source_edge = mix_rows(h, RowMix::gather(std::span<const std::size_t>(&src_row, 1)));
  return result;
}

AttentionTrace Model::forward_with_attention(Tape& tape, const SemanticHypergraph& graph, const Subgraph& sub,
                                             Var initial, std::mt19937_64& rng) const {
  if (config_.kind != MultisetKind::RelationalTransformer) {
    throw UnsupportedError(std::string("attention traces need the transformer multiset kind, model uses ") +
                           to_string(config_.kind));
  }
  ForwardOptions opts;
  opts.trace = true;
  return forward(tape, graph, sub, initial, rng, opts).trace;
}

Var Model::candidate_embeddings(Tape& tape, const ForwardResult& fwd, const SemanticHypergraph& graph,
                                std::span<const EntityId> candidates, const Subgraph* sub,
                                const EntityFeatures* features) const {
  RowMix inside, outside;
  std::vector<EntityId> outsiders;
  for (EntityId v : candidates) {
    if (auto r = fwd.node_row(v)) {
      inside.add(*r);
      inside.close_row();
      outside.close_row();
    } else {
      inside.close_row();
      outside.add(outsiders.size());
      outside.close_row();
      outsiders.push_back(v);
    }
  }
  Var in_part = mix_rows(fwd.nodes, inside);
  if (outsiders.empty()) return in_part;
  Var init = initial_embeddings(tape, graph, outsiders, sub, features);
  return add(in_part, mix_rows(init, outside));
}

}  // namespace hgr
