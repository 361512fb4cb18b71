#pragma once

// Finite-difference checks for every differentiable op, one encoder layer and
// a full NS-HART forward on a 3-edge toy subgraph.

#include <random>
#include <string>
#include <vector>

#include "hgr/model.hpp"
#include "hgr/transformer.hpp"
#include "oracles.hpp"

namespace oracle {

struct GradCase {
  std::string name;
  GradReport report;
};

// Reduces any output to a scalar with fixed random weights so that every
// output entry contributes a distinct gradient.
inline hgr::Var weighted_total(hgr::Var out, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  hgr::Tensor w = random_tensor(out.rows(), out.cols(), rng);
  return hgr::sum_all(hgr::mul(out, out.tape->constant(std::move(w))));
}

// Three edges around the query fact (r0:0, r1:1, r2:?) whose answer is 2:
//   e1 = (r0:0, r1:3), e2 = (r1:1, r2:4), e3 = (r0:3, r2:4).
struct ToyGraph {
  hgr::SemanticHypergraph graph;
  hgr::Query query;
  hgr::Subgraph sub;
};

inline ToyGraph toy_graph() {
  using hgr::Hyperedge;
  std::vector<Hyperedge> facts{Hyperedge{0, {{0, 0}, {1, 1}, {2, 2}}, {}}, Hyperedge{0, {{0, 0}, {1, 3}}, {}},
                               Hyperedge{0, {{1, 1}, {2, 4}}, {}}, Hyperedge{0, {{0, 3}, {2, 4}}, {}}};
  ToyGraph t;
  t.graph = hgr::build_hypergraph(facts, 5, 3);
  t.query = hgr::ablate(t.graph, 0, 2);
  hgr::FanoutSchedule s;
  s.base = 16;
  s.per_hop = {16, 16};
  t.sub = hgr::sample_query_subgraph(t.graph, t.query, 2, s, 1);
  return t;
}

inline hgr::ModelConfig toy_model_config(hgr::MultisetKind kind, hgr::Task task = hgr::Task::TransferNoFeatures) {
  hgr::ModelConfig c;
  c.task = task;
  c.kind = kind;
  c.relation_count = 3;
  c.dim = 8;
  c.layers = 2;
  c.heads = 2;
  c.hidden = 12;
  c.dropout = 0.0;
  c.max_arity = 3;
  c.iterations = 2;
  c.sample_hops = 2;
  c.e2v_cap = 4;
  return c;
}

// BCE over all five entities of the toy graph, through score() and bce_loss.
inline GradReport check_model_gradients(hgr::MultisetKind kind) {
  ToyGraph toy = toy_graph();
  std::mt19937_64 init(21);
  hgr::Model model(toy_model_config(kind), init);
  const std::vector<hgr::EntityId> candidates{2, 0, 1, 3, 4};
  const std::vector<double> labels{1, 0, 0, 0, 0};
  auto loss = [&](bool backward) {
    hgr::Tape tape(false);
    std::mt19937_64 rng(5);
    hgr::Var x0 = model.initial_embeddings(tape, toy.graph, toy.sub.nodes, &toy.sub, nullptr);
    hgr::ForwardResult fwd = model.forward(tape, toy.graph, toy.sub, x0, rng);
    hgr::Var x = model.candidate_embeddings(tape, fwd, toy.graph, candidates, &toy.sub, nullptr);
    hgr::Var l = hgr::bce_loss(hgr::score(fwd.source_edge, x), labels);
    if (backward) tape.backward(l);
    return l.value().item();
  };
  return check_param_gradients(model.params(), loss);
}

inline std::vector<GradCase> gradient_cases(std::uint64_t seed = 2024) {
  using hgr::Segment;
  using hgr::Tape;
  using hgr::Tensor;
  using hgr::Var;
  std::mt19937_64 rng(seed);
  std::vector<GradCase> out;
  auto unary = [&](const std::string& name, std::function<Var(Var)> op, std::size_t r, std::size_t c,
                   double scale = 1.0) {
    out.push_back({name, check_input_gradients(
                             [&](Tape&, std::vector<Var>& v) { return weighted_total(op(v[0]), seed + 1); },
                             {random_tensor(r, c, rng, scale)})});
  };
  auto binary = [&](const std::string& name, std::function<Var(Var, Var)> op, Tensor a, Tensor b) {
    out.push_back({name, check_input_gradients(
                             [&](Tape&, std::vector<Var>& v) { return weighted_total(op(v[0], v[1]), seed + 2); },
                             {std::move(a), std::move(b)})});
  };

  binary("matmul", [](Var a, Var b) { return hgr::matmul(a, b); }, random_tensor(3, 4, rng), random_tensor(4, 2, rng));
  binary("matmul_nt", [](Var a, Var b) { return hgr::matmul_nt(a, b); }, random_tensor(3, 4, rng),
         random_tensor(5, 4, rng));
  binary("add", [](Var a, Var b) { return hgr::add(a, b); }, random_tensor(3, 4, rng), random_tensor(3, 4, rng));
  binary("sub", [](Var a, Var b) { return hgr::sub(a, b); }, random_tensor(3, 4, rng), random_tensor(3, 4, rng));
  binary("mul", [](Var a, Var b) { return hgr::mul(a, b); }, random_tensor(3, 4, rng), random_tensor(3, 4, rng));
  binary("add_row", [](Var a, Var b) { return hgr::add_row(a, b); }, random_tensor(3, 4, rng),
         random_tensor(1, 4, rng));
  unary("scale", [](Var a) { return hgr::scale(a, -1.7); }, 3, 4);
  unary("gelu", [](Var a) { return hgr::gelu(a); }, 3, 4);
  // Values kept away from the kink at 0.
  {
    Tensor t = random_tensor(3, 4, rng);
    for (double& x : t.values) x = x >= 0 ? x + 0.1 : x - 0.1;
    out.push_back({"relu", check_input_gradients(
                               [&](Tape&, std::vector<Var>& v) { return weighted_total(hgr::relu(v[0]), seed + 3); },
                               {t})});
  }
  unary("sigmoid", [](Var a) { return hgr::sigmoid(a); }, 3, 4, 2.0);
  unary("softmax_rows", [](Var a) { return hgr::softmax_rows(a); }, 3, 5, 2.0);
  unary("sum_all", [](Var a) { return hgr::scale(hgr::sum_all(a), 1.3); }, 3, 4);
  unary("mean_all", [](Var a) { return hgr::scale(hgr::mean_all(a), 1.3); }, 3, 4);
  {
    hgr::RowMix mix;
    mix.add(2, 0.5);
    mix.add(0, -1.5);
    mix.close_row();
    mix.add(1);
    mix.add(1, 2.0);
    mix.close_row();
    mix.close_row();
    unary("mix_rows", [mix](Var a) { return hgr::mix_rows(a, mix); }, 3, 4);
  }
  out.push_back({"layer_norm", check_input_gradients(
                                   [&](Tape&, std::vector<Var>& v) {
                                     return weighted_total(hgr::layer_norm(v[0], v[1], v[2]), seed + 4);
                                   },
                                   {random_tensor(3, 6, rng), random_tensor(1, 6, rng), random_tensor(1, 6, rng)})});
  out.push_back({"concat_rows", check_input_gradients(
                                    [&](Tape&, std::vector<Var>& v) {
                                      std::vector<Var> parts{v[0], v[1]};
                                      return weighted_total(hgr::concat_rows(parts), seed + 5);
                                    },
                                    {random_tensor(2, 3, rng), random_tensor(1, 3, rng)})});
  {
    const std::vector<Segment> segs{{0, 3}, {3, 1}, {4, 4}};
    out.push_back({"segment_attention", check_input_gradients(
                                            [&](Tape&, std::vector<Var>& v) {
                                              return weighted_total(
                                                  hgr::segment_attention(v[0], v[1], v[2], segs, 2, 0.0), seed + 6);
                                            },
                                            {random_tensor(8, 4, rng), random_tensor(8, 4, rng),
                                             random_tensor(8, 4, rng)})});
    out.push_back({"segment_softmax", check_input_gradients(
                                          [&](Tape&, std::vector<Var>& v) {
                                            return weighted_total(hgr::segment_softmax(v[0], segs), seed + 7);
                                          },
                                          {random_tensor(8, 1, rng)})});
    out.push_back({"segment_weighted_sum", check_input_gradients(
                                               [&](Tape&, std::vector<Var>& v) {
                                                 return weighted_total(hgr::segment_weighted_sum(v[0], v[1], segs),
                                                                       seed + 8);
                                               },
                                               {random_tensor(8, 1, rng), random_tensor(8, 3, rng)})});
  }
  {
    std::uniform_real_distribution<double> p(0.05, 0.95);
    Tensor probs = Tensor::matrix(1, 6);
    for (double& x : probs.values) x = p(rng);
    const std::vector<double> labels{1, 0, 0, 1, 0, 1};
    out.push_back({"bce_loss", check_input_gradients(
                                   [&](Tape&, std::vector<Var>& v) { return hgr::bce_loss(v[0], labels); }, {probs})});
    out.push_back({"bce_with_logits",
                   check_input_gradients(
                       [&](Tape&, std::vector<Var>& v) { return hgr::bce_with_logits(v[0], labels); },
                       {random_tensor(1, 6, rng, 3.0)})});
  }
  {
    hgr::ParamStore store;
    std::mt19937_64 init(seed + 9);
    hgr::EncoderLayer layer = hgr::EncoderLayer::create(store, "enc", 8, 12, init);
    for (auto& p : store)
      for (double& x : p.value.values) x += 0.1 * std::normal_distribution<double>(0, 1)(init);
    const Tensor tokens = random_tensor(5, 8, rng);
    auto loss = [&](bool backward) {
      Tape tape(false);
      Var x = tape.variable(tokens);
      Var l = weighted_total(hgr::transformer_encoder_layer(x, layer, {2, 0.0}), seed + 10);
      if (backward) tape.backward(l);
      return l.value().item();
    };
    out.push_back({"encoder_layer", check_param_gradients(store, loss)});
    out.push_back({"encoder_layer input", check_input_gradients(
                                              [&](Tape&, std::vector<Var>& v) {
                                                return weighted_total(
                                                    hgr::transformer_encoder_layer(v[0], layer, {2, 0.0}), seed + 10);
                                              },
                                              {tokens})});
  }
  out.push_back({"ns-hart forward (3-edge toy)", check_model_gradients(hgr::MultisetKind::RelationalTransformer)});
  return out;
}

}  // namespace oracle
