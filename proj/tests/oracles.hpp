#pragma once

// Plain-loop reference implementations shared by the unit tests and the
// acceptance runner.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "hgr/autodiff.hpp"
#include "hgr/hypergraph.hpp"
#include "hgr/metrics.hpp"

namespace oracle {

using hgr::EdgeId;
using hgr::EntityId;

// Mixed relative error used by every gradient check. Gradients below `floor`
// in magnitude are compared on an absolute scale.
inline double grad_error(double analytic, double numeric, double floor = 1e-3) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

struct GradReport {
  double worst = 0.0;
  std::string where;
  std::size_t checked = 0;

  void note(double err, const std::string& name) {
    ++checked;
    if (err > worst) {
      worst = err;
      where = name;
    }
  }
};

using ScalarFn = std::function<hgr::Var(hgr::Tape&, std::vector<hgr::Var>&)>;

// Central differences over every entry of every input.
inline GradReport check_input_gradients(const ScalarFn& f, std::vector<hgr::Tensor> inputs, double h = 1e-5) {
  GradReport report;
  std::vector<hgr::Tensor> analytic;
  {
    hgr::Tape tape(false);
    std::vector<hgr::Var> vars;
    for (const auto& t : inputs) vars.push_back(tape.variable(t));
    hgr::Var out = f(tape, vars);
    tape.backward(out);
    for (const auto& v : vars) analytic.push_back(tape.gradient(v));
  }
  auto eval = [&](const std::vector<hgr::Tensor>& xs) {
    hgr::Tape tape(false);
    std::vector<hgr::Var> vars;
    for (const auto& t : xs) vars.push_back(tape.variable(t));
    return f(tape, vars).value().item();
  };
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const double old = inputs[k].values[i];
      inputs[k].values[i] = old + h;
      const double up = eval(inputs);
      inputs[k].values[i] = old - h;
      const double down = eval(inputs);
      inputs[k].values[i] = old;
      const double numeric = (up - down) / (2 * h);
      report.note(grad_error(analytic[k].values[i], numeric),
                  "input " + std::to_string(k) + "[" + std::to_string(i) + "]");
    }
  }
  return report;
}

// `loss(backward)` rebuilds the forward pass on a fresh tape and returns the
// loss; with backward = true it also fills the parameter grads.
inline GradReport check_param_gradients(hgr::ParamStore& params, const std::function<double(bool)>& loss,
                                        double h = 1e-5) {
  params.zero_grad();
  loss(true);
  std::vector<hgr::Tensor> analytic;
  for (const auto& p : params) analytic.push_back(p.grad);
  GradReport report;
  std::size_t k = 0;
  for (auto& p : params) {
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double old = p.value.values[i];
      p.value.values[i] = old + h;
      const double up = loss(false);
      p.value.values[i] = old - h;
      const double down = loss(false);
      p.value.values[i] = old;
      report.note(grad_error(analytic[k].values[i], (up - down) / (2 * h)), p.name + "[" + std::to_string(i) + "]");
    }
    ++k;
  }
  return report;
}

inline hgr::Tensor random_tensor(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  hgr::Tensor t = hgr::Tensor::matrix(rows, cols);
  for (double& x : t.values) x = n(rng);
  return t;
}

inline hgr::Tensor matmul_loop(const hgr::Tensor& a, const hgr::Tensor& b) {
  hgr::Tensor c = hgr::Tensor::matrix(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  return c;
}

// Random facts over `entities` entities and `relations` roles, arity 2..max_arity.
inline std::vector<hgr::Hyperedge> random_facts(std::size_t count, std::size_t entities, std::size_t relations,
                                                std::size_t max_arity, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> arity(2, max_arity);
  std::uniform_int_distribution<EntityId> ent(0, static_cast<EntityId>(entities - 1));
  std::uniform_int_distribution<hgr::RelationId> rel(0, static_cast<hgr::RelationId>(relations - 1));
  std::vector<hgr::Hyperedge> facts;
  for (std::size_t i = 0; i < count; ++i) {
    hgr::Hyperedge e;
    const std::size_t n = arity(rng);
    while (e.pairs.size() < n) {
      hgr::RolePair p{rel(rng), ent(rng)};
      if (std::find(e.pairs.begin(), e.pairs.end(), p) == e.pairs.end()) e.pairs.push_back(p);
    }
    facts.push_back(std::move(e));
  }
  return facts;
}

// Edges within k hops of the seeds, by layered breadth-first search over an
// entity -> edge index built from a scan of the facts. Edge `skip` is left out.
inline std::set<EdgeId> khop_bfs(const std::vector<hgr::Hyperedge>& edges, std::size_t entity_count,
                                 const std::vector<EntityId>& seeds, std::size_t k, long skip = -1) {
  std::vector<std::vector<EdgeId>> touching(entity_count);
  for (std::size_t e = 0; e < edges.size(); ++e) {
    if (static_cast<long>(e) == skip) continue;
    for (const auto& p : edges[e].pairs) touching[p.entity].push_back(static_cast<EdgeId>(e));
  }
  std::set<EdgeId> found;
  std::set<EntityId> seen(seeds.begin(), seeds.end());
  std::vector<EntityId> layer(seen.begin(), seen.end());
  for (std::size_t hop = 0; hop < k; ++hop) {
    std::vector<EntityId> next;
    for (EntityId u : layer)
      for (EdgeId e : touching[u]) {
        found.insert(e);
        for (const auto& p : edges[e].pairs)
          if (seen.insert(p.entity).second) next.push_back(p.entity);
      }
    layer = next;
  }
  return found;
}

// Rank by sorting: answer placed after every candidate with an equal score.
inline std::size_t sort_rank(const std::vector<double>& scores, EntityId answer, const std::vector<EntityId>& filtered) {
  std::set<EntityId> drop(filtered.begin(), filtered.end());
  std::vector<std::pair<double, int>> order;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (i == answer) {
      order.push_back({scores[i], 1});
    } else if (!drop.count(static_cast<EntityId>(i))) {
      order.push_back({scores[i], 0});
    }
  }
  std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  for (std::size_t i = 0; i < order.size(); ++i)
    if (order[i].second == 1) return i + 1;
  return 0;
}

inline double loop_mrr(const std::vector<std::size_t>& ranks) {
  double s = 0.0;
  for (std::size_t r : ranks) s += 1.0 / static_cast<double>(r);
  return s / static_cast<double>(ranks.size());
}

inline double loop_hits(const std::vector<std::size_t>& ranks, std::size_t k = 10) {
  std::size_t h = 0;
  for (std::size_t r : ranks) h += r <= k ? 1 : 0;
  return static_cast<double>(h) / static_cast<double>(ranks.size());
}

// Average precision as a sum over every distinct threshold t, high to low:
// (recall(t) - recall(previous t)) * precision(t), with "score >= t" predicted positive.
inline double sweep_ap(const std::vector<hgr::LabeledScore>& xs) {
  std::set<double, std::greater<>> thresholds;
  std::size_t positives = 0;
  for (const auto& x : xs) {
    thresholds.insert(x.score);
    positives += x.positive ? 1 : 0;
  }
  double ap = 0.0;
  double prev_recall = 0.0;
  for (double t : thresholds) {
    std::size_t tp = 0, predicted = 0;
    for (const auto& x : xs) {
      if (x.score >= t) {
        ++predicted;
        tp += x.positive ? 1 : 0;
      }
    }
    const double recall = static_cast<double>(tp) / static_cast<double>(positives);
    const double precision = static_cast<double>(tp) / static_cast<double>(predicted);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
  }
  return ap;
}

// AdamW transcribed per scalar.
struct ScalarAdamW {
  double m = 0.0, v = 0.0;
  std::size_t t = 0;

  double step(double theta, double g, double lr, double b1, double b2, double eps, double wd) {
    ++t;
    theta -= lr * wd * theta;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mhat = m / (1 - std::pow(b1, static_cast<double>(t)));
    const double vhat = v / (1 - std::pow(b2, static_cast<double>(t)));
    return theta - lr * mhat / (std::sqrt(vhat) + eps);
  }
};

}  // namespace oracle
