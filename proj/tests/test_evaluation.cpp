#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "hgr/error.hpp"
#include "hgr/evaluate.hpp"
#include "hgr/synthetic.hpp"
#include "oracles.hpp"

using namespace hgr;

TEST_CASE("filtered rank") {
  const std::vector<double> s{0.9, 0.5, 0.7, 0.5, 0.1};
  CHECK(filtered_rank(s, 1, {}) == 4);
  const std::vector<EntityId> f{0};
  CHECK(filtered_rank(s, 1, f) == 3);
  CHECK(filtered_rank(s, 0, {}) == 1);
  const std::vector<EntityId> self{0, 2};
  CHECK(filtered_rank(s, 0, self) == 1);
  CHECK(filtered_rank(s, 4, {}) == 5);
  CHECK_THROWS_AS(filtered_rank(s, 5, {}), ContractError);

  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> level(0, 6);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 2 + trial % 30;
    std::vector<double> scores(n);
    for (double& x : scores) x = level(rng) / 6.0;
    std::uniform_int_distribution<EntityId> pick(0, static_cast<EntityId>(n - 1));
    const EntityId answer = pick(rng);
    std::vector<EntityId> filtered;
    for (int k = 0; k < 3; ++k) {
      const EntityId v = pick(rng);
      if (v != answer) filtered.push_back(v);
    }
    CHECK(filtered_rank(scores, answer, filtered) == oracle::sort_rank(scores, answer, filtered));
  }
}

TEST_CASE("ranks are unchanged by the sigmoid and by filtered scores") {
  std::mt19937_64 rng(14);
  std::normal_distribution<double> logit(0.0, 3.0);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 5 + trial % 20;
    std::vector<double> raw(n), prob(n);
    for (std::size_t i = 0; i < n; ++i) {
      raw[i] = std::round(logit(rng) * 4) / 4;
      prob[i] = 1.0 / (1.0 + std::exp(-raw[i]));
    }
    const EntityId answer = static_cast<EntityId>(trial % n);
    std::vector<EntityId> filtered{static_cast<EntityId>((answer + 1) % n), static_cast<EntityId>((answer + 3) % n)};
    const std::size_t rank = filtered_rank(raw, answer, filtered);
    CHECK(filtered_rank(prob, answer, filtered) == rank);
    for (EntityId f : filtered) raw[f] = logit(rng) * 100;
    CHECK(filtered_rank(raw, answer, filtered) == rank);
  }
}

TEST_CASE("ranking metrics") {
  const std::vector<std::size_t> a{1, 2, 4};
  RankingMetrics m = ranking_metrics(a);
  CHECK(m.mrr == doctest::Approx(7.0 / 12));
  CHECK(m.hits == 1.0);
  CHECK(m.count == 3);
  const std::vector<std::size_t> b{1, 11, 10};
  CHECK(ranking_metrics(b).hits == doctest::Approx(2.0 / 3));
  CHECK_THROWS_AS(ranking_metrics(std::vector<std::size_t>{}), ContractError);
  CHECK_THROWS_AS(ranking_metrics(std::vector<std::size_t>{1, 0}), ContractError);
}

TEST_CASE("ranking metrics match the loop oracle") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<std::size_t> ranks(1 + trial % 50);
    std::uniform_int_distribution<std::size_t> r(1, 1 + trial % 40);
    for (auto& x : ranks) x = r(rng);
    RankingMetrics m = ranking_metrics(ranks);
    CHECK(m.mrr == oracle::loop_mrr(ranks));
    CHECK(m.hits == oracle::loop_hits(ranks));
  }
}

TEST_CASE("auc-pr") {
  const std::vector<LabeledScore> perfect{{0.9, true}, {0.8, true}, {0.1, false}};
  CHECK(auc_pr(perfect) == 1.0);
  const std::vector<LabeledScore> second{{0.9, false}, {0.2, true}};
  CHECK(auc_pr(second) == doctest::Approx(0.5));
  const std::vector<LabeledScore> tied{{0.5, true}, {0.5, false}};
  CHECK(auc_pr(tied) == doctest::Approx(0.5));
  CHECK_THROWS_AS(auc_pr(std::vector<LabeledScore>{{0.3, true}}), ContractError);
  CHECK_THROWS_AS(auc_pr(std::vector<LabeledScore>{{0.3, false}, {0.2, false}}), ContractError);

  std::mt19937_64 rng(13);
  std::uniform_int_distribution<int> level(0, 9);
  std::bernoulli_distribution coin(0.4);
  double worst = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<LabeledScore> xs(2 + trial % 60);
    for (auto& x : xs) x = {trial % 2 ? level(rng) / 9.0 : std::uniform_real_distribution<double>()(rng), coin(rng)};
    xs[0].positive = true;
    xs[1].positive = false;
    worst = std::max(worst, std::abs(auc_pr(xs) - oracle::sweep_ap(xs)));
  }
  CHECK(worst < 1e-12);
}

namespace {

struct Fixture {
  DatasetBundle data;
  SemanticHypergraph graph;
  TrainConfig config;
  FilterIndex filter;
};

Fixture fixture(Task task) {
  SynthConfig sc;
  sc.train_companies = 8;
  sc.inference_companies = 50;
  sc.links_per_company = 2;
  sc.seed = 6;
  Fixture f;
  f.data = generate_synthetic(sc);
  f.graph = f.data.inference_graph();
  f.config.task = task;
  f.config.dim = 8;
  f.config.heads = 2;
  f.config.hidden = 16;
  f.config.layers = 1;
  f.config.dropout = 0.0;
  f.config = f.config.resolved();
  f.filter = inference_filter(f.data);
  return f;
}

}  // namespace

TEST_CASE("tr evaluation agrees with per-query ranking") {
  Fixture f = fixture(Task::TransferNoFeatures);
  std::mt19937_64 init(3);
  Model model(f.config.model_config(f.data.relations.size(), 0), init);
  EvalSettings settings{7, 1, 0};
  MetricReport report = evaluate_split(model, f.graph, f.data.test, f.filter, nullptr, f.config, settings);
  REQUIRE(report.ranks.size() == f.data.test.size());

  const ForwardPlan plan = make_plan(f.config);
  std::vector<std::size_t> ranks;
  for (std::size_t i = 0; i < f.data.test.size(); ++i) {
    const EvalQuery& q = f.data.test[i];
    const std::uint64_t seed = derive_seed(settings.seed, i);
    std::mt19937_64 rng(derive_seed(seed, 2));
    Tape tape(false);
    const Subgraph sub = query_subgraph(f.graph, q.query(), plan, seed);
    std::vector<EntityId> all(f.graph.entity_count());
    for (EntityId v = 0; v < all.size(); ++v) all[v] = v;
    const Tensor logits = transfer_logits(model, tape, f.graph, sub, all, nullptr, rng, false).value();
    std::vector<EntityId> skip;
    for (EntityId v : f.filter.answers(q.query())) skip.push_back(v);
    for (EntityId v = 0; v < all.size(); ++v)
      if (f.graph.degree(v) == 0) skip.push_back(v);
    ranks.push_back(oracle::sort_rank(logits.values, q.answer(), skip));
    CHECK(report.ranks[i].rank == ranks.back());
  }
  CHECK(report.overall.mrr == oracle::loop_mrr(ranks));
  CHECK(report.overall.hits == oracle::loop_hits(ranks));
  CHECK(report.primary.count + report.qualifier.count == ranks.size());
}

TEST_CASE("10-query report equals metrics recomputed from the dumped ranks") {
  Fixture f = fixture(Task::TransferNoFeatures);
  REQUIRE(f.data.test.size() >= 10);
  std::mt19937_64 init(4);
  Model model(f.config.model_config(f.data.relations.size(), 0), init);
  const MetricReport r = evaluate_split(model, f.graph, f.data.test, f.filter, nullptr, f.config, {7, 1, 10});
  std::istringstream csv(r.ranks_csv());
  std::string line;
  std::getline(csv, line);
  std::vector<std::size_t> all, primary, qualifier;
  while (std::getline(csv, line)) {
    const auto a = line.find(','), b = line.rfind(',');
    const std::size_t rank = std::stoul(line.substr(b + 1));
    all.push_back(rank);
    (line.substr(a + 1, b - a - 1) == "primary" ? primary : qualifier).push_back(rank);
  }
  REQUIRE(all.size() == 10);
  CHECK(r.overall.mrr == oracle::loop_mrr(all));
  CHECK(r.overall.hits == oracle::loop_hits(all));
  if (!primary.empty()) CHECK(r.primary.mrr == oracle::loop_mrr(primary));
  if (!qualifier.empty()) CHECK(r.qualifier.mrr == oracle::loop_mrr(qualifier));
}

TEST_CASE("evaluation is deterministic and thread-count independent") {
  for (Task task : {Task::TransferNoFeatures, Task::PairwiseSubgraph}) {
    Fixture f = fixture(task);
    std::mt19937_64 init(3);
    Model model(f.config.model_config(f.data.relations.size(), 0), init);
    const MetricReport a = evaluate_split(model, f.graph, f.data.test, f.filter, nullptr, f.config, {7, 1, 0});
    const MetricReport b = evaluate_split(model, f.graph, f.data.test, f.filter, nullptr, f.config, {7, 1, 0});
    const MetricReport c = evaluate_split(model, f.graph, f.data.test, f.filter, nullptr, f.config, {7, 3, 0});
    CHECK(a == b);
    CHECK(a == c);
    CHECK(a.ranks_csv() == c.ranks_csv());
    if (task == Task::PairwiseSubgraph) {
      CHECK(a.pairs == 2 * f.data.test.size());
      REQUIRE(a.auc_pr.has_value());
      CHECK(*a.auc_pr == doctest::Approx(oracle::sweep_ap(a.pair_scores)).epsilon(1e-12));
    }
    const MetricReport limited = evaluate_split(model, f.graph, f.data.test, f.filter, nullptr, f.config, {7, 1, 2});
    CHECK(limited.split == "test");
    if (task != Task::PairwiseSubgraph) CHECK(limited.overall.count == 2);
  }
}

TEST_CASE("evaluation input errors") {
  Fixture f = fixture(Task::TransferNoFeatures);
  std::mt19937_64 init(3);
  Model model(f.config.model_config(f.data.relations.size(), 0), init);
  CHECK_THROWS_AS(evaluate_split(model, f.graph, {}, f.filter, nullptr, f.config, {}), ValidationError);
  std::vector<EvalQuery> bad{f.data.test.front()};
  bad[0].fact.pairs[bad[0].missing].entity = static_cast<EntityId>(f.graph.entity_count() + 3);
  CHECK_THROWS_AS(evaluate_split(model, f.graph, bad, f.filter, nullptr, f.config, {}), ValidationError);
}

TEST_CASE("report rendering") {
  MetricReport r;
  r.split = "valid";
  r.overall = {0.5, 0.75, 4};
  r.ranks = {{0, true, 2}, {1, false, 3}};
  CHECK(r.to_json().find("\"mrr\": 0.5") != std::string::npos);
  CHECK(r.table().find("HITS@10") != std::string::npos);
  CHECK(r.ranks_csv() == "query,slot,rank\n0,primary,2\n1,qualifier,3\n");
  r.task = Task::PairwiseSubgraph;
  r.auc_pr = 0.9;
  CHECK(r.to_json().find("auc_pr") != std::string::npos);
}
