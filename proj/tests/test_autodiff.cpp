#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "gradient_cases.hpp"
#include "hgr/checkpoint.hpp"
#include "hgr/error.hpp"
#include "oracles.hpp"

using namespace hgr;

TEST_CASE("tensor basics") {
  Tensor t = Tensor::from_rows({{1, 2, 3}, {4, 5, 6}});
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK(t(1, 2) == 6);
  CHECK(Tensor::scalar(2.5).item() == 2.5);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
  CHECK_THROWS_AS(t.item(), ShapeError);
}

TEST_CASE("matmul") {
  Tape tape;
  Tensor a = Tensor::from_rows({{1, 2, 3}, {4, 5, 6}, {7, 8, 10}});
  Tensor eye = Tensor::from_rows({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
  CHECK(matmul(tape.constant(eye), tape.constant(a)).value() == a);
  CHECK(matmul(tape.constant(Tensor::scalar(2)), tape.constant(Tensor::scalar(3))).value().item() == 6);

  std::mt19937_64 rng(3);
  for (int i = 0; i < 20; ++i) {
    Tensor x = oracle::random_tensor(3, 4, rng), y = oracle::random_tensor(4, 2, rng);
    Tensor got = matmul(tape.constant(x), tape.constant(y)).value();
    Tensor want = oracle::matmul_loop(x, y);
    for (std::size_t k = 0; k < got.size(); ++k) CHECK(std::abs(got.values[k] - want.values[k]) < 1e-12);
  }
  try {
    matmul(tape.constant(Tensor::matrix(2, 3)), tape.constant(Tensor::matrix(2, 3)));
    FAIL("expected a shape error");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("[2x3]") != std::string::npos);
  }
}

TEST_CASE("softmax") {
  Tape tape;
  auto s = softmax_rows(tape.constant(Tensor::row({1, 1, 1}))).value();
  for (double x : s.values) CHECK(x == doctest::Approx(1.0 / 3).epsilon(1e-15));
  auto t = softmax_rows(tape.constant(Tensor::row({0, std::log(3.0)}))).value();
  CHECK(t.values[0] == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(t.values[1] == doctest::Approx(0.75).epsilon(1e-15));
  std::mt19937_64 rng(8);
  Tensor big = oracle::random_tensor(10, 7, rng, 50.0);
  auto r = softmax_rows(tape.constant(big)).value();
  for (std::size_t i = 0; i < 10; ++i) {
    double total = 0;
    for (std::size_t j = 0; j < 7; ++j) {
      CHECK(r(i, j) >= 0.0);
      CHECK(r(i, j) <= 1.0);
      total += r(i, j);
    }
    CHECK(std::abs(total - 1.0) < 1e-12);
  }
}

TEST_CASE("layer norm") {
  Tape tape;
  auto g = tape.constant(Tensor::row({1, 1}));
  auto b = tape.constant(Tensor::row({0, 0}));
  auto y = layer_norm(tape.constant(Tensor::row({1, -1})), g, b).value();
  CHECK(y.values[0] == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(y.values[1] == doctest::Approx(-1.0).epsilon(1e-5));
  auto c = layer_norm(tape.constant(Tensor::row({4, 4, 4})), tape.constant(Tensor::row({2, 2, 2})),
                      tape.constant(Tensor::row({0.5, -1, 3})))
               .value();
  CHECK(c.values == std::vector<double>{0.5, -1, 3});
}

TEST_CASE("backward contract") {
  Tape tape;
  Var x = tape.variable(Tensor::row({0, 0, 0}));
  tape.backward(sum_all(sigmoid(x)));
  for (double g : tape.gradient(x).values) CHECK(g == doctest::Approx(0.25));

  Tape other;
  Var a = other.variable(Tensor::row({1, 2}));
  Var unused = other.variable(Tensor::row({1, 2}));
  other.backward(sum_all(a));
  for (double g : other.gradient(unused).values) CHECK(g == 0.0);
  CHECK_THROWS_AS(other.backward(a), ContractError);
}

TEST_CASE("parameter gradients accumulate into the store") {
  ParamStore store;
  Parameter& w = store.add("w", Tensor::row({1, 2}));
  CHECK_THROWS_AS(store.add("w", Tensor::row({1})), ContractError);
  for (int i = 0; i < 2; ++i) {
    Tape tape;
    tape.backward(sum_all(scale(tape.parameter(w), 3.0)));
  }
  CHECK(w.grad.values == std::vector<double>{6, 6});
  store.zero_grad();
  CHECK(w.grad.values == std::vector<double>{0, 0});
}

TEST_CASE("non-finite values are rejected") {
  Tape tape;
  Var x = tape.constant(Tensor::row({1e308}));
  CHECK_THROWS_AS(scale(x, 10.0), NumericError);
}

TEST_CASE("binary cross entropy") {
  Tape tape;
  CHECK(bce_loss(tape.constant(Tensor::row({0.5, 0.5})), {1, 0}).value().item() ==
        doctest::Approx(2 * std::log(2.0)).epsilon(1e-14));
  CHECK(bce_loss(tape.constant(Tensor::row({1, 0})), {1, 0}).value().item() < 1e-6);
  CHECK_THROWS_AS(bce_loss(tape.constant(Tensor::row({0.5})), {1, 0}), ShapeError);

  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.01, 0.99);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> p(8), y(8);
    double want = 0, want_logits = 0;
    for (std::size_t i = 0; i < 8; ++i) {
      p[i] = u(rng);
      y[i] = u(rng) < 0.5 ? 1.0 : 0.0;
      want -= y[i] * std::log(p[i]) + (1 - y[i]) * std::log(1 - p[i]);
    }
    CHECK(std::abs(bce_loss(tape.constant(Tensor::row(p)), y).value().item() - want) < 1e-12);
    std::vector<double> z(8);
    for (std::size_t i = 0; i < 8; ++i) {
      z[i] = std::log(p[i] / (1 - p[i]));
      want_logits -= y[i] * std::log(p[i]) + (1 - y[i]) * std::log(1 - p[i]);
    }
    CHECK(std::abs(bce_with_logits(tape.constant(Tensor::row(z)), y).value().item() - want_logits) < 1e-12);
  }
}

TEST_CASE("dropout") {
  Tape eval;
  Tensor ones = Tensor::matrix(50, 50, 1.0);
  CHECK(dropout(eval.constant(ones), 0.5).value() == ones);
  std::mt19937_64 rng(1);
  Tape train(true, &rng);
  auto d = dropout(train.constant(ones), 0.25).value();
  std::size_t zeros = 0;
  for (double x : d.values) {
    CHECK((x == 0.0 || std::abs(x - 1.0 / 0.75) < 1e-12));
    zeros += x == 0.0 ? 1 : 0;
  }
  CHECK(zeros > 500);
  CHECK(zeros < 750);
}

TEST_CASE("glorot init") {
  std::mt19937_64 a(4), b(4);
  Tensor t = glorot_init({200, 200}, a);
  const double bound = std::sqrt(6.0 / 400.0);
  CHECK(bound == doctest::Approx(0.1225).epsilon(1e-3));
  for (double x : t.values) CHECK(std::abs(x) <= bound);
  CHECK(t == glorot_init({200, 200}, b));
  CHECK_THROWS_AS(glorot_init({3}, a), ConfigError);

  Tensor big = glorot_init({100, 1000}, a);
  double mean = 0;
  for (double x : big.values) mean += x;
  mean /= static_cast<double>(big.size());
  const double bound2 = std::sqrt(6.0 / 1100.0);
  const double sigma = bound2 / std::sqrt(3.0) / std::sqrt(static_cast<double>(big.size()));
  CHECK(std::abs(mean) < 3 * sigma);
}

TEST_CASE("encoder layer") {
  ParamStore store;
  std::mt19937_64 rng(6);
  EncoderLayer layer = EncoderLayer::create(store, "l", 8, 16, rng);
  CHECK_THROWS_AS(transformer_encoder_layer(Tape().constant(Tensor::matrix(2, 8)), layer, {3, 0.0}), ConfigError);

  SUBCASE("single token attends only to itself") {
    Tape tape;
    Tensor x = oracle::random_tensor(1, 8, rng);
    std::vector<std::vector<double>> w;
    Var q = tape.constant(x);
    Var out = segment_attention(q, q, q, std::vector<Segment>{{0, 1}}, 2, 0.0, &w);
    CHECK(w[0] == std::vector<double>{1.0});
    CHECK(out.value() == x);
  }
  SUBCASE("token permutation permutes the output rows") {
    Tensor x = oracle::random_tensor(5, 8, rng);
    const std::vector<std::size_t> perm{3, 0, 4, 1, 2};
    Tensor px = x;
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t c = 0; c < 8; ++c) px(i, c) = x(perm[i], c);
    Tape tape;
    Tensor y = transformer_encoder_layer(tape.constant(x), layer, {2, 0.0}).value();
    Tensor py = transformer_encoder_layer(tape.constant(px), layer, {2, 0.0}).value();
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t c = 0; c < 8; ++c) CHECK(std::abs(py(i, c) - y(perm[i], c)) < 1e-12);
  }
}

TEST_CASE("gradients match central differences") {
  for (const auto& c : oracle::gradient_cases()) {
    INFO(c.name << " worst at " << c.report.where);
    CHECK(c.report.checked > 0);
    CHECK(c.report.worst < 1e-4);
  }
}

TEST_CASE("baseline model gradients match central differences") {
  for (auto kind : {MultisetKind::Sum, MultisetKind::Attention, MultisetKind::SetAttention}) {
    auto r = oracle::check_model_gradients(kind);
    INFO(to_string(kind) << " worst at " << r.where);
    CHECK(r.worst < 1e-4);
  }
}

TEST_CASE("checkpoint round trip") {
  ParamStore a, b;
  std::mt19937_64 rng(2);
  a.add("x", glorot_init({3, 4}, rng));
  a.add("y", Tensor::row({1.0 / 3, -2.5e-300, 7}));
  b.add("x", Tensor::matrix(3, 4));
  b.add("y", Tensor::row({0, 0, 0}));
  std::stringstream s;
  write_checkpoint(s, a);
  read_checkpoint(s, b);
  CHECK(b.get("x").value == a.get("x").value);
  CHECK(b.get("y").value == a.get("y").value);

  ParamStore wrong;
  wrong.add("x", Tensor::matrix(4, 3));
  wrong.add("y", Tensor::row({0, 0, 0}));
  std::stringstream s2;
  write_checkpoint(s2, a);
  CHECK_THROWS_AS(read_checkpoint(s2, wrong), ValidationError);
  std::stringstream junk("not a checkpoint");
  CHECK_THROWS_AS(read_checkpoint(junk, b), ValidationError);
}
