#include <doctest.h>

#include <cmath>
#include <sstream>

#include "ddinc/learning.h"
#include "support/oracle.h"
#include "support/random_graphs.h"

using namespace ddinc;

namespace {

// Logistic regression: label y_i with features x_i1, x_i2 observed.
FactorGraph logistic(Rng& rng, std::size_t n, std::size_t unlabeled) {
  FactorGraph g;
  WeightId w1 = g.add_weight({0.0, false, "f1"});
  WeightId w2 = g.add_weight({0.0, false, "f2"});
  WeightId b = g.add_weight({0.0, false, "bias"});
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t base = g.num_variables();
    bool x1 = rng.uniform() < 0.5, x2 = rng.uniform() < 0.5;
    double score = 1.5 * x1 - 1.0 * x2 + 0.2;
    bool y = rng.uniform() < 1 / (1 + std::exp(-2 * score));
    Role ry = i < unlabeled ? Role::kQuery
                            : (y ? Role::kEvidencePositive : Role::kEvidenceNegative);
    g.add_variable({ry, "Y", {std::to_string(i)}});
    g.add_variable({x1 ? Role::kEvidencePositive : Role::kEvidenceNegative, "X1",
                    {std::to_string(i)}});
    g.add_variable({x2 ? Role::kEvidencePositive : Role::kEvidenceNegative, "X2",
                    {std::to_string(i)}});
    VarId yv = static_cast<VarId>(base);
    g.add_factor({"f1", yv, {{{yv + 1, true}}}, w1, Semantics::kLinear});
    g.add_factor({"f2", yv, {{{yv + 2, true}}}, w2, Semantics::kLinear});
    g.add_factor({"bias", yv, {{}}, b, Semantics::kLinear});
  }
  return g;
}

double oracle_pl(const FactorGraph& g, const World& completion) {
  double total = 0;
  std::size_t count = 0;
  for (VarId v = 0; v < g.num_variables(); ++v) {
    Role r = g.variable(v).role;
    if (!is_evidence(r)) continue;
    std::vector<int> w(completion.begin(), completion.end());
    int label = r == Role::kEvidencePositive;
    w[v] = label;
    double l_same = oracle::log_weight(g, w);
    w[v] = 1 - label;
    double l_flip = oracle::log_weight(g, w);
    total += std::log1p(std::exp(l_flip - l_same));
    ++count;
  }
  return count ? total / count : 0;
}

}  // namespace

TEST_CASE("features match the oracle") {
  Rng rng(51, 0);
  for (int trial = 0; trial < 10; ++trial) {
    FactorGraph g = testing_support::random_graph(rng);
    World w = initial_world(g);
    for (VarId v : g.query_variables()) w[v] = rng.below(2);
    auto f = features(g, w);
    auto o = oracle::phi(g, std::vector<int>(w.begin(), w.end()));
    for (std::size_t k = 0; k < f.size(); ++k) CHECK(f[k] == doctest::Approx(o[k]));
  }
}

TEST_CASE("exact gradient matches finite differences of the log-likelihood") {
  Rng rng(52, 0);
  for (int trial = 0; trial < 8; ++trial) {
    testing_support::RandomGraphSpec spec;
    spec.max_free = 6;
    spec.max_evidence = 4;
    FactorGraph g = testing_support::random_graph(rng, spec);
    auto grad = exact_gradient(g);
    CHECK(exact_log_likelihood(g) == doctest::Approx(oracle::log_likelihood(g)));
    for (WeightId k = 0; k < g.num_weights(); ++k) {
      const double h = 1e-5;
      FactorGraph up = g, dn = g;
      up.set_weight(k, g.weight(k).value + h);
      dn.set_weight(k, g.weight(k).value - h);
      double fd = (oracle::log_likelihood(up) - oracle::log_likelihood(dn)) / (2 * h);
      CHECK(std::abs(grad[k] - fd) < 1e-6);
    }
  }
}

TEST_CASE("fixed weights get no gradient") {
  FactorGraph g;
  g.add_variable({Role::kEvidencePositive, "Y", {}});
  WeightId w = g.add_weight({0.3, true, "fixed"});
  g.add_factor({"f", VarId{0}, {{}}, w, Semantics::kLinear});
  CHECK(exact_gradient(g)[0] == 0.0);
}

TEST_CASE("pseudo-likelihood loss matches the oracle") {
  Rng rng(53, 0);
  for (int trial = 0; trial < 10; ++trial) {
    FactorGraph g = testing_support::random_graph(rng);
    World w = initial_world(g);
    for (VarId v : g.query_variables()) w[v] = rng.below(2);
    CHECK(pseudo_likelihood_loss(g, g.weight_values(), w) ==
          doctest::Approx(oracle_pl(g, w)).epsilon(1e-10));
  }
}

TEST_CASE("sgd on logistic regression lowers the loss") {
  Rng rng(54, 0);
  FactorGraph g = logistic(rng, 60, 5);
  TrainConfig cfg;
  cfg.step_sizes = {0.05, 0.01};
  cfg.epochs = 30;
  cfg.gradient_samples = 10;
  TrainResult r = sgd_train(g, cfg);
  CHECK(r.final_loss < r.initial_loss);
  CHECK(r.trace.size() == 2 * 31);
  CHECK(r.weights[0] > r.weights[1]);  // f1 helps, f2 hurts

  TrainConfig again = cfg;
  TrainResult r2 = sgd_train(g, again);
  CHECK(r2.weights == r.weights);
}

TEST_CASE("divergent step sizes are skipped") {
  Rng rng(55, 0);
  FactorGraph g = logistic(rng, 40, 0);
  TrainConfig cfg;
  cfg.step_sizes = {1e9, 0.01};
  cfg.epochs = 5;
  TrainResult r = sgd_train(g, cfg);
  CHECK(r.diverged == std::vector<double>{1e9});
  CHECK(r.step_size == 0.01);
  cfg.step_sizes = {1e9};
  CHECK_THROWS_AS(sgd_train(g, cfg), DivergenceError);
}

TEST_CASE("warmstart starts from the given weights") {
  Rng rng(56, 0);
  FactorGraph g = logistic(rng, 30, 0);
  TrainConfig cfg;
  cfg.warmstart = std::vector<double>{0.7, -0.4, 0.1};
  auto w = initial_weights(g, cfg);
  CHECK(w == *cfg.warmstart);
  cfg.warmstart = std::vector<double>{0.7};
  CHECK_THROWS_AS(initial_weights(g, cfg), InputError);
}

TEST_CASE("weights csv round trip") {
  Rng rng(57, 0);
  FactorGraph g = logistic(rng, 3, 0);
  std::vector<double> w{0.1234567890123, -2.5, 1e-12};
  std::stringstream ss;
  write_weights_csv(ss, g, w);
  CHECK(ss.str().rfind("param_id,description,value\n0,f1,", 0) == 0);
  auto back = read_weights_csv(ss, g, std::vector<double>(3, 9.0));
  CHECK(back == w);

  std::istringstream partial("param_id,description,value\n7,bias,0.5\n");
  CHECK(read_weights_csv(partial, g, {1, 2, 3}) == std::vector<double>{1, 2, 0.5});
}

TEST_CASE("loss csv") {
  std::vector<LossPoint> t{{0, 0.1, 0.5}, {1, 0.1, 0.25}};
  std::ostringstream out;
  write_loss_csv(out, t);
  CHECK(out.str() == "epoch,step_size,loss\n0,0.1,0.5\n1,0.1,0.25\n");
}
