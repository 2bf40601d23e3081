#include <doctest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "ddinc/bench.h"
#include "support/oracle.h"

using namespace ddinc;

TEST_CASE("voting graph with observed votes matches the closed form") {
  for (Semantics s : {Semantics::kLinear, Semantics::kRatio, Semantics::kLogical}) {
    FactorGraph g = voting_graph(3, 2, 1.0, s);
    CHECK(g.num_variables() == 6);
    CHECK(g.num_factors() == 2);
    for (VarId v = 1; v < g.num_variables(); ++v) g.set_role(v, Role::kEvidencePositive);
    CHECK(oracle::marginals(g)[0] ==
          doctest::Approx(voting_closed_form(3, 2, s).probability));
  }
}

TEST_CASE("synthetic pairwise graphs") {
  PairwiseSpec spec;
  spec.vars = 50;
  spec.factors_per_var = 2.0;
  spec.seed = 3;
  FactorGraph g = synthetic_pairwise(spec);
  CHECK(g.num_variables() == 50);
  CHECK(g.num_factors() == 100);
  std::set<std::pair<VarId, VarId>> pairs;
  for (const auto& f : g.factors()) {
    REQUIRE(f.head);
    REQUIRE(f.groundings.size() == 1);
    VarId a = *f.head, b = f.groundings[0][0].var;
    CHECK(a != b);
    CHECK(pairs.insert({std::min(a, b), std::max(a, b)}).second);
    double w = g.weight(f.weight).value;
    CHECK(w >= -0.5);
    CHECK(w <= 0.5);
  }
  // The first vars-1 factors form a spanning tree.
  std::vector<int> parent(50);
  for (int i = 0; i < 50; ++i) parent[i] = i;
  auto find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (FactorId f = 0; f < 49; ++f) {
    int a = find(*g.factor(f).head), b = find(g.factor(f).groundings[0][0].var);
    CHECK(a != b);
    parent[a] = b;
  }

  spec.sparsity = 0.25;
  FactorGraph s = synthetic_pairwise(spec);
  std::size_t nonzero = 0;
  for (const auto& w : s.weights()) nonzero += w.value != 0;
  CHECK(nonzero == 25);
  CHECK(synthetic_pairwise(spec) == s);
}

TEST_CASE("weight perturbation") {
  PairwiseSpec spec;
  spec.vars = 200;
  FactorGraph g = synthetic_pairwise(spec);
  UpdateDelta d = perturb_weights(g, 0.1, 0.5, 1);
  CHECK(d.weight_changes.size() > 30);
  CHECK(d.weight_changes.size() < 90);
  for (const auto& [w, ch] : d.weight_changes) {
    CHECK(ch.first == g.weight(w).value);
    CHECK(std::abs(std::abs(ch.second - ch.first) - 0.5) < 1e-12);
  }
  CHECK(perturb_weights(g, 0.1, 0.0, 1).weight_changes.empty());
}

TEST_CASE("semantics bench rows") {
  SemanticsBenchConfig cfg;
  cfg.sizes = {4};
  cfg.seeds = 3;
  cfg.max_sweeps = 2000;
  auto rows = bench_semantics(cfg);
  REQUIRE(rows.size() == 3);
  for (const auto& r : rows) {
    CHECK(r.exact == doctest::Approx(0.5));
    CHECK(r.median_sweeps >= 1);
    CHECK(r.median_sweeps <= 2001);
  }
  std::ostringstream out;
  write_semantics_csv(out, rows);
  CHECK(out.str().rfind("n,semantics,exact,median_sweeps,censored\n4,linear,", 0) == 0);
}

TEST_CASE("tradeoff bench rows") {
  TradeoffConfig cfg;
  cfg.vars = {2, 21};
  cfg.acceptance = {1.0};
  cfg.sparsity = {0.5};
  cfg.base_vars = 20;
  cfg.samples = 200;
  cfg.sweeps = 200;
  cfg.burn_in = 20;
  cfg.timing = false;
  auto rows = bench_tradeoff(cfg);
  bool strawman_infeasible = false;
  for (const auto& r : rows) {
    if (r.axis == "vars" && r.value == 21 && r.strategy == "strawman") {
      strawman_infeasible = !r.feasible;
    }
    CHECK(r.materialize_seconds == 0);
    CHECK(r.inference_seconds == 0);
  }
  CHECK(strawman_infeasible);
  std::ostringstream a, b;
  write_tradeoff_csv(a, rows, false);
  write_tradeoff_csv(b, bench_tradeoff(cfg), false);
  CHECK(a.str() == b.str());
}
