#include <doctest.h>

#include <cmath>

#include "ddinc/bench.h"
#include "ddinc/incremental.h"
#include "ddinc/logdet.h"
#include "support/oracle.h"
#include "support/random_graphs.h"

using namespace ddinc;

namespace {

PatternMat full_pattern(Eigen::Index n) {
  PatternMat p = PatternMat::Constant(n, n, true);
  return p;
}

// Random covariance-like matrix with unit-ish diagonal.
Eigen::MatrixXd random_spd(Rng& rng, Eigen::Index n) {
  Eigen::MatrixXd A(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) A(i, j) = rng.uniform(-1, 1);
  }
  Eigen::MatrixXd S = A * A.transpose() / n;
  Eigen::VectorXd d = S.diagonal().cwiseSqrt().cwiseInverse();
  return 0.8 * d.asDiagonal() * S * d.asDiagonal();
}

}  // namespace

TEST_CASE("two-variable solution is the box point nearest zero") {
  Eigen::MatrixXd M(2, 2);
  M << 0.9, 0.4, 0.4, 0.7;
  LogdetOptions<double> opt;
  opt.lambda = 0.1;
  auto r = solve_logdet<double>(M, full_pattern(2), opt);
  CHECK(r.converged);
  CHECK(r.X(0, 0) == doctest::Approx(0.9 + 1.0 / 3));
  CHECK(r.X(0, 1) == doctest::Approx(0.3).epsilon(1e-9));
  opt.lambda = 0.5;
  r = solve_logdet<double>(M, full_pattern(2), opt);
  CHECK(std::abs(r.X(0, 1)) < 1e-9);
}

TEST_CASE("solver reaches a first-order optimum on dense patterns") {
  Rng rng(31, 0);
  for (int trial = 0; trial < 5; ++trial) {
    const Eigen::Index n = 5;
    Eigen::MatrixXd M = random_spd(rng, n);
    LogdetOptions<double> opt;
    opt.lambda = 0.05;
    auto r = solve_logdet<double>(M, full_pattern(n), opt);
    REQUIRE(r.converged);
    CHECK(r.duality_gap < 1e-6);
    // Independent check: no feasible coordinate move improves log det.
    const double h = 1e-6;
    for (Eigen::Index i = 0; i < n; ++i) {
      CHECK(r.X(i, i) == doctest::Approx(M(i, i) + 1.0 / 3));
      for (Eigen::Index j = i + 1; j < n; ++j) {
        CHECK(std::abs(r.X(i, j) - M(i, j)) <= opt.lambda + 1e-9);
        for (double step : {h, -h}) {
          Eigen::MatrixXd Y = r.X;
          Y(i, j) += step;
          Y(j, i) += step;
          if (std::abs(Y(i, j) - M(i, j)) > opt.lambda) continue;
          CHECK(log_det_pd(Y) <= log_det_pd(r.X) + 1e-9);
        }
      }
    }
  }
}

TEST_CASE("zero pattern is respected") {
  Eigen::MatrixXd M(3, 3);
  M << 0.9, 0.5, 0.3, 0.5, 0.8, 0.4, 0.3, 0.4, 0.7;
  PatternMat nz = full_pattern(3);
  nz(0, 2) = nz(2, 0) = false;
  LogdetOptions<double> opt;
  opt.lambda = 0.01;
  auto r = solve_logdet<double>(M, nz, opt);
  CHECK(r.X(0, 2) == 0.0);
  CHECK(r.X(0, 1) == doctest::Approx(0.49));
}

TEST_CASE("single precision instantiation") {
  Eigen::MatrixXf M(2, 2);
  M << 0.9f, 0.4f, 0.4f, 0.7f;
  LogdetOptions<float> opt;
  opt.lambda = 0.1f;
  opt.tolerance = 1e-4f;
  opt.gap_tolerance = 1e-4f;
  PatternMat nz = full_pattern(2);
  auto r = solve_logdet<float>(M, nz, opt);
  CHECK(r.X(0, 1) == doctest::Approx(0.3f).epsilon(1e-5));
}

TEST_CASE("covariance estimate") {
  FactorGraph g;
  g.add_variable({});
  g.add_variable({});
  g.add_variable({Role::kEvidencePositive, "E", {}});
  WeightId w = g.add_weight({1.0, true, "p"});
  g.add_factor({"p", VarId{0}, {{{1, true}}}, w, Semantics::kLinear});
  SampleSet s(3);
  for (World row : {World{1, 1, 1}, World{0, 0, 1}, World{1, 0, 1}, World{1, 1, 1}}) {
    s.append(row);
  }
  CovarianceEstimate c = estimate_covariance(g, s);
  CHECK(c.vars == std::vector<VarId>{0, 1});
  // Spins: x0 = {1,-1,1,1}, x1 = {1,-1,-1,1}.
  CHECK(c.mean(0) == doctest::Approx(0.5));
  CHECK(c.mean(1) == doctest::Approx(0.0));
  CHECK(c.M(0, 0) == doctest::Approx(0.75));
  CHECK(c.M(0, 1) == doctest::Approx(0.5));
  CHECK(c.nz(0, 1));
  SampleSet one(3);
  one.append(World{1, 1, 1});
  CHECK_THROWS(estimate_covariance(g, one));
}

TEST_CASE("variational approximation of a small chain") {
  PairwiseSpec spec;
  spec.vars = 6;
  spec.factors_per_var = 1.0;
  spec.seed = 4;
  FactorGraph g = synthetic_pairwise(spec);
  VariationalConfig cfg;
  cfg.lambda = 0.01;
  cfg.sampling.samples = 20000;
  cfg.sampling.thinning = 2;
  VariationalResult r = materialize_variational(g, cfg);
  CHECK(r.solution.converged);
  CHECK(check_constraints(r.covariance, r.solution.X, cfg.lambda).max() < 1e-8);
  CHECK(r.unary_factors == 6);
  auto exact = oracle::marginals(g);
  auto approx = oracle::marginals(r.approx);
  for (VarId v = 0; v < g.num_variables(); ++v) {
    CHECK(std::abs(exact[v] - approx[v]) < 0.05);
  }
  CHECK(oracle::kl(g, r.approx) < 0.1);
}

TEST_CASE("larger lambda never adds factors") {
  PairwiseSpec spec;
  spec.vars = 10;
  spec.factors_per_var = 1.5;
  spec.seed = 9;
  FactorGraph g = synthetic_pairwise(spec);
  SampleBudget sb;
  sb.samples = 3000;
  SampleSet s = materialize_samples(g, sb);
  std::size_t prev = SIZE_MAX;
  for (double lambda : {0.001, 0.01, 0.1, 1.0}) {
    VariationalConfig cfg;
    cfg.lambda = lambda;
    VariationalResult r = materialize_variational(g, s, cfg);
    CHECK(r.approx.num_factors() <= prev);
    prev = r.approx.num_factors();
  }
  CHECK(prev == g.num_query());  // only unary fields remain
}

TEST_CASE("kl estimates") {
  Rng rng(33, 0);
  testing_support::RandomGraphSpec gs;
  gs.max_free = 7;
  gs.min_free = 6;
  gs.max_evidence = 0;
  FactorGraph p = testing_support::random_graph(rng, gs);
  FactorGraph q = p;
  for (WeightId w = 0; w < q.num_weights(); ++w) {
    q.set_weight(w, q.weight(w).value * 0.7);
  }
  SampleBudget sb;
  sb.samples = 20000;
  SampleSet s = materialize_samples(p, sb);
  KlEstimate exact = estimate_kl(p, q, s);
  CHECK(exact.exact);
  CHECK(exact.value == doctest::Approx(oracle::kl(p, q)).epsilon(1e-9));
  KlEstimate est = estimate_kl(p, q, s, 3);
  CHECK_FALSE(est.exact);
  CHECK(std::abs(est.value - exact.value) < 0.02 + 3 * est.standard_error);
}

TEST_CASE("lambda selection returns the last lambda within the threshold") {
  PairwiseSpec spec;
  spec.vars = 8;
  spec.factors_per_var = 1.5;
  spec.seed = 2;
  FactorGraph g = synthetic_pairwise(spec);
  VariationalConfig cfg;
  cfg.sampling.samples = 4000;
  LambdaSelection sel = select_lambda(g, 0.05, cfg);
  REQUIRE_FALSE(sel.probes.empty());
  CHECK(sel.probes.front().lambda == doctest::Approx(0.001));
  for (const auto& p : sel.probes) {
    if (p.lambda <= sel.lambda) CHECK(p.kl.value <= 0.05);
  }
  if (sel.probes.back().lambda > sel.lambda) CHECK(sel.probes.back().kl.value > 0.05);
  CHECK_THROWS_AS(select_lambda(g, 1e-300, cfg), InfeasibleError);
  CHECK_THROWS_AS(select_lambda(g, -1.0, cfg), InputError);
}

TEST_CASE("splicing into the original graph reproduces the update exactly") {
  Rng rng(34, 0);
  for (int trial = 0; trial < 20; ++trial) {
    testing_support::RandomGraphSpec gs;
    gs.max_free = 8;
    FactorGraph g = testing_support::random_graph(rng, gs);
    UpdateDelta d = testing_support::random_delta(rng, g);
    SplicedGraph s = splice_delta(g, g, d);
    auto expect = oracle::marginals(apply_delta(g, d).graph);
    auto got = oracle::marginals(s.graph);
    for (std::size_t v = 0; v < expect.size(); ++v) {
      CHECK(got[v] == doctest::Approx(expect[v]).epsilon(1e-9));
    }
  }
}
