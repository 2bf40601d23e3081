#pragma once

// Synthetic workloads: convergence of the three semantics on the voting
// program, and the materialization tradeoff axes (graph size, amount of
// change, sparsity of correlations).

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ddinc/graph.h"
#include "ddinc/grounding.h"

namespace ddinc {

// q with one factor over `up` vote variables (weight +w) and one over
// `down` vote variables (weight -w); every variable is free.
FactorGraph voting_graph(std::size_t up, std::size_t down, double weight,
                         Semantics semantics);

struct SemanticsBenchConfig {
  std::vector<std::size_t> sizes = {4, 8, 16};  // |U| + |D|, split evenly
  std::size_t seeds = 20;
  double epsilon = 0.01;
  std::size_t max_sweeps = 20000;
  std::size_t window = 100;
  double weight = 1.0;
  std::uint64_t seed = 1;
};

struct SemanticsRow {
  std::size_t n = 0;
  Semantics semantics = Semantics::kLinear;
  double exact = 0;           // Pr[q]
  double median_sweeps = 0;   // runs that never converge count max_sweeps+1
  std::size_t censored = 0;
};

std::vector<SemanticsRow> bench_semantics(const SemanticsBenchConfig& config);
void write_semantics_csv(std::ostream& out, const std::vector<SemanticsRow>& rows);

struct PairwiseSpec {
  std::size_t vars = 100;
  double factors_per_var = 3.0;
  // Fraction of factors keeping their random weight; the rest get 0.
  double sparsity = 1.0;
  double weight_lo = -0.5;
  double weight_hi = 0.5;
  std::uint64_t seed = 1;
};

// Variables x(i); factors with head x(i) and one grounding [x(j)], each with
// its own fixed weight. The first vars-1 factors form a random tree.
FactorGraph synthetic_pairwise(const PairwiseSpec& spec);

// Adds +-magnitude to the weights of a random `fraction` of the factors.
UpdateDelta perturb_weights(const FactorGraph& graph, double fraction,
                            double magnitude, std::uint64_t seed);

struct TradeoffConfig {
  std::vector<std::size_t> vars = {2, 10, 17, 100, 1000};
  std::vector<double> acceptance = {1.0, 0.5, 0.1, 0.01};
  std::vector<double> sparsity = {0.1, 0.2, 0.3, 0.4, 0.5, 1.0};
  std::size_t base_vars = 100;  // graph size on the other two axes
  double factors_per_var = 3.0;
  double weight_lo = -0.5;
  double weight_hi = 0.5;
  std::size_t samples = 1000;
  std::size_t sweeps = 1000;       // Gibbs sweeps of every inference run
  std::size_t burn_in = 100;
  double lambda = 0.1;
  double change_fraction = 0.2;    // factors perturbed on the change axis
  // Variable-count cells above this skip the variational strategy.
  std::size_t max_variational_vars = 1000;
  std::uint64_t seed = 1;
  bool timing = true;  // false writes zero runtimes
};

struct TradeoffRow {
  std::string axis;   // vars | acceptance | sparsity
  double value = 0;   // the axis setting
  std::string strategy;  // strawman | sampling | variational | rerun
  bool feasible = true;
  std::string note;
  double materialize_seconds = 0;
  double inference_seconds = 0;
  double acceptance_rate = 1.0;  // sampling rows
  std::size_t factors = 0;       // graph used by inference
  std::uint64_t factor_fetches = 0;
  double marginal_error = 0;     // max abs error vs the reference
};

std::vector<TradeoffRow> bench_tradeoff(const TradeoffConfig& config);
void write_tradeoff_csv(std::ostream& out, const std::vector<TradeoffRow>& rows,
                        bool timing = true);

}  // namespace ddinc
