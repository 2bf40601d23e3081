#pragma once

// Materialization strategies and their inference phases.
//
//  * strawman: the probability of every possible world;
//  * sampling: a bundle of Gibbs samples reused as independent
//    Metropolis-Hastings proposals for the updated distribution;
//  * variational: a sparse pairwise graph fitted to the sampled covariance
//    by a box-constrained log-det problem, updated in place.

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ddinc/graph.h"
#include "ddinc/grounding.h"
#include "ddinc/inference.h"
#include "ddinc/logdet.h"

namespace ddinc {

// Bundle was built for a different graph.
class FingerprintError : public Error {
 public:
  using Error::Error;
};

// --- strawman ---------------------------------------------------------------

struct WorldTable {
  std::vector<VarId> free_vars;       // ascending; bit k of the index is var k
  std::vector<double> probabilities;  // 2^|free_vars| entries

  double probability(const World& w) const;
};

WorldTable materialize_strawman(const FactorGraph& graph,
                                std::size_t cap = kEnumerationCap);

// Exact marginals of the updated graph, reweighting the stored worlds by the
// delta factors and enumerating new free variables.
std::vector<double> strawman_infer(const WorldTable& table,
                                   const FactorGraph& before,
                                   const UpdateDelta& delta,
                                   std::size_t cap = kEnumerationCap);

// --- sampling ---------------------------------------------------------------

struct SampleBudget {
  std::size_t samples = 1000;
  // When set, draws until the wall-clock budget runs out (at most
  // max_samples); `samples` is ignored.
  std::optional<double> seconds;
  std::size_t max_samples = 1000000;
  std::size_t burn_in = 100;
  std::size_t thinning = 1;
  std::uint64_t seed = 1;
};

// First world after burn-in, then one world every `thinning` sweeps.
SampleSet materialize_samples(const FactorGraph& graph,
                              const SampleBudget& budget);

struct MhConfig {
  // Accepted proposals wanted; fewer means the bundle is exhausted. Zero
  // asks only for a non-empty bundle.
  std::size_t target_accepted = 0;
  // Stored worlds to use as proposals after the first; 0 uses all.
  std::size_t max_proposals = 0;
  std::uint64_t seed = 1;
};

struct MhResult {
  std::vector<double> marginals;  // over the updated graph
  std::size_t proposals = 0;
  std::size_t accepted = 0;
  double acceptance_rate = 1.0;
  bool exhausted = false;
  // Factors read while evaluating the delta weight D; each evaluation
  // reads every factor of the delta set once.
  std::uint64_t factor_fetches = 0;
  std::size_t evaluations = 0;
  std::size_t delta_set_size = 0;
};

// `samples` must have been drawn from `before`. Stored worlds are visited in
// a random order fixed by the seed: the first starts the chain and every
// other one is proposed once.
MhResult mh_infer(const SampleSet& samples, const FactorGraph& before,
                  const UpdateDelta& delta, const MhConfig& config);

// --- variational ------------------------------------------------------------

struct CovarianceEstimate {
  std::vector<VarId> vars;  // query variables, row/column order
  Eigen::VectorXd mean;     // spin means
  Eigen::MatrixXd M;        // spin covariance, zero outside NZ
  PatternMat nz;            // pairs sharing a factor
};

CovarianceEstimate estimate_covariance(const FactorGraph& graph,
                                       const SampleSet& samples);

struct ConstraintViolation {
  double diagonal = 0;  // max |X_kk - M_kk - 1/3|
  double box = 0;       // max excess of |X_kj - M_kj| over lambda on NZ
  double pattern = 0;   // max |X_kj| off NZ
  double max() const { return std::max({diagonal, box, pattern}); }
};

ConstraintViolation check_constraints(const CovarianceEstimate& cov,
                                      const Eigen::MatrixXd& X, double lambda);

struct VariationalConfig {
  double lambda = 0.01;
  SampleBudget sampling;  // N = sampling.samples
  LogdetOptions<double> solver;
  // Precision entries at or below this magnitude emit no factor.
  double prune = 1e-6;
};

struct VariationalResult {
  FactorGraph approx;
  CovarianceEstimate covariance;
  LogdetResult<double> solution;
  std::size_t pair_factors = 0;
  std::size_t unary_factors = 0;
};

// Pairwise graph over the same variables: a coupling J_ij s_i s_j for each
// NZ pair whose precision entry -J_ij survives, and a unary field per query
// variable chosen so that the mean-field (TAP) marginals equal the sampled
// ones. Evidence variables keep their roles and get no factors.
FactorGraph build_approx_graph(const FactorGraph& graph,
                               const CovarianceEstimate& cov,
                               const Eigen::MatrixXd& X, double prune,
                               std::size_t* pair_factors = nullptr);

VariationalResult materialize_variational(const FactorGraph& graph,
                                          const SampleSet& samples,
                                          const VariationalConfig& config);
VariationalResult materialize_variational(const FactorGraph& graph,
                                          const VariationalConfig& config);

struct KlEstimate {
  double value = 0;
  double standard_error = 0;
  bool exact = false;
};

// KL(p || q). Exact by enumeration up to the cap; otherwise an importance
// estimate from samples of p.
KlEstimate estimate_kl(const FactorGraph& p, const FactorGraph& q,
                       const SampleSet& samples_of_p,
                       std::size_t cap = kEnumerationCap);

struct LambdaProbe {
  double lambda;
  KlEstimate kl;
  std::size_t factors;
};

struct LambdaSelection {
  double lambda = 0;
  std::vector<LambdaProbe> probes;
  VariationalResult result;  // at the selected lambda
};

// Probes 0.001, 0.01, ... (`steps` values) on one sample set and returns the
// last lambda whose KL stays within the threshold. Throws InfeasibleError
// when the first probe already exceeds it.
LambdaSelection select_lambda(const FactorGraph& graph, double kl_threshold,
                              const VariationalConfig& config,
                              std::size_t steps = 4);
LambdaSelection select_lambda(const FactorGraph& graph, double kl_threshold,
                              const SampleSet& samples,
                              const VariationalConfig& config,
                              std::size_t steps = 4);

struct SplicedGraph {
  FactorGraph graph;  // variables in the order of apply_delta's graph
  std::size_t correction_factors = 0;
};

// Applies the delta to the approximate graph: removed variables drop with
// their approx factors, roles change, and original-form factors are added
// for new factors, with negated copies cancelling removed factors and
// difference copies for changed weights.
SplicedGraph splice_delta(const FactorGraph& approx, const FactorGraph& before,
                          const UpdateDelta& delta);

struct VariationalInference {
  std::vector<double> marginals;
  std::uint64_t factor_fetches = 0;
  std::size_t factors = 0;
};

VariationalInference variational_infer(const FactorGraph& approx,
                                       const FactorGraph& before,
                                       const UpdateDelta& delta,
                                       const GibbsConfig& gibbs);

// --- bundles ----------------------------------------------------------------

struct BundleMeta {
  std::size_t samples = 0;
  std::uint64_t seed = 0;
  std::string fingerprint;
  std::size_t burn_in = 0;
  std::size_t thinning = 1;
  std::optional<double> time_budget;
  std::optional<double> lambda;
  std::size_t solver_iterations = 0;
  double solver_gap = 0;
  double solver_gradient_norm = 0;
  std::size_t original_factors = 0;
  std::size_t approx_factors = 0;
  std::optional<std::string> variational_error;
};

struct MaterializationBundle {
  SampleSet samples;
  std::optional<WorldTable> strawman;
  std::optional<FactorGraph> approx;
  BundleMeta meta;
};

// Directory with samples.bin, meta.json and, when present, approx.jsonl and
// strawman.json.
void write_bundle(const std::string& dir, const MaterializationBundle& b);
MaterializationBundle read_bundle(const std::string& dir);

// Throws FingerprintError unless the bundle was built for `graph`.
void check_fingerprint(const MaterializationBundle& b, const FactorGraph& graph);

}  // namespace ddinc
