#pragma once

// Weight learning by stochastic gradient ascent on the log-likelihood of the
// evidence, with warmstart from a previous weight vector.
//
// The gradient for weight k is E[phi_k | evidence] - E[phi_k], where
// phi_k(I) sums sign * g(n) over the factors tied to k.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ddinc/graph.h"
#include "ddinc/inference.h"

namespace ddinc {

std::vector<double> features(const FactorGraph& graph, const World& world);

// Average of phi over the samples.
std::vector<double> feature_expectation(const FactorGraph& graph,
                                        const SampleSet& samples);

// Copy of the graph with every evidence variable turned into a query one.
FactorGraph unclamped(const FactorGraph& graph);

FactorGraph with_weights(const FactorGraph& graph,
                         std::span<const double> weights);

// By enumeration; `clamp_evidence` false averages over the unclamped graph.
std::vector<double> exact_feature_expectation(const FactorGraph& graph,
                                              bool clamp_evidence,
                                              std::size_t cap = kEnumerationCap);

// log Pr[evidence] = log Z(clamped) - log Z(unclamped).
double exact_log_likelihood(const FactorGraph& graph,
                            std::size_t cap = kEnumerationCap);

// Clamped minus unclamped exact expectations, zero for fixed weights.
std::vector<double> exact_gradient(const FactorGraph& graph,
                                   std::size_t cap = kEnumerationCap);

// Mean negative log-pseudo-likelihood of the evidence variables, each given
// the rest of `completion` (evidence at labels, query variables as given).
// Zero when there is no evidence.
double pseudo_likelihood_loss(const FactorGraph& graph,
                              std::span<const double> weights,
                              const World& completion);

// Average of the above over completions taken from the samples' query
// values.
double estimate_loss(const FactorGraph& graph, std::span<const double> weights,
                     const SampleSet& samples);

class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, double step)
      : Error(what), step_(step) {}
  double step_size() const { return step_; }

 private:
  double step_;
};

struct TrainConfig {
  std::vector<double> step_sizes = {1.0, 0.1, 0.01, 0.001, 0.0001};
  std::size_t epochs = 20;
  // Sweeps of each persistent chain per epoch; the expectations average
  // over these sweeps.
  std::size_t gradient_samples = 20;
  std::size_t chains = 2;
  std::uint64_t seed = 1;
  // Starting weights (all weights, fixed ones ignored). Random init draws
  // learnable weights uniformly from [-init_scale, init_scale].
  std::optional<std::vector<double>> warmstart;
  double init_scale = 0.5;
  double l2 = 0.0;
  // Enumeration instead of chains; for small graphs.
  bool exact = false;
};

struct LossPoint {
  std::size_t epoch;
  double step_size;
  double loss;
};

struct TrainResult {
  std::vector<double> weights;
  double step_size = 0;
  std::vector<LossPoint> trace;  // every grid value, epochs 0..E
  double initial_loss = 0;       // epoch 0 of the chosen step size
  double final_loss = 0;
  std::vector<double> diverged;  // step sizes skipped
};

// Runs the full schedule for every grid value from the same start and keeps
// the one with the lowest final loss. Diverging step sizes are skipped; a
// DivergenceError names the step size when none converges.
TrainResult sgd_train(const FactorGraph& graph, const TrainConfig& config);

std::vector<double> initial_weights(const FactorGraph& graph,
                                    const TrainConfig& config);

// CSV "param_id,description,value"; ids 0-based.
void write_weights_csv(std::ostream& out, const FactorGraph& graph,
                       std::span<const double> weights);
// Matches rows to the graph's weights by description, falling back to the
// id when the description is empty. Unmatched weights keep `fallback`.
std::vector<double> read_weights_csv(std::istream& in, const FactorGraph& graph,
                                     std::vector<double> fallback);
// CSV "epoch,step_size,loss".
void write_loss_csv(std::ostream& out, std::span<const LossPoint> trace);

}  // namespace ddinc
