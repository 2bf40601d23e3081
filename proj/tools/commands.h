#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace ddinc::cli {

enum Exit : int {
  kOk = 0,
  kUsage = 1,
  kInput = 2,
  kFingerprint = 3,
  kInfeasible = 4,
};

struct Common {
  std::uint64_t seed = 1;
  std::size_t threads = 1;
};

struct GroundArgs {
  std::string rules, data, out;
};

struct MaterializeArgs {
  std::string graph, out;
  std::size_t samples = 1000;
  std::optional<double> time_budget;
  std::size_t burn_in = 100;
  std::size_t thinning = 1;
  std::string variational = "0.01";  // lambda, "auto" or "off"
  double kl_threshold = 0.1;
  bool strawman = false;
};

struct UpdateArgs {
  std::string rules, data, data_delta, rules_next, graph, bundle;
  std::string out_delta, out_graph;
};

struct InferArgs {
  std::string graph, bundle, delta, out, calibration;
  std::string strategy = "auto";
  std::size_t sweeps = 1000;
  std::size_t burn_in = 100;
  std::size_t chains = 1;
  std::size_t target_accepted = 0;
};

struct LearnArgs {
  std::string graph, rules, data, warmstart, out_weights, out_loss, out_graph;
  std::size_t epochs = 20;
  std::vector<double> steps = {1.0, 0.1, 0.01, 0.001, 0.0001};
  std::size_t gradient_samples = 20;
  std::size_t chains = 2;
  double l2 = 0;
  bool exact = false;
};

struct SemanticsArgs {
  std::string out;
  std::vector<std::size_t> sizes = {4, 8, 16};
  std::size_t seeds = 20;
  std::size_t max_sweeps = 20000;
  std::size_t window = 100;
  double epsilon = 0.01;
  double weight = 1.0;
};

struct TradeoffArgs {
  std::string out;
  std::vector<std::size_t> vars = {2, 10, 17, 100, 1000};
  std::vector<double> acceptance = {1.0, 0.5, 0.1, 0.01};
  std::vector<double> sparsity = {0.1, 0.2, 0.3, 0.4, 0.5, 1.0};
  std::size_t base_vars = 100;
  double weight_lo = -0.5, weight_hi = 0.5;
  std::size_t samples = 1000;
  std::size_t sweeps = 1000;
  double lambda = 0.1;
  std::size_t max_variational_vars = 1000;
  bool no_timing = false;
};

int cmd_ground(const Common&, const GroundArgs&);
int cmd_materialize(const Common&, const MaterializeArgs&);
int cmd_update(const Common&, const UpdateArgs&);
int cmd_infer(const Common&, const InferArgs&);
int cmd_learn(const Common&, const LearnArgs&);
int cmd_bench_semantics(const Common&, const SemanticsArgs&);
int cmd_bench_tradeoff(const Common&, const TradeoffArgs&);

}  // namespace ddinc::cli
