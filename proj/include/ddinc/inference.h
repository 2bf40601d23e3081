#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ddinc/graph.h"
#include "ddinc/rng.h"

namespace ddinc {

// N worlds packed one bit per variable, LSB first, ceil(|V|/8) bytes per
// world. On disk: "DDSMPL01", |V| and N as little-endian u64, then the rows.
class SampleSet {
 public:
  static constexpr std::size_t kHeaderBytes = 24;

  explicit SampleSet(std::size_t num_vars = 0) : num_vars_(num_vars) {}

  std::size_t num_vars() const { return num_vars_; }
  std::size_t size() const { return size_; }
  bool empty() const { return size_ == 0; }
  std::size_t row_bytes() const { return (num_vars_ + 7) / 8; }
  std::size_t storage_bytes() const { return kHeaderBytes + bits_.size(); }

  void append(const World& w);
  void append(const SampleSet& other);
  World world(std::size_t i) const;
  void load(std::size_t i, World& out) const;
  bool bit(std::size_t i, VarId v) const {
    return (bits_[i * row_bytes() + v / 8] >> (v % 8)) & 1;
  }
  const std::vector<std::uint8_t>& bytes() const { return bits_; }

  void write(std::ostream& out) const;
  static SampleSet read(std::istream& in);
  void write_file(const std::string& path) const;
  static SampleSet read_file(const std::string& path);

  bool operator==(const SampleSet&) const = default;

 private:
  std::size_t num_vars_;
  std::size_t size_ = 0;
  std::vector<std::uint8_t> bits_;
};

// Gibbs chain over one graph. Keeps per-grounding counts of false literals
// and per-factor satisfied-grounding counts, so resampling a variable costs
// time proportional to its adjacent groundings.
class GibbsChain {
 public:
  // `weights` overrides the graph's weight values when non-empty.
  GibbsChain(const FactorGraph& graph, std::span<const double> weights = {});

  void reset(const World& world);
  const World& world() const { return world_; }

  // Pr[v = 1 | rest] under the current world.
  double conditional(VarId v);
  void set(VarId v, std::uint8_t value);
  // One pass over the query variables in id order.
  void sweep(Rng& rng);
  // Resamples only `vars`, in the given order.
  void sweep(Rng& rng, std::span<const VarId> vars);

  std::uint64_t factor_fetches() const { return fetches_; }

 private:
  struct Occurrence {
    std::uint32_t grounding;  // global grounding index
    std::uint16_t pos;        // positive literals of v in the grounding
    std::uint16_t neg;        // negative literals of v in the grounding
  };
  struct Adjacent {
    FactorId factor;
    std::uint32_t begin, end;  // range in occurrences_
  };

  double weight_of(FactorId f) const { return weights_[graph_.factor(f).weight]; }

  const FactorGraph& graph_;
  std::vector<double> weights_;
  std::vector<std::uint32_t> grounding_factor_;
  std::vector<std::uint32_t> factor_first_grounding_;
  std::vector<std::vector<Adjacent>> adjacency_;
  std::vector<Occurrence> occurrences_;
  std::vector<VarId> query_;
  World world_;
  std::vector<std::uint32_t> unsat_;  // false literals per grounding
  std::vector<std::int32_t> nsat_;    // satisfied groundings per factor
  std::uint64_t fetches_ = 0;
};

// Pr[v = 1] given all other variables, straight from the factor weights.
double gibbs_conditional(const FactorGraph& graph, const World& world, VarId v);

struct GibbsConfig {
  std::size_t sweeps = 1000;
  std::size_t burn_in = 100;
  std::size_t chains = 1;
  std::uint64_t seed = 1;
  std::size_t thinning = 1;     // keep every k-th post-burn-in sweep
  bool record_samples = false;  // keep kept worlds as a SampleSet
  std::vector<VarId> trace_vars;
  std::size_t threads = 0;      // 0: one thread per chain
  // Random initial values for query variables; false starts them at 0.
  bool random_init = true;
};

struct GibbsResult {
  std::vector<double> marginals;
  SampleSet samples;
  // traces[k]: values of trace_vars[k] at every kept sweep, chain by chain.
  std::vector<std::vector<std::uint8_t>> traces;
  std::uint64_t factor_fetches = 0;
  std::size_t kept = 0;
};

// Chains use RNG streams 0..chains-1 of the seed and are merged in index
// order, so results do not depend on the thread count.
GibbsResult run_gibbs(const FactorGraph& graph, const GibbsConfig& config,
                      std::span<const double> weights = {});

// First sweep s at which the running mean of `var` is within epsilon of
// `target` and stays there for `window` consecutive sweeps; nullopt when
// max_sweeps runs out first.
std::optional<std::size_t> sweeps_to_epsilon(const FactorGraph& graph,
                                             VarId var, double target,
                                             double epsilon,
                                             std::size_t max_sweeps,
                                             std::uint64_t seed,
                                             std::size_t window = 100);

// CSV "var_id,relation,tuple,probability", 1-based ids, tuple values joined
// with ';', probabilities with 6 decimals.
void write_marginals_csv(std::ostream& out, const FactorGraph& graph,
                         std::span<const double> marginals);

std::string csv_field(const std::string& s);

}  // namespace ddinc
