#pragma once

// Factor graphs over Boolean variables. A factor contributes
//   w * sign * g(n)
// to the log-weight of a world, where sign is +1 when its head variable is
// true (or it has no head), n counts satisfied groundings and g is the
// factor's semantics.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ddinc/common.h"

namespace ddinc {

using VarId = std::uint32_t;
using FactorId = std::uint32_t;
using WeightId = std::uint32_t;

enum class Role : std::uint8_t { kQuery, kEvidencePositive, kEvidenceNegative };

inline bool is_evidence(Role r) { return r != Role::kQuery; }

struct Variable {
  Role role = Role::kQuery;
  std::string relation;
  std::vector<std::string> tuple;

  bool operator==(const Variable&) const = default;
};

struct Literal {
  VarId var = 0;
  bool positive = true;

  bool operator==(const Literal&) const = default;
  auto operator<=>(const Literal&) const = default;
};

using Grounding = std::vector<Literal>;

struct Factor {
  std::string rule;
  std::optional<VarId> head;
  std::vector<Grounding> groundings;
  WeightId weight = 0;
  Semantics semantics = Semantics::kLinear;

  bool operator==(const Factor&) const = default;
};

struct WeightParam {
  double value = 0.0;
  bool fixed = true;
  std::string description;

  bool operator==(const WeightParam&) const = default;
};

// One byte per variable, 0 or 1.
using World = std::vector<std::uint8_t>;

class FactorGraph {
 public:
  VarId add_variable(Variable v);
  WeightId add_weight(WeightParam w);
  // Literal and head ids must refer to existing variables and the weight id
  // to an existing weight; throws InputError otherwise.
  FactorId add_factor(Factor f);

  std::size_t num_variables() const { return vars_.size(); }
  std::size_t num_factors() const { return factors_.size(); }
  std::size_t num_weights() const { return weights_.size(); }

  const Variable& variable(VarId v) const { return vars_[v]; }
  const Factor& factor(FactorId f) const { return factors_[f]; }
  const WeightParam& weight(WeightId w) const { return weights_[w]; }

  const std::vector<Variable>& variables() const { return vars_; }
  const std::vector<Factor>& factors() const { return factors_; }
  const std::vector<WeightParam>& weights() const { return weights_; }

  void set_role(VarId v, Role r) { vars_[v].role = r; }
  void set_weight(WeightId w, double value) { weights_[w].value = value; }
  std::vector<double> weight_values() const;

  // Factors that mention v as head or in a literal, ascending, no repeats.
  const std::vector<FactorId>& adjacent(VarId v) const { return adjacency_[v]; }

  std::vector<VarId> query_variables() const;
  std::size_t num_query() const;

  bool operator==(const FactorGraph& o) const {
    return vars_ == o.vars_ && factors_ == o.factors_ && weights_ == o.weights_;
  }

 private:
  std::vector<Variable> vars_;
  std::vector<Factor> factors_;
  std::vector<WeightParam> weights_;
  std::vector<std::vector<FactorId>> adjacency_;
};

double g_eval(Semantics kind, double n);

bool grounding_satisfied(const Grounding& g, const World& world);
int satisfied_count(const Factor& f, const World& world);
int factor_sign(const Factor& f, const World& world);

double factor_weight(const Factor& f, const World& world,
                     std::span<const double> weights);
double factor_weight(const FactorGraph& graph, FactorId f, const World& world);
double world_weight(const FactorGraph& graph, const World& world);
double world_weight(const FactorGraph& graph, const World& world,
                    std::span<const double> weights);

// Evidence at its label, query variables false.
World initial_world(const FactorGraph& graph);
bool respects_evidence(const FactorGraph& graph, const World& world);

inline constexpr std::size_t kEnumerationCap = 20;

// Calls fn(world, log_weight) for every evidence-respecting world, in the
// binary-counter order of the query variables (lowest id = lowest bit).
void for_each_world(const FactorGraph& graph,
                    const std::function<void(const World&, double)>& fn,
                    std::size_t cap = kEnumerationCap);

double log_partition(const FactorGraph& graph,
                     std::size_t cap = kEnumerationCap);

// Exact Pr[v = 1] for every variable. Throws InfeasibleError above `cap`
// query variables.
std::vector<double> enumerate_marginals(const FactorGraph& graph,
                                        std::size_t cap = kEnumerationCap);

// Exact KL(p || q) for two graphs over the same variables and roles.
double exact_kl(const FactorGraph& p, const FactorGraph& q,
                std::size_t cap = kEnumerationCap);

struct VotingResult {
  double probability;         // Pr[q()]
  double log_probability;     // log Pr[q()]
  double log_complement;      // log(1 - Pr[q()])
  double log_weight;          // W = g(up) - g(down)
};

// Two-world closed form: Pr = e^W / (e^-W + e^W).
VotingResult voting_closed_form(double up, double down, Semantics kind);

double log_sum_exp(double a, double b);
double log_sum_exp(std::span<const double> xs);
double sigmoid(double x);
double log_sigmoid(double x);

// --- JSON-lines serialization ---------------------------------------------
//
// Variable ids are 1-based in the file so literals can be written as signed
// ids; factor and weight ids are 0-based.

void write_graph(std::ostream& out, const FactorGraph& graph);
void write_graph_file(const std::string& path, const FactorGraph& graph);
FactorGraph read_graph(std::istream& in);
FactorGraph read_graph_file(const std::string& path);

// FNV-1a 64 of the serialized graph, as 16 hex digits.
std::string fingerprint(const FactorGraph& graph);

}  // namespace ddinc
