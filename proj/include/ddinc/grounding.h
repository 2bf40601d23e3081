#pragma once

// Rule evaluation into factor graphs, and DRed-style maintenance of the
// grounded graph under data and rule changes.
//
// Evaluation uses set semantics on body presence: a binding of the body
// variables is a grounding when every body tuple is present. The derivation
// count of a tuple is its stored count plus the number of bindings of
// candidate, supervision and inference rules that produce it. Tuples of
// relations of kind Evidence are observed: they restrict bindings but never
// become variables or literals.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ddinc/graph.h"
#include "ddinc/relstore.h"
#include "ddinc/rules.h"

namespace ddinc {

// Changes between two grounded graphs in a unified id space: ids below the
// base sizes are ids of the old graph, new items are numbered from the base
// size upward in the order listed.
struct UpdateDelta {
  std::size_t base_variables = 0;
  std::size_t base_factors = 0;
  std::size_t base_weights = 0;
  std::string base_fingerprint;

  std::vector<Variable> new_vars;
  std::vector<VarId> removed_vars;
  std::vector<std::pair<VarId, Role>> role_changes;  // surviving old vars
  std::vector<Factor> new_factors;                  // unified var/weight ids
  std::vector<FactorId> removed_factors;
  std::vector<WeightParam> new_weights;
  std::vector<WeightId> removed_weights;
  std::map<WeightId, std::pair<double, double>> weight_changes;  // old, new

  bool empty() const {
    return new_vars.empty() && removed_vars.empty() && role_changes.empty() &&
           new_factors.empty() && removed_factors.empty() &&
           new_weights.empty() && removed_weights.empty() &&
           weight_changes.empty();
  }
  bool operator==(const UpdateDelta&) const = default;
};

inline constexpr std::uint32_t kRemoved = 0xffffffffu;

struct AppliedDelta {
  FactorGraph graph;
  // Unified id -> id in `graph`, kRemoved for removed items.
  std::vector<VarId> var_map;
  std::vector<FactorId> factor_map;
  std::vector<WeightId> weight_map;
};

// Survivors keep their relative order; new items follow in delta order.
AppliedDelta apply_delta(const FactorGraph& before, const UpdateDelta& delta);

void write_delta(std::ostream& out, const UpdateDelta& delta);
UpdateDelta read_delta(std::istream& in);

// Sorts variables, weights and factors into a canonical order so that two
// groundings of the same program and data compare equal with operator==.
FactorGraph canonicalize(const FactorGraph& graph);

// ---------------------------------------------------------------------------

enum class AtomState : std::uint8_t { kOld, kNew, kDelta };

struct DeltaRule {
  std::string rule;
  std::size_t delta_atom = 0;
  std::vector<AtomState> states;  // one per body atom
};

// For a body a_1..a_k the k rules (a_1..a_{i-1} old, a_i delta, a_{i+1}..a_k
// new), whose signed union is exactly the change in bindings.
std::vector<DeltaRule> delta_rules(const RuleProgram& program);
std::vector<DeltaRule> delta_rules(const Rule& rule);

// Differences between two rule programs, by rule id.
struct ProgramDelta {
  std::vector<std::string> added_rules;
  std::vector<std::string> removed_rules;
  std::vector<std::string> modified_rules;   // structure or semantics
  std::vector<std::string> reweighted_rules; // weight value only
  std::vector<std::string> interest_changed;  // @interest flag only
  std::vector<std::string> added_relations;

  bool empty() const {
    return added_rules.empty() && removed_rules.empty() &&
           modified_rules.empty() && reweighted_rules.empty() &&
           interest_changed.empty() && added_relations.empty();
  }
};

ProgramDelta diff_programs(const RuleProgram& before, const RuleProgram& after);

class Grounder {
 public:
  explicit Grounder(RuleProgram program);

  // Grounds from scratch; resets all incremental state.
  const FactorGraph& ground(Store& store);

  // `deltas` must already be applied to `store`. Evidence label changes are
  // read from the store's label log. With `next_program`, rules are added,
  // removed or changed as part of the same update.
  UpdateDelta incremental_ground(Store& store,
                                 std::span<const DeltaRelation> deltas,
                                 const RuleProgram* next_program = nullptr);

  const FactorGraph& graph() const { return graph_; }
  const RuleProgram& program() const { return program_; }

  // Candidate tuples examined by joins since the last reset.
  std::uint64_t tuple_scans() const { return tuple_scans_; }
  void reset_tuple_scans() { tuple_scans_ = 0; }

 private:
  struct VarKey {
    std::string relation;
    Tuple tuple;
    auto operator<=>(const VarKey&) const = default;
  };
  struct FactorKey {
    std::string rule;
    Tuple key;
    auto operator<=>(const FactorKey&) const = default;
  };
  using WeightKey = std::pair<std::string, Tuple>;
  struct Presence {
    std::set<Tuple> added;
    std::set<Tuple> removed;
    bool empty() const { return added.empty() && removed.empty(); }
  };
  using Binding = Tuple;
  using BaseChanges = std::map<std::string, std::map<Tuple, std::int64_t>>;

  struct Compiled;

  UpdateDelta update(Store& store, const RuleProgram& next, BaseChanges base);
  Compiled compile(const Rule& rule);

  // Enumerates bindings of the body with one state per atom, calling
  // fn(binding, sign).
  template <typename Fn>
  void join(const Compiled& c, const std::vector<AtomState>& states, Fn&& fn);

  Tuple head_tuple(const Compiled& c, const Binding& b) const;
  Tuple group_key(const Compiled& c, const Binding& b) const;
  WeightKey weight_key(const Compiled& c, const Tuple& group) const;
  WeightParam weight_param(const Compiled& c, const Tuple& group) const;
  bool match_head(const Compiled& c, const Tuple& t, Binding* out) const;
  Role role_of(const std::string& relation, const Tuple& t) const;

  RuleProgram program_;
  bool grounded_ = false;
  Store* store_ = nullptr;

  std::map<std::string, Relation> views_;
  std::map<std::string, Presence> presence_;
  std::set<std::string> variable_relations_;
  std::set<std::string> evidence_relations_;
  // rule id -> group key -> bindings. The group key is the factor key for
  // weighted rules and the head tuple otherwise.
  std::map<std::string, std::map<Tuple, std::set<Binding>>> bindings_;

  FactorGraph graph_;
  std::map<VarKey, VarId> var_ids_;
  std::map<FactorKey, FactorId> factor_ids_;
  std::vector<WeightKey> weight_keys_;  // by weight id
  std::map<WeightKey, WeightId> weight_ids_;
  std::vector<std::size_t> weight_refs_;
  std::size_t label_log_pos_ = 0;
  std::uint64_t tuple_scans_ = 0;
};

// One-shot helpers.
FactorGraph ground(const RuleProgram& program, Store& store);

}  // namespace ddinc
