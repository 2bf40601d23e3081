#pragma once

// Rule-based choice of materialization strategy, and decomposition of a
// graph into independently materializable groups around active variables.

#include <iosfwd>
#include <set>
#include <string_view>
#include <vector>

#include "ddinc/graph.h"
#include "ddinc/grounding.h"
#include "ddinc/rules.h"

namespace ddinc {

enum class UpdateClass : std::uint8_t {
  kAnalysisOnly,
  kEvidenceChange,
  kNewFeatures,
  kStructureChange,
  kSampleExhausted,
};

enum class Strategy : std::uint8_t { kSampling, kVariational, kRerun };

std::string_view to_string(UpdateClass c);
std::string_view to_string(Strategy s);

// AnalysisOnly: the graph does not change. EvidenceChange: only roles
// change. NewFeatures: factors, weights and variables are only added and no
// existing factor, weight or role changes. StructureChange: anything else.
UpdateClass classify_update(const ProgramDelta& program_delta,
                            const UpdateDelta& update_delta);

struct BundleState {
  bool exists = false;
  bool has_samples = false;
  bool has_approx = false;
};

// Total over all inputs. When the preferred materialization is missing from
// the bundle the other one is used, and Rerun when neither is available.
Strategy choose_strategy(UpdateClass c, const BundleState& bundle);

struct DecompositionGroup {
  std::vector<VarId> inactive;  // ascending
  std::vector<VarId> frontier;  // ascending
};

struct DecompositionPlan {
  std::vector<DecompositionGroup> groups;
};

// Variables of relations that the @interest rules can change: their heads
// and everything derived from them.
std::set<VarId> active_variables(const FactorGraph& graph,
                                 const RuleProgram& program);

DecompositionPlan decompose(const FactorGraph& graph,
                            const std::set<VarId>& active);

// Removing the frontier separates each group's inactive set from every
// other inactive variable.
bool check_separation(const FactorGraph& graph, const std::set<VarId>& active,
                      const DecompositionPlan& plan);
// No two remaining groups have nested frontiers, and the inactive sets
// partition the inactive variables.
bool check_merged(const FactorGraph& graph, const std::set<VarId>& active,
                  const DecompositionPlan& plan);

// JSON array of {"inactive": [...], "frontier": [...]} with 1-based ids.
void write_plan(std::ostream& out, const DecompositionPlan& plan);

struct SharedEstimate {
  VarId var;
  std::vector<double> estimates;  // one per owning group, in group order
  bool disagree = false;          // spread above the tolerance
};

// Combines per-group marginals (indexed by variable id, one vector per
// group): a variable owned by one group takes that estimate; a frontier
// variable shared by several groups takes their mean and is reported.
std::vector<double> reconcile(const DecompositionPlan& plan,
                              const std::vector<std::vector<double>>& marginals,
                              std::vector<SharedEstimate>* shared,
                              double tolerance = 0.05);

}  // namespace ddinc
