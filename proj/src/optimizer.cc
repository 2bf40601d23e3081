#include "ddinc/optimizer.h"

#include <algorithm>
#include <json.hpp>
#include <map>
#include <ostream>

namespace ddinc {

std::string_view to_string(UpdateClass c) {
  switch (c) {
    case UpdateClass::kAnalysisOnly: return "analysis_only";
    case UpdateClass::kEvidenceChange: return "evidence_change";
    case UpdateClass::kNewFeatures: return "new_features";
    case UpdateClass::kStructureChange: return "structure_change";
    case UpdateClass::kSampleExhausted: return "sample_exhausted";
  }
  return "structure_change";
}

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::kSampling: return "sampling";
    case Strategy::kVariational: return "variational";
    case Strategy::kRerun: return "rerun";
  }
  return "rerun";
}

UpdateClass classify_update(const ProgramDelta& pd, const UpdateDelta& d) {
  const bool structure_same = d.new_vars.empty() && d.removed_vars.empty() &&
                              d.new_factors.empty() &&
                              d.removed_factors.empty() &&
                              d.new_weights.empty() &&
                              d.removed_weights.empty();
  if (structure_same && d.weight_changes.empty()) {
    if (d.role_changes.empty()) return UpdateClass::kAnalysisOnly;
    return UpdateClass::kEvidenceChange;
  }
  // New variables are fine as long as every existing factor is untouched.
  const bool additive = d.removed_vars.empty() && d.removed_factors.empty() &&
                        d.removed_weights.empty() && d.role_changes.empty() &&
                        d.weight_changes.empty() && !d.new_factors.empty() &&
                        pd.removed_rules.empty() && pd.modified_rules.empty() &&
                        pd.reweighted_rules.empty();
  if (additive) return UpdateClass::kNewFeatures;
  return UpdateClass::kStructureChange;
}

Strategy choose_strategy(UpdateClass c, const BundleState& b) {
  if (!b.exists) return Strategy::kRerun;
  Strategy want;
  switch (c) {
    case UpdateClass::kAnalysisOnly:
    case UpdateClass::kNewFeatures:
      want = Strategy::kSampling;
      break;
    case UpdateClass::kEvidenceChange:
    case UpdateClass::kSampleExhausted:
      want = Strategy::kVariational;
      break;
    default:
      return Strategy::kRerun;
  }
  if (want == Strategy::kSampling && !b.has_samples) {
    // An exhausted run never falls back to sampling.
    return b.has_approx ? Strategy::kVariational : Strategy::kRerun;
  }
  if (want == Strategy::kVariational && !b.has_approx) {
    return b.has_samples && c != UpdateClass::kSampleExhausted
               ? Strategy::kSampling
               : Strategy::kRerun;
  }
  return want;
}

namespace {

// Variable neighbourhoods through shared factors.
std::vector<std::vector<VarId>> neighbours(const FactorGraph& g) {
  std::vector<std::vector<VarId>> nb(g.num_variables());
  for (const Factor& f : g.factors()) {
    std::vector<VarId> vs;
    if (f.head) vs.push_back(*f.head);
    for (const auto& gr : f.groundings) {
      for (const auto& l : gr) vs.push_back(l.var);
    }
    std::sort(vs.begin(), vs.end());
    vs.erase(std::unique(vs.begin(), vs.end()), vs.end());
    for (VarId a : vs) {
      for (VarId b : vs) {
        if (a != b) nb[a].push_back(b);
      }
    }
  }
  for (auto& v : nb) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  }
  return nb;
}

bool subset(const std::vector<VarId>& a, const std::vector<VarId>& b) {
  return std::includes(b.begin(), b.end(), a.begin(), a.end());
}

std::vector<VarId> merge_sorted(const std::vector<VarId>& a,
                                const std::vector<VarId>& b) {
  std::vector<VarId> out;
  std::set_union(a.begin(), a.end(), b.begin(), b.end(),
                 std::back_inserter(out));
  return out;
}

}  // namespace

std::set<VarId> active_variables(const FactorGraph& graph,
                                 const RuleProgram& program) {
  std::set<std::string> rels;
  for (const Rule& r : program.rules) {
    if (r.interest) rels.insert(r.head.predicate);
  }
  bool grew = true;
  while (grew) {
    grew = false;
    for (const Rule& r : program.rules) {
      if (rels.count(r.head.predicate)) continue;
      for (const Atom& a : r.body) {
        if (rels.count(a.predicate)) {
          rels.insert(r.head.predicate);
          grew = true;
          break;
        }
      }
    }
  }
  std::set<VarId> out;
  for (VarId v = 0; v < graph.num_variables(); ++v) {
    if (rels.count(graph.variable(v).relation)) out.insert(v);
  }
  return out;
}

DecompositionPlan decompose(const FactorGraph& graph,
                            const std::set<VarId>& active) {
  const auto nb = neighbours(graph);
  std::vector<int> comp(graph.num_variables(), -1);
  struct Work {
    std::size_t id;
    DecompositionGroup g;
  };
  std::vector<Work> groups;
  for (VarId s = 0; s < graph.num_variables(); ++s) {
    if (active.count(s) || comp[s] >= 0) continue;
    const int c = static_cast<int>(groups.size());
    std::set<VarId> members, frontier;
    std::vector<VarId> stack{s};
    comp[s] = c;
    while (!stack.empty()) {
      VarId v = stack.back();
      stack.pop_back();
      members.insert(v);
      for (VarId u : nb[v]) {
        if (active.count(u)) {
          frontier.insert(u);
        } else if (comp[u] < 0) {
          comp[u] = c;
          stack.push_back(u);
        }
      }
    }
    groups.push_back({groups.size(),
                      {std::vector<VarId>(members.begin(), members.end()),
                       std::vector<VarId>(frontier.begin(), frontier.end())}});
  }

  // Merge while some frontier contains another, scanning in ascending
  // (frontier size, id) order.
  while (true) {
    std::sort(groups.begin(), groups.end(), [](const Work& a, const Work& b) {
      if (a.g.frontier.size() != b.g.frontier.size()) {
        return a.g.frontier.size() < b.g.frontier.size();
      }
      return a.id < b.id;
    });
    bool merged = false;
    for (std::size_t j = 0; j < groups.size() && !merged; ++j) {
      for (std::size_t k = j + 1; k < groups.size(); ++k) {
        // Sorted by size, so only j's frontier can be inside k's.
        if (!subset(groups[j].g.frontier, groups[k].g.frontier)) continue;
        Work m{std::min(groups[j].id, groups[k].id),
               {merge_sorted(groups[j].g.inactive, groups[k].g.inactive),
                groups[k].g.frontier}};
        groups.erase(groups.begin() + k);
        groups.erase(groups.begin() + j);
        groups.push_back(std::move(m));
        merged = true;
        break;
      }
    }
    if (!merged) break;
  }
  std::sort(groups.begin(), groups.end(),
            [](const Work& a, const Work& b) { return a.id < b.id; });
  DecompositionPlan plan;
  for (auto& w : groups) plan.groups.push_back(std::move(w.g));
  return plan;
}

bool check_separation(const FactorGraph& graph, const std::set<VarId>& active,
                      const DecompositionPlan& plan) {
  const auto nb = neighbours(graph);
  for (const auto& g : plan.groups) {
    std::set<VarId> blocked(g.frontier.begin(), g.frontier.end());
    std::set<VarId> own(g.inactive.begin(), g.inactive.end());
    std::vector<char> seen(graph.num_variables(), 0);
    std::vector<VarId> stack(g.inactive.begin(), g.inactive.end());
    for (VarId v : stack) seen[v] = 1;
    while (!stack.empty()) {
      VarId v = stack.back();
      stack.pop_back();
      if (!active.count(v) && !own.count(v)) return false;
      for (VarId u : nb[v]) {
        if (seen[u] || blocked.count(u)) continue;
        seen[u] = 1;
        stack.push_back(u);
      }
    }
  }
  return true;
}

bool check_merged(const FactorGraph& graph, const std::set<VarId>& active,
                  const DecompositionPlan& plan) {
  std::vector<int> owner(graph.num_variables(), 0);
  for (const auto& g : plan.groups) {
    for (VarId v : g.inactive) {
      if (active.count(v)) return false;
      ++owner[v];
    }
  }
  for (VarId v = 0; v < graph.num_variables(); ++v) {
    if (owner[v] != (active.count(v) ? 0 : 1)) return false;
  }
  for (std::size_t j = 0; j < plan.groups.size(); ++j) {
    for (std::size_t k = 0; k < plan.groups.size(); ++k) {
      if (j != k && subset(plan.groups[j].frontier, plan.groups[k].frontier)) {
        return false;
      }
    }
  }
  return true;
}

void write_plan(std::ostream& out, const DecompositionPlan& plan) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& g : plan.groups) {
    nlohmann::json in = nlohmann::json::array(), fr = nlohmann::json::array();
    for (VarId v : g.inactive) in.push_back(v + 1);
    for (VarId v : g.frontier) fr.push_back(v + 1);
    j.push_back({{"inactive", in}, {"frontier", fr}});
  }
  out << j.dump() << "\n";
}

std::vector<double> reconcile(const DecompositionPlan& plan,
                              const std::vector<std::vector<double>>& marginals,
                              std::vector<SharedEstimate>* shared,
                              double tolerance) {
  if (marginals.size() != plan.groups.size()) {
    throw InputError("one marginal vector per group is required");
  }
  std::size_t n = 0;
  for (const auto& m : marginals) n = std::max(n, m.size());
  std::vector<double> out(n, 0.5);
  std::map<VarId, std::vector<double>> frontier_est;
  for (std::size_t k = 0; k < plan.groups.size(); ++k) {
    for (VarId v : plan.groups[k].inactive) out[v] = marginals[k][v];
    for (VarId v : plan.groups[k].frontier) {
      frontier_est[v].push_back(marginals[k][v]);
    }
  }
  for (auto& [v, est] : frontier_est) {
    double sum = 0;
    for (double e : est) sum += e;
    out[v] = sum / est.size();
    if (est.size() > 1 && shared) {
      auto [lo, hi] = std::minmax_element(est.begin(), est.end());
      shared->push_back({v, est, *hi - *lo > tolerance});
    }
  }
  return out;
}

}  // namespace ddinc
