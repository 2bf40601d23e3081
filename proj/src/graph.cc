#include "ddinc/graph.h"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ddinc {

VarId FactorGraph::add_variable(Variable v) {
  vars_.push_back(std::move(v));
  adjacency_.emplace_back();
  return static_cast<VarId>(vars_.size() - 1);
}

WeightId FactorGraph::add_weight(WeightParam w) {
  weights_.push_back(std::move(w));
  return static_cast<WeightId>(weights_.size() - 1);
}

FactorId FactorGraph::add_factor(Factor f) {
  auto fid = static_cast<FactorId>(factors_.size());
  if (f.weight >= weights_.size()) {
    throw InputError("factor references unknown weight " +
                     std::to_string(f.weight));
  }
  auto link = [&](VarId v) {
    if (v >= vars_.size()) {
      throw InputError("factor references unknown variable " +
                       std::to_string(v));
    }
    auto& adj = adjacency_[v];
    if (adj.empty() || adj.back() != fid) adj.push_back(fid);
  };
  // Validate before touching adjacency so a failed add leaves no trace.
  for (const auto& g : f.groundings) {
    for (const auto& l : g) {
      if (l.var >= vars_.size()) {
        throw InputError("factor references unknown variable " +
                         std::to_string(l.var));
      }
    }
  }
  if (f.head && *f.head >= vars_.size()) {
    throw InputError("factor head references unknown variable " +
                     std::to_string(*f.head));
  }
  if (f.head) link(*f.head);
  for (const auto& g : f.groundings) {
    for (const auto& l : g) link(l.var);
  }
  factors_.push_back(std::move(f));
  return fid;
}

std::vector<double> FactorGraph::weight_values() const {
  std::vector<double> out;
  out.reserve(weights_.size());
  for (const auto& w : weights_) out.push_back(w.value);
  return out;
}

std::vector<VarId> FactorGraph::query_variables() const {
  std::vector<VarId> out;
  for (VarId v = 0; v < vars_.size(); ++v) {
    if (!is_evidence(vars_[v].role)) out.push_back(v);
  }
  return out;
}

std::size_t FactorGraph::num_query() const {
  return static_cast<std::size_t>(
      std::count_if(vars_.begin(), vars_.end(),
                    [](const Variable& v) { return !is_evidence(v.role); }));
}

double g_eval(Semantics kind, double n) {
  switch (kind) {
    case Semantics::kLinear: return n;
    case Semantics::kRatio: return std::log1p(n);
    case Semantics::kLogical: return n > 0 ? 1.0 : 0.0;
  }
  return 0.0;
}

bool grounding_satisfied(const Grounding& g, const World& world) {
  for (const auto& l : g) {
    if ((world[l.var] != 0) != l.positive) return false;
  }
  return true;
}

int satisfied_count(const Factor& f, const World& world) {
  int n = 0;
  for (const auto& g : f.groundings) n += grounding_satisfied(g, world);
  return n;
}

int factor_sign(const Factor& f, const World& world) {
  if (!f.head) return 1;
  return world[*f.head] ? 1 : -1;
}

double factor_weight(const Factor& f, const World& world,
                     std::span<const double> weights) {
  int n = satisfied_count(f, world);
  if (n == 0) return 0.0;
  return weights[f.weight] * factor_sign(f, world) * g_eval(f.semantics, n);
}

double factor_weight(const FactorGraph& graph, FactorId f,
                     const World& world) {
  const Factor& fac = graph.factor(f);
  int n = satisfied_count(fac, world);
  if (n == 0) return 0.0;
  return graph.weight(fac.weight).value * factor_sign(fac, world) *
         g_eval(fac.semantics, n);
}

double world_weight(const FactorGraph& graph, const World& world) {
  double w = 0.0;
  for (FactorId f = 0; f < graph.num_factors(); ++f) {
    w += factor_weight(graph, f, world);
  }
  return w;
}

double world_weight(const FactorGraph& graph, const World& world,
                    std::span<const double> weights) {
  double w = 0.0;
  for (const auto& f : graph.factors()) w += factor_weight(f, world, weights);
  return w;
}

World initial_world(const FactorGraph& graph) {
  World w(graph.num_variables(), 0);
  for (VarId v = 0; v < graph.num_variables(); ++v) {
    w[v] = graph.variable(v).role == Role::kEvidencePositive;
  }
  return w;
}

bool respects_evidence(const FactorGraph& graph, const World& world) {
  if (world.size() != graph.num_variables()) return false;
  for (VarId v = 0; v < graph.num_variables(); ++v) {
    Role r = graph.variable(v).role;
    if (r == Role::kEvidencePositive && !world[v]) return false;
    if (r == Role::kEvidenceNegative && world[v]) return false;
  }
  return true;
}

void for_each_world(const FactorGraph& graph,
                    const std::function<void(const World&, double)>& fn,
                    std::size_t cap) {
  std::vector<VarId> free = graph.query_variables();
  if (free.size() > cap) {
    throw InfeasibleError("enumeration over " + std::to_string(free.size()) +
                          " free variables exceeds the cap of " +
                          std::to_string(cap));
  }
  World world = initial_world(graph);
  const std::uint64_t total = std::uint64_t{1} << free.size();
  for (std::uint64_t mask = 0; mask < total; ++mask) {
    for (std::size_t i = 0; i < free.size(); ++i) {
      world[free[i]] = (mask >> i) & 1;
    }
    fn(world, world_weight(graph, world));
  }
}

double log_sum_exp(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

double log_sum_exp(std::span<const double> xs) {
  if (xs.empty()) return -std::numeric_limits<double>::infinity();
  double m = *std::max_element(xs.begin(), xs.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

namespace {

std::vector<double> world_log_weights(const FactorGraph& graph,
                                      std::size_t cap) {
  std::vector<double> lw;
  for_each_world(graph, [&](const World&, double w) { lw.push_back(w); },
                 cap);
  return lw;
}

}  // namespace

double log_sigmoid(double x) {
  return x < 0 ? x - std::log1p(std::exp(x)) : -std::log1p(std::exp(-x));
}

double log_partition(const FactorGraph& graph, std::size_t cap) {
  auto lw = world_log_weights(graph, cap);
  return log_sum_exp(lw);
}

std::vector<double> enumerate_marginals(const FactorGraph& graph,
                                        std::size_t cap) {
  auto lw = world_log_weights(graph, cap);
  double log_z = log_sum_exp(lw);
  std::vector<double> marg(graph.num_variables(), 0.0);
  std::size_t idx = 0;
  for_each_world(
      graph,
      [&](const World& world, double) {
        double p = std::exp(lw[idx++] - log_z);
        for (VarId v = 0; v < world.size(); ++v) {
          if (world[v]) marg[v] += p;
        }
      },
      cap);
  // Evidence marginals are exact by construction.
  for (VarId v = 0; v < graph.num_variables(); ++v) {
    Role r = graph.variable(v).role;
    if (r == Role::kEvidencePositive) marg[v] = 1.0;
    if (r == Role::kEvidenceNegative) marg[v] = 0.0;
  }
  return marg;
}

double exact_kl(const FactorGraph& p, const FactorGraph& q, std::size_t cap) {
  if (p.num_variables() != q.num_variables()) {
    throw InputError("KL between graphs with different variable counts");
  }
  for (VarId v = 0; v < p.num_variables(); ++v) {
    if (p.variable(v).role != q.variable(v).role) {
      throw InputError("KL between graphs with different evidence");
    }
  }
  auto lp = world_log_weights(p, cap);
  auto lq = world_log_weights(q, cap);
  double zp = log_sum_exp(lp), zq = log_sum_exp(lq);
  double kl = 0.0;
  for (std::size_t i = 0; i < lp.size(); ++i) {
    double a = lp[i] - zp;
    kl += std::exp(a) * (a - (lq[i] - zq));
  }
  return std::max(kl, 0.0);
}

VotingResult voting_closed_form(double up, double down, Semantics kind) {
  double w = g_eval(kind, up) - g_eval(kind, down);
  // e^W / (e^-W + e^W) = sigmoid(2W)
  return VotingResult{sigmoid(2 * w), log_sigmoid(2 * w), log_sigmoid(-2 * w),
                      w};
}

}  // namespace ddinc
