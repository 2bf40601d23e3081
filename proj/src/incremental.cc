#include "ddinc/incremental.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>

namespace ddinc {

// --- strawman ---------------------------------------------------------------

double WorldTable::probability(const World& w) const {
  std::size_t idx = 0;
  for (std::size_t k = 0; k < free_vars.size(); ++k) {
    if (w[free_vars[k]]) idx |= std::size_t{1} << k;
  }
  return probabilities[idx];
}

WorldTable materialize_strawman(const FactorGraph& graph, std::size_t cap) {
  WorldTable t;
  t.free_vars = graph.query_variables();
  if (t.free_vars.size() > cap) {
    throw InfeasibleError("strawman materialization over " +
                          std::to_string(t.free_vars.size()) +
                          " free variables exceeds the cap of " +
                          std::to_string(cap));
  }
  std::vector<double> logw;
  logw.reserve(std::size_t{1} << t.free_vars.size());
  for_each_world(graph, [&](const World&, double lw) { logw.push_back(lw); },
                 cap);
  double z = log_sum_exp(logw);
  t.probabilities.resize(logw.size());
  for (std::size_t i = 0; i < logw.size(); ++i) {
    t.probabilities[i] = std::exp(logw[i] - z);
  }
  return t;
}

namespace {

// What the delta does to a world of the old graph, and the factors whose
// contribution can differ between the old world and its image.
struct DeltaContext {
  AppliedDelta applied;
  const FactorGraph* before = nullptr;
  std::vector<VarId> old_survivors;  // old id, mapped via applied.var_map
  std::vector<VarId> extension;      // new-graph ids, in sampling order
  // Delta set: old factors paired with their image (kRemoved if removed),
  // then new factors (new-graph ids).
  std::vector<std::pair<FactorId, FactorId>> changed_old;
  std::vector<FactorId> added;
  World base;  // template image: evidence at labels, extension at 0

  const FactorGraph& after() const { return applied.graph; }
  std::size_t delta_set_size() const { return changed_old.size() + added.size(); }

  void image(const World& x, World& y) const {
    y = base;
    const FactorGraph& g = after();
    for (VarId v : old_survivors) {
      VarId a = applied.var_map[v];
      Role r = g.variable(a).role;
      if (r == Role::kQuery) {
        if (!is_evidence(before->variable(v).role)) y[a] = x[v];
      }
    }
  }

  double delta_weight(const World& x, const World& y) const {
    double d = 0;
    for (auto [f, a] : changed_old) {
      if (a != kRemoved) d += factor_weight(after(), a, y);
      d -= factor_weight(*before, f, x);
    }
    for (FactorId a : added) d += factor_weight(after(), a, y);
    return d;
  }
};

DeltaContext make_context(const FactorGraph& before, const UpdateDelta& delta) {
  DeltaContext c;
  c.before = &before;
  c.applied = apply_delta(before, delta);
  const FactorGraph& after = c.applied.graph;

  std::set<FactorId> old_set(delta.removed_factors.begin(),
                             delta.removed_factors.end());
  std::set<VarId> freed;
  for (VarId v = 0; v < before.num_variables(); ++v) {
    VarId a = c.applied.var_map[v];
    if (a == kRemoved) continue;
    c.old_survivors.push_back(v);
    Role was = before.variable(v).role, is = after.variable(a).role;
    if (was != is) {
      for (FactorId f : before.adjacent(v)) old_set.insert(f);
      if (!is_evidence(is)) freed.insert(a);
    }
  }
  if (!delta.weight_changes.empty()) {
    for (FactorId f = 0; f < before.num_factors(); ++f) {
      if (delta.weight_changes.count(before.factor(f).weight)) {
        old_set.insert(f);
      }
    }
  }
  for (FactorId f : old_set) c.changed_old.emplace_back(f, c.applied.factor_map[f]);
  for (std::size_t k = 0; k < delta.new_factors.size(); ++k) {
    c.added.push_back(c.applied.factor_map[delta.base_factors + k]);
  }

  c.extension.assign(freed.begin(), freed.end());
  for (std::size_t k = 0; k < delta.new_vars.size(); ++k) {
    VarId a = c.applied.var_map[delta.base_variables + k];
    if (!is_evidence(after.variable(a).role)) c.extension.push_back(a);
  }
  c.base = initial_world(after);
  return c;
}

std::vector<double> marginals_from_counts(const FactorGraph& g,
                                          const std::vector<double>& ones,
                                          double total) {
  std::vector<double> m(g.num_variables());
  World init = initial_world(g);
  for (VarId v = 0; v < g.num_variables(); ++v) {
    if (is_evidence(g.variable(v).role)) {
      m[v] = init[v];
    } else {
      m[v] = total > 0 ? ones[v] / total : 0.5;
    }
  }
  return m;
}

}  // namespace

std::vector<double> strawman_infer(const WorldTable& table,
                                   const FactorGraph& before,
                                   const UpdateDelta& delta, std::size_t cap) {
  DeltaContext c = make_context(before, delta);
  const FactorGraph& after = c.after();
  if (c.extension.size() + table.free_vars.size() > cap) {
    throw InfeasibleError("strawman update exceeds the enumeration cap");
  }
  const std::size_t ext = c.extension.size();
  World x = initial_world(before), y;

  // Pass 1 finds the largest log-weight, pass 2 accumulates.
  double top = -std::numeric_limits<double>::infinity();
  std::vector<double> ones(after.num_variables(), 0.0);
  double total = 0;
  for (int pass = 0; pass < 2; ++pass) {
    for (std::size_t i = 0; i < table.probabilities.size(); ++i) {
      double p = table.probabilities[i];
      if (p <= 0) continue;
      for (std::size_t k = 0; k < table.free_vars.size(); ++k) {
        x[table.free_vars[k]] = (i >> k) & 1;
      }
      c.image(x, y);
      for (std::size_t e = 0; e < (std::size_t{1} << ext); ++e) {
        for (std::size_t k = 0; k < ext; ++k) y[c.extension[k]] = (e >> k) & 1;
        double lw = std::log(p) + c.delta_weight(x, y);
        if (pass == 0) {
          top = std::max(top, lw);
          continue;
        }
        double w = std::exp(lw - top);
        total += w;
        for (VarId v = 0; v < y.size(); ++v) {
          if (y[v]) ones[v] += w;
        }
      }
    }
  }
  return marginals_from_counts(after, ones, total);
}

// --- sampling ---------------------------------------------------------------

SampleSet materialize_samples(const FactorGraph& graph,
                              const SampleBudget& budget) {
  using Clock = std::chrono::steady_clock;
  const auto start = Clock::now();
  SampleSet out(graph.num_variables());
  const std::size_t limit = budget.seconds ? budget.max_samples : budget.samples;
  if (limit == 0) return out;
  const std::size_t thin = std::max<std::size_t>(budget.thinning, 1);

  Rng rng(budget.seed, 0);
  GibbsChain chain(graph);
  World w = initial_world(graph);
  for (VarId v : graph.query_variables()) w[v] = rng.uniform() < 0.5;
  chain.reset(w);
  for (std::size_t s = 0; s < budget.burn_in; ++s) chain.sweep(rng);

  while (out.size() < limit) {
    if (budget.seconds) {
      double elapsed =
          std::chrono::duration<double>(Clock::now() - start).count();
      if (elapsed >= *budget.seconds) break;
    }
    chain.sweep(rng);
    out.append(chain.world());
    if (out.size() < limit) {
      for (std::size_t s = 1; s < thin; ++s) chain.sweep(rng);
    }
  }
  return out;
}

MhResult mh_infer(const SampleSet& samples, const FactorGraph& before,
                  const UpdateDelta& delta, const MhConfig& config) {
  if (samples.num_vars() != before.num_variables()) {
    throw InputError("sample bundle does not match the graph");
  }
  DeltaContext c = make_context(before, delta);
  const FactorGraph& after = c.after();
  MhResult r;
  r.delta_set_size = c.delta_set_size();
  std::vector<double> ones(after.num_variables(), 0.0);
  if (samples.empty()) {
    r.exhausted = true;
    r.marginals = marginals_from_counts(after, ones, 0);
    return r;
  }

  Rng rng(config.seed, 0);
  // Consecutive stored worlds are correlated Gibbs states; visiting them in
  // random order makes the proposals independent draws from the bundle.
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = order.size() - 1; i > 0; --i) {
    std::swap(order[i], order[rng.below(i + 1)]);
  }
  World x, y;
  // log of (target weight / proposal density) up to a constant.
  auto propose = [&](std::size_t i) {
    samples.load(order[i], x);
    c.image(x, y);
    double log_q = 0;
    for (VarId e : c.extension) {
      double p = gibbs_conditional(after, y, e);
      bool b = rng.uniform() < p;
      y[e] = b;
      log_q += std::log(b ? p : 1 - p);
    }
    ++r.evaluations;
    r.factor_fetches += c.delta_set_size();
    return c.delta_weight(x, y) - log_q;
  };

  World cur;
  double cur_lr = propose(0);
  cur = y;
  std::size_t last = samples.size();
  if (config.max_proposals > 0) {
    last = std::min(last, config.max_proposals + 1);
  }
  std::size_t states = 0;
  auto record = [&] {
    for (VarId v = 0; v < cur.size(); ++v) ones[v] += cur[v];
    ++states;
  };
  record();
  for (std::size_t i = 1; i < last; ++i) {
    double lr = propose(i);
    ++r.proposals;
    double diff = lr - cur_lr;
    if (diff >= 0 || rng.uniform() < std::exp(diff)) {
      ++r.accepted;
      cur.swap(y);
      cur_lr = lr;
    }
    record();
  }
  // No proposals means nothing was rejected.
  r.acceptance_rate =
      r.proposals == 0 ? 1.0 : static_cast<double>(r.accepted) / r.proposals;
  r.exhausted = r.accepted < config.target_accepted;
  r.marginals = marginals_from_counts(after, ones, static_cast<double>(states));
  return r;
}

// --- variational ------------------------------------------------------------

namespace {

// The problem separates over connected components of NZ.
LogdetResult<double> solve_by_component(const CovarianceEstimate& cov,
                                        const LogdetOptions<double>& opt) {
  const Eigen::Index n = cov.M.rows();
  std::vector<int> comp(n, -1);
  int ncomp = 0;
  for (Eigen::Index s = 0; s < n; ++s) {
    if (comp[s] >= 0) continue;
    std::vector<Eigen::Index> stack{s};
    comp[s] = ncomp;
    while (!stack.empty()) {
      Eigen::Index i = stack.back();
      stack.pop_back();
      for (Eigen::Index j = 0; j < n; ++j) {
        if (cov.nz(i, j) && comp[j] < 0) {
          comp[j] = ncomp;
          stack.push_back(j);
        }
      }
    }
    ++ncomp;
  }

  LogdetResult<double> total;
  total.X = Eigen::MatrixXd::Zero(n, n);
  total.converged = true;
  double pg2 = 0;
  for (int k = 0; k < ncomp; ++k) {
    std::vector<Eigen::Index> idx;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (comp[i] == k) idx.push_back(i);
    }
    const Eigen::Index m = static_cast<Eigen::Index>(idx.size());
    Eigen::MatrixXd Mk(m, m);
    PatternMat nzk(m, m);
    for (Eigen::Index a = 0; a < m; ++a) {
      for (Eigen::Index b = 0; b < m; ++b) {
        Mk(a, b) = cov.M(idx[a], idx[b]);
        nzk(a, b) = cov.nz(idx[a], idx[b]);
      }
    }
    LogdetResult<double> rk = solve_logdet<double>(Mk, nzk, opt);
    for (Eigen::Index a = 0; a < m; ++a) {
      for (Eigen::Index b = 0; b < m; ++b) {
        total.X(idx[a], idx[b]) = rk.X(a, b);
      }
    }
    total.objective += rk.objective;
    total.duality_gap += rk.duality_gap;
    total.iterations = std::max(total.iterations, rk.iterations);
    pg2 += rk.gradient_norm * rk.gradient_norm;
  }
  total.gradient_norm = std::sqrt(pg2);
  return total;
}

}  // namespace

VariationalResult materialize_variational(const FactorGraph& graph,
                                          const SampleSet& samples,
                                          const VariationalConfig& config) {
  if (!(config.lambda > 0)) throw InputError("lambda must be positive");
  VariationalResult r;
  r.covariance = estimate_covariance(graph, samples);
  LogdetOptions<double> opt = config.solver;
  opt.lambda = config.lambda;
  r.solution = solve_by_component(r.covariance, opt);
  r.approx = build_approx_graph(graph, r.covariance, r.solution.X,
                                config.prune, &r.pair_factors);
  r.unary_factors = r.approx.num_factors() - r.pair_factors;
  return r;
}

VariationalResult materialize_variational(const FactorGraph& graph,
                                          const VariationalConfig& config) {
  if (config.sampling.samples < 2) {
    throw InputError("variational materialization needs N >= 2");
  }
  SampleBudget b = config.sampling;
  b.seconds.reset();
  return materialize_variational(graph, materialize_samples(graph, b), config);
}

KlEstimate estimate_kl(const FactorGraph& p, const FactorGraph& q,
                       const SampleSet& samples, std::size_t cap) {
  KlEstimate k;
  if (p.num_query() <= cap) {
    k.value = exact_kl(p, q, cap);
    k.exact = true;
    return k;
  }
  if (samples.size() < 2) throw InputError("KL estimate needs samples");
  // KL = E_p[W_p - W_q] + log E_p[exp(W_q - W_p)].
  std::vector<double> a(samples.size());
  World w;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    samples.load(i, w);
    a[i] = world_weight(p, w) - world_weight(q, w);
  }
  const double n = static_cast<double>(a.size());
  double mean = std::accumulate(a.begin(), a.end(), 0.0) / n;
  std::vector<double> neg(a.size());
  double var = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    neg[i] = -a[i];
    var += (a[i] - mean) * (a[i] - mean);
  }
  var /= n - 1;
  k.value = std::max(0.0, mean + log_sum_exp(neg) - std::log(n));
  k.standard_error = std::sqrt(var / n);
  return k;
}

LambdaSelection select_lambda(const FactorGraph& graph, double kl_threshold,
                              const VariationalConfig& config,
                              std::size_t steps) {
  if (config.sampling.samples < 2) {
    throw InputError("variational materialization needs N >= 2");
  }
  SampleBudget b = config.sampling;
  b.seconds.reset();
  return select_lambda(graph, kl_threshold, materialize_samples(graph, b),
                       config, steps);
}

LambdaSelection select_lambda(const FactorGraph& graph, double kl_threshold,
                              const SampleSet& samples,
                              const VariationalConfig& config,
                              std::size_t steps) {
  if (!(kl_threshold > 0)) throw InputError("KL threshold must be positive");
  LambdaSelection sel;
  double lambda = 0.001;
  for (std::size_t s = 0; s < steps; ++s, lambda *= 10) {
    VariationalConfig c = config;
    c.lambda = lambda;
    VariationalResult r = materialize_variational(graph, samples, c);
    KlEstimate kl = estimate_kl(graph, r.approx, samples);
    sel.probes.push_back({lambda, kl, r.approx.num_factors()});
    if (kl.value > kl_threshold) break;
    sel.lambda = lambda;
    sel.result = std::move(r);
  }
  if (sel.lambda == 0) {
    throw InfeasibleError(
        "the approximation exceeds the KL threshold at every lambda; rerun "
        "inference on the full graph");
  }
  return sel;
}

SplicedGraph splice_delta(const FactorGraph& approx, const FactorGraph& before,
                          const UpdateDelta& delta) {
  if (approx.num_variables() != before.num_variables()) {
    throw InputError("approximate graph does not match the original graph");
  }
  AppliedDelta ad = apply_delta(before, delta);
  const FactorGraph& after = ad.graph;
  SplicedGraph out;
  FactorGraph& g = out.graph;
  for (const Variable& v : after.variables()) g.add_variable(v);

  auto remap = [&](Factor f) -> std::optional<Factor> {
    if (f.head) {
      if (ad.var_map[*f.head] == kRemoved) return std::nullopt;
      f.head = ad.var_map[*f.head];
    }
    for (auto& gr : f.groundings) {
      for (auto& l : gr) {
        if (ad.var_map[l.var] == kRemoved) return std::nullopt;
        l.var = ad.var_map[l.var];
      }
    }
    return f;
  };

  for (const Factor& f : approx.factors()) {
    auto m = remap(f);
    if (!m) continue;
    m->weight = g.add_weight(approx.weight(f.weight));
    g.add_factor(std::move(*m));
  }

  std::map<WeightId, WeightId> tied;  // after weight -> spliced weight
  for (std::size_t k = 0; k < delta.new_factors.size(); ++k) {
    Factor f = after.factor(ad.factor_map[delta.base_factors + k]);
    auto it = tied.find(f.weight);
    if (it == tied.end()) {
      it = tied.emplace(f.weight, g.add_weight(after.weight(f.weight))).first;
    }
    f.weight = it->second;
    g.add_factor(std::move(f));
  }

  auto add_copy = [&](FactorId old, double value, const std::string& tag) {
    auto m = remap(before.factor(old));
    if (!m) return;
    m->weight = g.add_weight(
        {value, true, tag + ":" + before.weight(before.factor(old).weight).description});
    g.add_factor(std::move(*m));
    ++out.correction_factors;
  };
  std::set<FactorId> removed(delta.removed_factors.begin(),
                             delta.removed_factors.end());
  for (FactorId f : removed) {
    add_copy(f, -before.weight(before.factor(f).weight).value, "cancel");
  }
  if (!delta.weight_changes.empty()) {
    for (FactorId f = 0; f < before.num_factors(); ++f) {
      if (removed.count(f)) continue;
      auto it = delta.weight_changes.find(before.factor(f).weight);
      if (it == delta.weight_changes.end()) continue;
      add_copy(f, it->second.second - it->second.first, "reweight");
    }
  }
  return out;
}

VariationalInference variational_infer(const FactorGraph& approx,
                                       const FactorGraph& before,
                                       const UpdateDelta& delta,
                                       const GibbsConfig& gibbs) {
  SplicedGraph s = splice_delta(approx, before, delta);
  GibbsResult g = run_gibbs(s.graph, gibbs);
  VariationalInference r;
  r.marginals = std::move(g.marginals);
  r.factor_fetches = g.factor_fetches;
  r.factors = s.graph.num_factors();
  return r;
}

void check_fingerprint(const MaterializationBundle& b,
                       const FactorGraph& graph) {
  std::string fp = fingerprint(graph);
  if (b.meta.fingerprint != fp) {
    throw FingerprintError("bundle fingerprint " + b.meta.fingerprint +
                           " does not match graph fingerprint " + fp);
  }
}

}  // namespace ddinc
