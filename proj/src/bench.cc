#include "ddinc/bench.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ostream>
#include <set>

#include "ddinc/incremental.h"
#include "ddinc/inference.h"

namespace ddinc {

FactorGraph voting_graph(std::size_t up, std::size_t down, double weight,
                         Semantics semantics) {
  FactorGraph g;
  VarId q = g.add_variable({Role::kQuery, "q", {}});
  std::vector<Grounding> ups, downs;
  for (std::size_t i = 0; i < up; ++i) {
    VarId v = g.add_variable({Role::kQuery, "up", {std::to_string(i + 1)}});
    ups.push_back({Literal{v, true}});
  }
  for (std::size_t i = 0; i < down; ++i) {
    VarId v = g.add_variable({Role::kQuery, "down", {std::to_string(i + 1)}});
    downs.push_back({Literal{v, true}});
  }
  WeightId wu = g.add_weight({weight, true, "up"});
  WeightId wd = g.add_weight({-weight, true, "down"});
  if (!ups.empty()) g.add_factor({"up", q, ups, wu, semantics});
  if (!downs.empty()) g.add_factor({"down", q, downs, wd, semantics});
  return g;
}

std::vector<SemanticsRow> bench_semantics(const SemanticsBenchConfig& cfg) {
  std::vector<SemanticsRow> rows;
  for (std::size_t n : cfg.sizes) {
    for (Semantics s :
         {Semantics::kLinear, Semantics::kRatio, Semantics::kLogical}) {
      FactorGraph g = voting_graph(n / 2, n - n / 2, cfg.weight, s);
      SemanticsRow row;
      row.n = n;
      row.semantics = s;
      row.exact = enumerate_marginals(g)[0];
      std::vector<double> sweeps;
      for (std::size_t k = 0; k < cfg.seeds; ++k) {
        auto r = sweeps_to_epsilon(g, 0, row.exact, cfg.epsilon,
                                   cfg.max_sweeps, cfg.seed + k, cfg.window);
        if (r) {
          sweeps.push_back(static_cast<double>(*r));
        } else {
          sweeps.push_back(static_cast<double>(cfg.max_sweeps + 1));
          ++row.censored;
        }
      }
      std::sort(sweeps.begin(), sweeps.end());
      const std::size_t m = sweeps.size();
      if (m > 0) {
        row.median_sweeps = m % 2 ? sweeps[m / 2]
                                  : 0.5 * (sweeps[m / 2 - 1] + sweeps[m / 2]);
      }
      rows.push_back(row);
    }
  }
  return rows;
}

void write_semantics_csv(std::ostream& out,
                         const std::vector<SemanticsRow>& rows) {
  out << "n,semantics,exact,median_sweeps,censored\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.6f,%.1f", r.exact, r.median_sweeps);
    out << r.n << ',' << to_string(r.semantics) << ',' << buf << ','
        << r.censored << '\n';
  }
}

FactorGraph synthetic_pairwise(const PairwiseSpec& spec) {
  FactorGraph g;
  Rng rng(spec.seed, 0);
  for (std::size_t i = 0; i < spec.vars; ++i) {
    g.add_variable({Role::kQuery, "x", {std::to_string(i + 1)}});
  }
  if (spec.vars < 2) return g;
  const std::size_t nf = std::max<std::size_t>(
      spec.vars - 1,
      static_cast<std::size_t>(std::llround(spec.factors_per_var * spec.vars)));
  std::set<std::pair<VarId, VarId>> used;
  std::vector<std::pair<VarId, VarId>> pairs;
  for (std::size_t i = 1; i < spec.vars; ++i) {
    VarId a = static_cast<VarId>(i), b = static_cast<VarId>(rng.below(i));
    used.insert({std::min(a, b), std::max(a, b)});
    pairs.push_back({a, b});
  }
  const std::size_t max_pairs = spec.vars * (spec.vars - 1) / 2;
  while (pairs.size() < nf && used.size() < max_pairs) {
    VarId a = static_cast<VarId>(rng.below(spec.vars));
    VarId b = static_cast<VarId>(rng.below(spec.vars));
    if (a == b || !used.insert({std::min(a, b), std::max(a, b)}).second) continue;
    pairs.push_back({a, b});
  }
  // Zeroed factors are drawn after the weights so sparsity does not change
  // the surviving weights.
  std::vector<double> w(pairs.size());
  for (double& x : w) x = rng.uniform(spec.weight_lo, spec.weight_hi);
  std::vector<std::size_t> order(pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[rng.below(i)]);
  }
  const std::size_t keep = static_cast<std::size_t>(
      std::llround(std::clamp(spec.sparsity, 0.0, 1.0) * pairs.size()));
  for (std::size_t i = keep; i < order.size(); ++i) w[order[i]] = 0.0;
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    auto [a, b] = pairs[k];
    WeightId wid = g.add_weight({w[k], true, "pair" + std::to_string(k + 1)});
    g.add_factor({"pair", a, {{Literal{b, true}}}, wid, Semantics::kLinear});
  }
  return g;
}

UpdateDelta perturb_weights(const FactorGraph& graph, double fraction,
                            double magnitude, std::uint64_t seed) {
  UpdateDelta d;
  d.base_variables = graph.num_variables();
  d.base_factors = graph.num_factors();
  d.base_weights = graph.num_weights();
  d.base_fingerprint = fingerprint(graph);
  if (magnitude == 0 || fraction <= 0) return d;
  Rng rng(seed, 7);
  for (FactorId f = 0; f < graph.num_factors(); ++f) {
    bool pick = rng.uniform() < fraction;
    double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
    if (!pick) continue;
    WeightId w = graph.factor(f).weight;
    double old = graph.weight(w).value;
    auto it = d.weight_changes.find(w);
    double base = it == d.weight_changes.end() ? old : it->second.second;
    d.weight_changes[w] = {old, base + sign * magnitude};
  }
  return d;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) {
  return std::chrono::duration<double>(Clock::now() - t).count();
}

double max_error(const std::vector<double>& a, const std::vector<double>& b) {
  double e = 0;
  for (std::size_t i = 0; i < a.size(); ++i) e = std::max(e, std::abs(a[i] - b[i]));
  return e;
}

struct Cell {
  std::string axis;
  double value;
  FactorGraph graph;
  UpdateDelta delta;
  bool strawman = false;
  bool variational = true;
};

void run_cell(const Cell& cell, const TradeoffConfig& cfg,
              std::vector<TradeoffRow>& rows) {
  const FactorGraph after = apply_delta(cell.graph, cell.delta).graph;
  GibbsConfig gc;
  gc.sweeps = cfg.sweeps + cfg.burn_in;
  gc.burn_in = cfg.burn_in;
  gc.seed = cfg.seed;
  gc.threads = 1;

  std::vector<double> reference;
  if (after.num_query() <= kEnumerationCap) {
    reference = enumerate_marginals(after);
  } else {
    GibbsConfig ref = gc;
    ref.sweeps = 10 * cfg.sweeps + cfg.burn_in;
    ref.seed = cfg.seed + 1000003;
    reference = run_gibbs(after, ref).marginals;
  }
  auto row = [&](const std::string& strategy) {
    TradeoffRow r;
    r.axis = cell.axis;
    r.value = cell.value;
    r.strategy = strategy;
    return r;
  };

  {
    TradeoffRow r = row("rerun");
    auto t = Clock::now();
    GibbsResult g = run_gibbs(after, gc);
    r.inference_seconds = seconds_since(t);
    r.factors = after.num_factors();
    r.factor_fetches = g.factor_fetches;
    r.marginal_error = max_error(g.marginals, reference);
    rows.push_back(r);
  }

  if (cell.strawman) {
    TradeoffRow r = row("strawman");
    try {
      auto t = Clock::now();
      WorldTable table = materialize_strawman(cell.graph);
      r.materialize_seconds = seconds_since(t);
      t = Clock::now();
      auto m = strawman_infer(table, cell.graph, cell.delta);
      r.inference_seconds = seconds_since(t);
      r.factors = after.num_factors();
      r.marginal_error = max_error(m, reference);
    } catch (const InfeasibleError& e) {
      r.feasible = false;
      r.note = e.what();
    }
    rows.push_back(r);
  }

  SampleBudget budget;
  budget.samples = cfg.samples;
  budget.burn_in = cfg.burn_in;
  budget.seed = cfg.seed;
  auto t = Clock::now();
  SampleSet samples = materialize_samples(cell.graph, budget);
  const double sample_seconds = seconds_since(t);
  {
    TradeoffRow r = row("sampling");
    r.materialize_seconds = sample_seconds;
    MhConfig mc;
    mc.seed = cfg.seed;
    t = Clock::now();
    MhResult m = mh_infer(samples, cell.graph, cell.delta, mc);
    r.inference_seconds = seconds_since(t);
    r.acceptance_rate = m.acceptance_rate;
    r.factors = m.delta_set_size;
    r.factor_fetches = m.factor_fetches;
    r.marginal_error = max_error(m.marginals, reference);
    rows.push_back(r);
  }

  if (cell.variational) {
    TradeoffRow r = row("variational");
    try {
      VariationalConfig vc;
      vc.lambda = cfg.lambda;
      t = Clock::now();
      VariationalResult v = materialize_variational(cell.graph, samples, vc);
      r.materialize_seconds = sample_seconds + seconds_since(t);
      t = Clock::now();
      VariationalInference vi =
          variational_infer(v.approx, cell.graph, cell.delta, gc);
      r.inference_seconds = seconds_since(t);
      r.factors = vi.factors;
      r.factor_fetches = vi.factor_fetches;
      r.marginal_error = max_error(vi.marginals, reference);
    } catch (const Error& e) {
      r.feasible = false;
      r.note = e.what();
    }
    rows.push_back(r);
  }
}

// Magnitude whose measured acceptance rate is closest to the target.
UpdateDelta delta_for_acceptance(const FactorGraph& g, const SampleSet& samples,
                                 double target, const TradeoffConfig& cfg) {
  if (target >= 1.0) return perturb_weights(g, cfg.change_fraction, 0, cfg.seed);
  MhConfig mc;
  mc.seed = cfg.seed;
  double lo = 0.0, hi = 16.0;
  UpdateDelta best = perturb_weights(g, cfg.change_fraction, hi, cfg.seed);
  double best_gap = INFINITY;
  for (int it = 0; it < 24; ++it) {
    double mid = 0.5 * (lo + hi);
    UpdateDelta d = perturb_weights(g, cfg.change_fraction, mid, cfg.seed);
    double rate = mh_infer(samples, g, d, mc).acceptance_rate;
    double gap = std::abs(std::log(std::max(rate, 1e-6)) - std::log(target));
    if (gap < best_gap) {
      best_gap = gap;
      best = d;
    }
    if (rate > target) lo = mid; else hi = mid;
  }
  return best;
}

}  // namespace

std::vector<TradeoffRow> bench_tradeoff(const TradeoffConfig& cfg) {
  std::vector<TradeoffRow> rows;
  auto spec = [&](std::size_t vars, double sparsity) {
    PairwiseSpec s;
    s.vars = vars;
    s.factors_per_var = cfg.factors_per_var;
    s.sparsity = sparsity;
    s.weight_lo = cfg.weight_lo;
    s.weight_hi = cfg.weight_hi;
    s.seed = cfg.seed;
    return s;
  };

  for (std::size_t n : cfg.vars) {
    Cell c{"vars", static_cast<double>(n), synthetic_pairwise(spec(n, 1.0)),
           {}, true, n <= cfg.max_variational_vars};
    c.delta = perturb_weights(c.graph, cfg.change_fraction, 0.1, cfg.seed);
    run_cell(c, cfg, rows);
  }

  if (!cfg.acceptance.empty()) {
    FactorGraph g = synthetic_pairwise(spec(cfg.base_vars, 1.0));
    SampleBudget b;
    b.samples = cfg.samples;
    b.burn_in = cfg.burn_in;
    b.seed = cfg.seed;
    SampleSet samples = materialize_samples(g, b);
    for (double a : cfg.acceptance) {
      Cell c{"acceptance", a, g, delta_for_acceptance(g, samples, a, cfg),
             false, true};
      run_cell(c, cfg, rows);
    }
  }

  for (double s : cfg.sparsity) {
    Cell c{"sparsity", s, synthetic_pairwise(spec(cfg.base_vars, s)), {},
           false, true};
    c.delta = perturb_weights(c.graph, 0.02, 0.1, cfg.seed);
    run_cell(c, cfg, rows);
  }

  if (!cfg.timing) {
    for (auto& r : rows) r.materialize_seconds = r.inference_seconds = 0;
  }
  return rows;
}

void write_tradeoff_csv(std::ostream& out, const std::vector<TradeoffRow>& rows,
                        bool timing) {
  out << "axis,value,strategy,feasible,materialize_seconds,inference_seconds,"
         "acceptance_rate,factors,factor_fetches,marginal_error,note\n";
  char buf[160];
  for (const auto& r : rows) {
    double ms = timing ? r.materialize_seconds : 0;
    double is = timing ? r.inference_seconds : 0;
    std::snprintf(buf, sizeof buf, "%g,%s,%d,%.6f,%.6f,%.6f,", r.value,
                  r.strategy.c_str(), r.feasible ? 1 : 0, ms, is,
                  r.acceptance_rate);
    out << r.axis << ',' << buf << r.factors << ',' << r.factor_fetches << ',';
    std::snprintf(buf, sizeof buf, "%.6f", r.marginal_error);
    out << buf << ',' << csv_field(r.note) << '\n';
  }
}

}  // namespace ddinc
