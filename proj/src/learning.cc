#include "ddinc/learning.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>

namespace ddinc {

std::vector<double> features(const FactorGraph& graph, const World& world) {
  std::vector<double> phi(graph.num_weights(), 0.0);
  for (const Factor& f : graph.factors()) {
    int n = satisfied_count(f, world);
    if (n > 0) phi[f.weight] += factor_sign(f, world) * g_eval(f.semantics, n);
  }
  return phi;
}

std::vector<double> feature_expectation(const FactorGraph& graph,
                                        const SampleSet& samples) {
  std::vector<double> mean(graph.num_weights(), 0.0);
  if (samples.empty()) return mean;
  World w;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    samples.load(i, w);
    auto phi = features(graph, w);
    for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += phi[k];
  }
  for (double& m : mean) m /= static_cast<double>(samples.size());
  return mean;
}

FactorGraph unclamped(const FactorGraph& graph) {
  FactorGraph g = graph;
  for (VarId v = 0; v < g.num_variables(); ++v) g.set_role(v, Role::kQuery);
  return g;
}

FactorGraph with_weights(const FactorGraph& graph,
                         std::span<const double> weights) {
  if (weights.size() != graph.num_weights()) {
    throw InputError("weight vector does not match the graph");
  }
  FactorGraph g = graph;
  for (WeightId k = 0; k < g.num_weights(); ++k) g.set_weight(k, weights[k]);
  return g;
}

std::vector<double> exact_feature_expectation(const FactorGraph& graph,
                                              bool clamp_evidence,
                                              std::size_t cap) {
  const FactorGraph g = clamp_evidence ? graph : unclamped(graph);
  const double z = log_partition(g, cap);
  std::vector<double> mean(g.num_weights(), 0.0);
  for_each_world(
      g,
      [&](const World& w, double lw) {
        double p = std::exp(lw - z);
        auto phi = features(g, w);
        for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += p * phi[k];
      },
      cap);
  return mean;
}

double exact_log_likelihood(const FactorGraph& graph, std::size_t cap) {
  return log_partition(graph, cap) - log_partition(unclamped(graph), cap);
}

std::vector<double> exact_gradient(const FactorGraph& graph, std::size_t cap) {
  auto c = exact_feature_expectation(graph, true, cap);
  auto f = exact_feature_expectation(graph, false, cap);
  for (WeightId k = 0; k < c.size(); ++k) {
    c[k] = graph.weight(k).fixed ? 0.0 : c[k] - f[k];
  }
  return c;
}

double pseudo_likelihood_loss(const FactorGraph& graph,
                              std::span<const double> weights,
                              const World& completion) {
  World w = completion;
  World init = initial_world(graph);
  std::vector<VarId> ev;
  for (VarId v = 0; v < graph.num_variables(); ++v) {
    if (is_evidence(graph.variable(v).role)) {
      w[v] = init[v];
      ev.push_back(v);
    }
  }
  if (ev.empty()) return 0.0;
  double total = 0;
  for (VarId v : ev) {
    const std::uint8_t label = w[v];
    double lw[2] = {0, 0};
    for (int b = 0; b < 2; ++b) {
      w[v] = static_cast<std::uint8_t>(b);
      for (FactorId f : graph.adjacent(v)) {
        lw[b] += factor_weight(graph.factor(f), w, weights);
      }
    }
    w[v] = label;
    double d = lw[1] - lw[0];
    total -= log_sigmoid(label ? d : -d);
  }
  return total / static_cast<double>(ev.size());
}

double estimate_loss(const FactorGraph& graph, std::span<const double> weights,
                     const SampleSet& samples) {
  if (samples.empty()) {
    return pseudo_likelihood_loss(graph, weights, initial_world(graph));
  }
  double total = 0;
  World w;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    samples.load(i, w);
    total += pseudo_likelihood_loss(graph, weights, w);
  }
  return total / static_cast<double>(samples.size());
}

std::vector<double> initial_weights(const FactorGraph& graph,
                                    const TrainConfig& config) {
  std::vector<double> w = graph.weight_values();
  if (config.warmstart) {
    if (config.warmstart->size() != w.size()) {
      throw InputError("warmstart vector does not match the graph");
    }
    for (WeightId k = 0; k < w.size(); ++k) {
      if (!graph.weight(k).fixed) w[k] = (*config.warmstart)[k];
    }
    return w;
  }
  Rng rng(config.seed, 0);
  for (WeightId k = 0; k < w.size(); ++k) {
    if (!graph.weight(k).fixed) {
      w[k] = rng.uniform(-config.init_scale, config.init_scale);
    }
  }
  return w;
}

namespace {

struct Chains {
  std::vector<World> clamped, free;
};

Chains start_chains(const FactorGraph& graph, const FactorGraph& free,
                    const TrainConfig& cfg) {
  Chains c;
  const std::size_t k = std::max<std::size_t>(cfg.chains, 1);
  for (std::size_t i = 0; i < k; ++i) {
    Rng rc(cfg.seed, 1000 + i), rf(cfg.seed, 2000 + i);
    World wc = initial_world(graph), wf = initial_world(free);
    for (VarId v : graph.query_variables()) wc[v] = rc.uniform() < 0.5;
    for (VarId v : free.query_variables()) wf[v] = rf.uniform() < 0.5;
    c.clamped.push_back(std::move(wc));
    c.free.push_back(std::move(wf));
  }
  return c;
}

// Advances each chain by `sweeps` sweeps at `weights`, collecting every
// sweep's world.
SampleSet advance(const FactorGraph& g, std::span<const double> weights,
                  std::vector<World>& worlds, std::vector<Rng>& rngs,
                  std::size_t sweeps) {
  SampleSet out(g.num_variables());
  GibbsChain chain(g, weights);
  for (std::size_t c = 0; c < worlds.size(); ++c) {
    chain.reset(worlds[c]);
    for (std::size_t s = 0; s < sweeps; ++s) {
      chain.sweep(rngs[c]);
      out.append(chain.world());
    }
    worlds[c] = chain.world();
  }
  return out;
}

bool finite_all(std::span<const double> xs) {
  for (double x : xs) {
    if (!std::isfinite(x) || std::abs(x) > 1e6) return false;
  }
  return true;
}

struct Run {
  std::vector<double> weights;
  std::vector<double> losses;
  bool diverged = false;
};

Run train_one(const FactorGraph& graph, const FactorGraph& free,
              const TrainConfig& cfg, double step) {
  Run run;
  run.weights = initial_weights(graph, cfg);
  Chains chains = start_chains(graph, free, cfg);
  std::vector<Rng> rc, rf;
  for (std::size_t i = 0; i < chains.clamped.size(); ++i) {
    rc.emplace_back(cfg.seed, 3000 + i);
    rf.emplace_back(cfg.seed, 4000 + i);
  }
  const std::size_t sweeps = std::max<std::size_t>(cfg.gradient_samples, 1);
  for (std::size_t e = 0;; ++e) {
    SampleSet cs = advance(graph, run.weights, chains.clamped, rc, sweeps);
    double loss = estimate_loss(graph, run.weights, cs);
    if (!std::isfinite(loss)) {
      run.diverged = true;
      return run;
    }
    run.losses.push_back(loss);
    if (e == cfg.epochs) break;

    std::vector<double> grad;
    if (cfg.exact) {
      grad = exact_gradient(with_weights(graph, run.weights));
    } else {
      SampleSet fs = advance(free, run.weights, chains.free, rf, sweeps);
      grad = feature_expectation(graph, cs);
      auto ff = feature_expectation(free, fs);
      for (std::size_t k = 0; k < grad.size(); ++k) grad[k] -= ff[k];
    }
    for (WeightId k = 0; k < run.weights.size(); ++k) {
      if (graph.weight(k).fixed) continue;
      run.weights[k] += step * (grad[k] - cfg.l2 * run.weights[k]);
    }
    if (!finite_all(run.weights)) {
      run.diverged = true;
      return run;
    }
  }
  return run;
}

}  // namespace

TrainResult sgd_train(const FactorGraph& graph, const TrainConfig& config) {
  if (config.step_sizes.empty()) throw InputError("empty step-size grid");
  if (config.epochs == 0) throw InputError("epochs must be at least 1");
  bool learnable = false;
  for (const auto& w : graph.weights()) learnable |= !w.fixed;
  if (!learnable) throw InputError("graph has no learnable weights");

  const FactorGraph free = unclamped(graph);
  TrainResult best;
  bool have = false;
  for (double step : config.step_sizes) {
    Run run = train_one(graph, free, config, step);
    for (std::size_t e = 0; e < run.losses.size(); ++e) {
      best.trace.push_back({e, step, run.losses[e]});
    }
    if (run.diverged) {
      best.diverged.push_back(step);
      continue;
    }
    if (!have || run.losses.back() < best.final_loss) {
      have = true;
      best.weights = run.weights;
      best.step_size = step;
      best.initial_loss = run.losses.front();
      best.final_loss = run.losses.back();
    }
  }
  if (!have) {
    std::ostringstream msg;
    msg << "training diverged at step size " << best.diverged.front();
    for (std::size_t i = 1; i < best.diverged.size(); ++i) {
      msg << ", " << best.diverged[i];
    }
    throw DivergenceError(msg.str(), best.diverged.front());
  }
  return best;
}

// --- CSV --------------------------------------------------------------------

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        out.back().push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        out.back().push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.emplace_back();
    } else if (c != '\r') {
      out.back().push_back(c);
    }
  }
  return out;
}

// Shortest text that reads back to the same double.
std::string fmt(double x) {
  char buf[40];
  auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

}  // namespace

void write_weights_csv(std::ostream& out, const FactorGraph& graph,
                       std::span<const double> weights) {
  out << "param_id,description,value\n";
  for (WeightId k = 0; k < graph.num_weights(); ++k) {
    out << k << ',' << csv_field(graph.weight(k).description) << ','
        << fmt(weights[k]) << '\n';
  }
}

std::vector<double> read_weights_csv(std::istream& in, const FactorGraph& graph,
                                     std::vector<double> fallback) {
  if (fallback.size() != graph.num_weights()) {
    throw InputError("fallback weights do not match the graph");
  }
  std::map<std::string, WeightId> by_desc;
  for (WeightId k = 0; k < graph.num_weights(); ++k) {
    const auto& d = graph.weight(k).description;
    if (!d.empty()) by_desc.emplace(d, k);
  }
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || (lineno == 1 && line.rfind("param_id", 0) == 0)) {
      continue;
    }
    auto f = split_csv(line);
    if (f.size() != 3) throw InputError("expected 3 fields", lineno);
    double value;
    std::size_t id;
    try {
      id = std::stoul(f[0]);
      value = std::stod(f[2]);
    } catch (const std::exception&) {
      throw InputError("malformed weight row", lineno);
    }
    if (!f[1].empty()) {
      auto it = by_desc.find(f[1]);
      if (it != by_desc.end()) fallback[it->second] = value;
    } else if (id < fallback.size()) {
      fallback[id] = value;
    }
  }
  return fallback;
}

void write_loss_csv(std::ostream& out, std::span<const LossPoint> trace) {
  out << "epoch,step_size,loss\n";
  for (const auto& p : trace) {
    out << p.epoch << ',' << fmt(p.step_size) << ',' << fmt(p.loss) << '\n';
  }
}

}  // namespace ddinc
