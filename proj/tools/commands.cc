#include "commands.h"

#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "ddinc/bench.h"
#include "ddinc/grounding.h"
#include "ddinc/incremental.h"
#include "ddinc/inference.h"
#include "ddinc/learning.h"
#include "ddinc/optimizer.h"
#include "ddinc/relstore.h"
#include "ddinc/rules.h"

namespace ddinc::cli {

namespace {

// Signals a failure whose message is already printed.
struct ExitWith {
  int code;
};

int guarded(const std::function<int()>& body) {
  try {
    return body();
  } catch (const ExitWith& e) {
    return e.code;
  } catch (const FingerprintError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFingerprint;
  } catch (const InfeasibleError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInfeasible;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInput;
  }
}

void with_output(const std::string& path,
                 const std::function<void(std::ostream&)>& fn) {
  if (path.empty() || path == "-") {
    fn(std::cout);
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path);
  fn(out);
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  return in;
}

struct Grounded {
  RuleProgram program;
  Store store;
  Grounder grounder;
  explicit Grounded(RuleProgram p) : program(p), grounder(std::move(p)) {}
};

std::unique_ptr<Grounded> ground_from(const std::string& rules,
                                      const std::string& data) {
  auto g = std::make_unique<Grounded>(parse_program_file(rules));
  if (!data.empty()) load_store_dir(g->store, data);
  g->grounder.ground(g->store);
  return g;
}

}  // namespace

int cmd_ground(const Common&, const GroundArgs& a) {
  return guarded([&] {
    auto g = ground_from(a.rules, a.data);
    const FactorGraph& graph = g->grounder.graph();
    write_graph_file(a.out, graph);
    std::cout << "variables " << graph.num_variables() << "\n"
              << "factors " << graph.num_factors() << "\n"
              << "weights " << graph.num_weights() << "\n";
    return kOk;
  });
}

int cmd_materialize(const Common& c, const MaterializeArgs& a) {
  return guarded([&] {
    FactorGraph graph = read_graph_file(a.graph);
    MaterializationBundle b;
    SampleBudget budget;
    budget.samples = a.samples;
    budget.seconds = a.time_budget;
    budget.burn_in = a.burn_in;
    budget.thinning = a.thinning;
    budget.seed = c.seed;
    b.samples = materialize_samples(graph, budget);
    b.meta.samples = b.samples.size();
    b.meta.seed = c.seed;
    b.meta.fingerprint = fingerprint(graph);
    b.meta.burn_in = a.burn_in;
    b.meta.thinning = a.thinning;
    b.meta.time_budget = a.time_budget;
    b.meta.original_factors = graph.num_factors();
    std::cout << "samples " << b.samples.size() << "\n";

    if (a.strawman) b.strawman = materialize_strawman(graph);

    if (a.variational != "off") {
      VariationalConfig vc;
      vc.sampling = budget;
      try {
        VariationalResult r;
        if (a.variational == "auto") {
          LambdaSelection sel =
              select_lambda(graph, a.kl_threshold, b.samples, vc);
          r = std::move(sel.result);
          b.meta.lambda = sel.lambda;
        } else {
          std::size_t used = 0;
          double lambda = 0;
          try {
            lambda = std::stod(a.variational, &used);
          } catch (const std::exception&) {
            used = 0;
          }
          if (used != a.variational.size()) {
            throw InputError("--variational expects a number, auto or off");
          }
          vc.lambda = lambda;
          r = materialize_variational(graph, b.samples, vc);
          b.meta.lambda = lambda;
        }
        b.meta.solver_iterations = r.solution.iterations;
        b.meta.solver_gap = r.solution.duality_gap;
        b.meta.solver_gradient_norm = r.solution.gradient_norm;
        b.meta.approx_factors = r.approx.num_factors();
        b.approx = std::move(r.approx);
        char buf[64];
        std::snprintf(buf, sizeof buf, "%g", *b.meta.lambda);
        std::cout << "lambda " << buf << "\n"
                  << "approx_factors " << b.meta.approx_factors << "\n";
      } catch (const ConvergenceError& e) {
        b.meta.variational_error = e.what();
        std::cerr << "warning: variational materialization failed: " << e.what()
                  << "\n";
      } catch (const InfeasibleError& e) {
        b.meta.variational_error = e.what();
        std::cerr << "warning: variational materialization failed: " << e.what()
                  << "\n";
      }
    }
    write_bundle(a.out, b);
    return kOk;
  });
}

int cmd_update(const Common&, const UpdateArgs& a) {
  return guarded([&] {
    auto g = ground_from(a.rules, a.data);
    FactorGraph given = read_graph_file(a.graph);
    if (fingerprint(given) != fingerprint(g->grounder.graph())) {
      throw FingerprintError("graph " + a.graph +
                             " was not grounded from these rules and data");
    }
    BundleState state;
    if (!a.bundle.empty()) {
      MaterializationBundle b = read_bundle(a.bundle);
      check_fingerprint(b, given);
      state = {true, !b.samples.empty(), b.approx.has_value()};
    }
    RuleProgram next = g->program;
    if (!a.rules_next.empty()) next = parse_program_file(a.rules_next);
    std::vector<DeltaRelation> deltas;
    if (!a.data_delta.empty()) deltas = load_store_dir(g->store, a.data_delta);
    UpdateDelta d = g->grounder.incremental_ground(
        g->store, deltas, a.rules_next.empty() ? nullptr : &next);
    ProgramDelta pd = diff_programs(g->program, next);
    UpdateClass cls = classify_update(pd, d);
    Strategy s = choose_strategy(cls, state);
    with_output(a.out_delta, [&](std::ostream& out) { write_delta(out, d); });
    if (!a.out_graph.empty()) write_graph_file(a.out_graph, g->grounder.graph());
    std::cout << "class " << to_string(cls) << "\n"
              << "strategy " << to_string(s) << "\n"
              << "new_variables " << d.new_vars.size() << "\n"
              << "removed_variables " << d.removed_vars.size() << "\n"
              << "new_factors " << d.new_factors.size() << "\n"
              << "removed_factors " << d.removed_factors.size() << "\n";
    return kOk;
  });
}

namespace {

void write_calibration(std::ostream& out, const FactorGraph& g,
                       const std::vector<double>& m) {
  std::size_t counts[10] = {};
  for (VarId v = 0; v < g.num_variables(); ++v) {
    if (is_evidence(g.variable(v).role)) continue;
    int b = static_cast<int>(m[v] * 10);
    counts[std::clamp(b, 0, 9)]++;
  }
  out << "bucket_lo,bucket_hi,count\n";
  for (int b = 0; b < 10; ++b) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f,%.1f,", b / 10.0, (b + 1) / 10.0);
    out << buf << counts[b] << "\n";
  }
}

}  // namespace

int cmd_infer(const Common& c, const InferArgs& a) {
  return guarded([&] {
    FactorGraph graph = read_graph_file(a.graph);
    UpdateDelta delta;
    bool has_delta = !a.delta.empty();
    if (has_delta) {
      auto in = open_in(a.delta);
      delta = read_delta(in);
      if (delta.base_fingerprint != fingerprint(graph)) {
        throw FingerprintError("delta " + a.delta +
                               " was not computed against graph " + a.graph);
      }
    } else {
      delta.base_variables = graph.num_variables();
      delta.base_factors = graph.num_factors();
      delta.base_weights = graph.num_weights();
      delta.base_fingerprint = fingerprint(graph);
    }
    std::optional<MaterializationBundle> bundle;
    if (!a.bundle.empty()) {
      bundle = read_bundle(a.bundle);
      check_fingerprint(*bundle, graph);
    }
    BundleState state;
    if (bundle) state = {true, !bundle->samples.empty(), bundle->approx.has_value()};

    Strategy s;
    if (a.strategy == "auto") {
      s = choose_strategy(classify_update(ProgramDelta{}, delta), state);
    } else if (a.strategy == "sampling") {
      s = Strategy::kSampling;
    } else if (a.strategy == "variational") {
      s = Strategy::kVariational;
    } else if (a.strategy == "rerun") {
      s = Strategy::kRerun;
    } else {
      std::cerr << "error: unknown strategy " << a.strategy << "\n";
      throw ExitWith{kUsage};
    }

    GibbsConfig gc;
    gc.sweeps = a.sweeps + a.burn_in;
    gc.burn_in = a.burn_in;
    gc.chains = a.chains;
    gc.seed = c.seed;
    gc.threads = c.threads;

    std::vector<double> marginals;
    FactorGraph after = apply_delta(graph, delta).graph;
    std::string used;
    if (s == Strategy::kSampling) {
      if (!bundle || bundle->samples.empty()) {
        if (a.strategy == "sampling") {
          throw InfeasibleError("no stored samples; use --strategy variational");
        }
      } else {
        MhConfig mc;
        mc.seed = c.seed;
        mc.target_accepted = a.target_accepted;
        MhResult r = mh_infer(bundle->samples, graph, delta, mc);
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.6f", r.acceptance_rate);
        std::cout << "acceptance_rate " << buf << "\n";
        if (!r.exhausted) {
          marginals = std::move(r.marginals);
          used = "sampling";
        } else if (a.strategy == "sampling") {
          throw InfeasibleError(
              "stored samples exhausted after " + std::to_string(r.accepted) +
              " accepted proposals; use --strategy variational");
        } else {
          s = choose_strategy(UpdateClass::kSampleExhausted, state);
        }
      }
      if (used.empty() && s == Strategy::kSampling) s = Strategy::kRerun;
    }
    if (used.empty() && s == Strategy::kVariational) {
      if (!bundle || !bundle->approx) {
        if (a.strategy == "variational") {
          throw InfeasibleError("bundle has no approximate graph");
        }
        s = Strategy::kRerun;
      } else {
        marginals = variational_infer(*bundle->approx, graph, delta, gc).marginals;
        used = "variational";
      }
    }
    if (used.empty()) {
      marginals = run_gibbs(after, gc).marginals;
      used = "rerun";
    }
    std::cout << "strategy " << used << "\n";
    with_output(a.out, [&](std::ostream& out) {
      write_marginals_csv(out, after, marginals);
    });
    if (!a.calibration.empty()) {
      with_output(a.calibration, [&](std::ostream& out) {
        write_calibration(out, after, marginals);
      });
    }
    return kOk;
  });
}

int cmd_learn(const Common& c, const LearnArgs& a) {
  return guarded([&] {
    FactorGraph graph;
    if (!a.graph.empty()) {
      graph = read_graph_file(a.graph);
    } else if (!a.rules.empty()) {
      graph = ground_from(a.rules, a.data)->grounder.graph();
    } else {
      std::cerr << "error: learn needs --graph or --rules\n";
      throw ExitWith{kUsage};
    }
    TrainConfig tc;
    tc.step_sizes = a.steps;
    tc.epochs = a.epochs;
    tc.gradient_samples = a.gradient_samples;
    tc.chains = a.chains;
    tc.seed = c.seed;
    tc.l2 = a.l2;
    tc.exact = a.exact;
    if (!a.warmstart.empty()) {
      auto in = open_in(a.warmstart);
      tc.warmstart = read_weights_csv(in, graph, initial_weights(graph, tc));
    }
    TrainResult r = sgd_train(graph, tc);
    with_output(a.out_weights, [&](std::ostream& out) {
      write_weights_csv(out, graph, r.weights);
    });
    if (!a.out_loss.empty()) {
      with_output(a.out_loss,
                  [&](std::ostream& out) { write_loss_csv(out, r.trace); });
    }
    if (!a.out_graph.empty()) {
      write_graph_file(a.out_graph, with_weights(graph, r.weights));
    }
    char buf[96];
    std::snprintf(buf, sizeof buf, "step_size %g\ninitial_loss %.6f\nfinal_loss %.6f\n",
                  r.step_size, r.initial_loss, r.final_loss);
    std::cerr << buf;
    return kOk;
  });
}

int cmd_bench_semantics(const Common& c, const SemanticsArgs& a) {
  return guarded([&] {
    SemanticsBenchConfig cfg;
    cfg.sizes = a.sizes;
    cfg.seeds = a.seeds;
    cfg.max_sweeps = a.max_sweeps;
    cfg.window = a.window;
    cfg.epsilon = a.epsilon;
    cfg.weight = a.weight;
    cfg.seed = c.seed;
    auto rows = bench_semantics(cfg);
    with_output(a.out, [&](std::ostream& out) { write_semantics_csv(out, rows); });
    return kOk;
  });
}

int cmd_bench_tradeoff(const Common& c, const TradeoffArgs& a) {
  return guarded([&] {
    TradeoffConfig cfg;
    cfg.vars = a.vars;
    cfg.acceptance = a.acceptance;
    cfg.sparsity = a.sparsity;
    cfg.base_vars = a.base_vars;
    cfg.weight_lo = a.weight_lo;
    cfg.weight_hi = a.weight_hi;
    cfg.samples = a.samples;
    cfg.sweeps = a.sweeps;
    cfg.lambda = a.lambda;
    cfg.max_variational_vars = a.max_variational_vars;
    cfg.seed = c.seed;
    cfg.timing = !a.no_timing;
    auto rows = bench_tradeoff(cfg);
    with_output(a.out, [&](std::ostream& out) {
      write_tradeoff_csv(out, rows, cfg.timing);
    });
    return kOk;
  });
}

}  // namespace ddinc::cli
