#include <CLI11.hpp>
#include <iostream>

#include "commands.h"

using namespace ddinc::cli;

int main(int argc, char** argv) {
  CLI::App app{"ddinc: incremental inference over grounded factor graphs"};
  app.require_subcommand(1);
  // key=value lines; a [command] section scopes keys to one subcommand.
  app.set_config("--config", "", "Configuration file (key=value)");

  Common common;
  app.add_option("--seed", common.seed, "Random seed")->capture_default_str();
  app.add_option("--threads", common.threads, "Worker thread cap")
      ->capture_default_str();

  int status = kOk;

  GroundArgs ground;
  auto* g = app.add_subcommand("ground", "Ground rules over TSV relations");
  g->add_option("--rules", ground.rules, "Rule file")->required();
  g->add_option("--data", ground.data, "Directory of TSV relations");
  g->add_option("--out", ground.out, "Output graph (JSON lines)")->required();
  g->callback([&] { status = cmd_ground(common, ground); });

  MaterializeArgs mat;
  double budget = 0;
  auto* m = app.add_subcommand("materialize", "Build a materialization bundle");
  m->add_option("--graph", mat.graph, "Input graph")->required();
  m->add_option("--out", mat.out, "Bundle directory")->required();
  auto* samples_opt =
      m->add_option("--samples", mat.samples, "Stored samples")->capture_default_str();
  auto* budget_opt =
      m->add_option("--time-budget", budget, "Sampling budget in seconds")
          ->check(CLI::PositiveNumber);
  samples_opt->excludes(budget_opt);
  m->add_option("--burn-in", mat.burn_in)->capture_default_str();
  m->add_option("--thinning", mat.thinning)->capture_default_str()
      ->check(CLI::PositiveNumber);
  m->add_option("--variational", mat.variational, "lambda, auto or off")
      ->capture_default_str();
  m->add_option("--kl-threshold", mat.kl_threshold, "KL bound for --variational auto")
      ->capture_default_str();
  m->add_flag("--strawman", mat.strawman, "Also store the world table");
  m->callback([&] {
    if (budget_opt->count() > 0) mat.time_budget = budget;
    status = cmd_materialize(common, mat);
  });

  UpdateArgs upd;
  auto* u = app.add_subcommand("update", "Ground an update and pick a strategy");
  u->add_option("--rules", upd.rules, "Rule file of the materialized program")
      ->required();
  u->add_option("--data", upd.data, "TSV relations of the materialized program");
  u->add_option("--data-delta", upd.data_delta, "Directory of TSV changes");
  u->add_option("--rules-next", upd.rules_next, "Updated rule file");
  u->add_option("--graph", upd.graph, "Materialized graph")->required();
  u->add_option("--bundle", upd.bundle, "Materialization bundle");
  u->add_option("--out", upd.out_delta, "Output delta file")->required();
  u->add_option("--out-graph", upd.out_graph, "Also write the updated graph");
  u->callback([&] { status = cmd_update(common, upd); });

  InferArgs inf;
  auto* i = app.add_subcommand("infer", "Marginals of the (updated) graph");
  i->add_option("--graph", inf.graph, "Graph the delta applies to")->required();
  i->add_option("--bundle", inf.bundle, "Materialization bundle");
  i->add_option("--delta", inf.delta, "Update delta");
  i->add_option("--out", inf.out, "Marginals CSV (default stdout)");
  i->add_option("--calibration", inf.calibration, "Calibration bucket CSV");
  i->add_option("--strategy", inf.strategy)
      ->check(CLI::IsMember({"auto", "sampling", "variational", "rerun"}))
      ->capture_default_str();
  i->add_option("--sweeps", inf.sweeps, "Kept Gibbs sweeps")->capture_default_str();
  i->add_option("--burn-in", inf.burn_in)->capture_default_str();
  i->add_option("--chains", inf.chains)->capture_default_str()
      ->check(CLI::PositiveNumber);
  i->add_option("--target-accepted", inf.target_accepted,
                "Accepted proposals below which samples count as exhausted")
      ->capture_default_str();
  i->callback([&] { status = cmd_infer(common, inf); });

  LearnArgs learn;
  auto* l = app.add_subcommand("learn", "Fit weights by SGD");
  l->add_option("--graph", learn.graph, "Training graph");
  l->add_option("--rules", learn.rules, "Rule file (instead of --graph)");
  l->add_option("--data", learn.data, "TSV relations for --rules");
  l->add_option("--warmstart", learn.warmstart, "Weights CSV to start from");
  l->add_option("--out", learn.out_weights, "Weights CSV (default stdout)");
  l->add_option("--loss", learn.out_loss, "Loss trace CSV");
  l->add_option("--out-graph", learn.out_graph, "Graph with learned weights");
  l->add_option("--epochs", learn.epochs)->capture_default_str();
  l->add_option("--steps", learn.steps, "Step-size grid")->delimiter(',')->capture_default_str();
  l->add_option("--gradient-samples", learn.gradient_samples)->capture_default_str();
  l->add_option("--chains", learn.chains)->capture_default_str();
  l->add_option("--l2", learn.l2)->capture_default_str();
  l->add_flag("--exact", learn.exact, "Exact gradients by enumeration");
  l->callback([&] { status = cmd_learn(common, learn); });

  auto* b = app.add_subcommand("bench", "Benchmarks");
  b->require_subcommand(1);

  SemanticsArgs sem;
  auto* bs = b->add_subcommand("semantics", "Sweeps to epsilon per semantics");
  bs->add_option("--out", sem.out, "CSV (default stdout)");
  bs->add_option("--sizes", sem.sizes)->delimiter(',')->capture_default_str();
  bs->add_option("--seeds", sem.seeds)->capture_default_str();
  bs->add_option("--max-sweeps", sem.max_sweeps)->capture_default_str();
  bs->add_option("--window", sem.window)->capture_default_str();
  bs->add_option("--epsilon", sem.epsilon)->capture_default_str();
  bs->add_option("--weight", sem.weight)->capture_default_str();
  bs->callback([&] { status = cmd_bench_semantics(common, sem); });

  TradeoffArgs tr;
  auto* bt = b->add_subcommand("tradeoff", "Materialization strategy tradeoffs");
  bt->add_option("--out", tr.out, "CSV (default stdout)");
  bt->add_option("--vars", tr.vars)->delimiter(',')->capture_default_str();
  bt->add_option("--acceptance", tr.acceptance)->delimiter(',')->capture_default_str();
  bt->add_option("--sparsity", tr.sparsity)->delimiter(',')->capture_default_str();
  bt->add_option("--base-vars", tr.base_vars)->capture_default_str();
  bt->add_option("--weight-lo", tr.weight_lo)->capture_default_str();
  bt->add_option("--weight-hi", tr.weight_hi)->capture_default_str();
  bt->add_option("--samples", tr.samples)->capture_default_str();
  bt->add_option("--sweeps", tr.sweeps)->capture_default_str();
  bt->add_option("--lambda", tr.lambda)->capture_default_str();
  bt->add_option("--max-variational-vars", tr.max_variational_vars)
      ->capture_default_str();
  bt->add_flag("--no-timing", tr.no_timing, "Write zero runtimes");
  bt->callback([&] { status = cmd_bench_tradeoff(common, tr); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }
  return status;
}
