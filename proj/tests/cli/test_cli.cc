#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "ddinc/grounding.h"
#include "ddinc/inference.h"

namespace fs = std::filesystem;

namespace {

const std::string kCli = DDINC_CLI;
const std::string kFix = DDINC_FIXTURES;

struct Run {
  int status;
  std::string out;
  std::string err;
};

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("ddinc_cli_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter()++));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
  static int& counter() {
    static int c = 0;
    return c;
  }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Run run(const TempDir& dir, const std::string& args) {
  std::string out = dir / ".stdout", err = dir / ".stderr";
  std::string cmd = kCli + " " + args + " >" + out + " 2>" + err;
  int raw = std::system(cmd.c_str());
  return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, slurp(out), slurp(err)};
}

std::string ten_rules() { return kFix + "/ten/rules.ddl"; }
std::string ten_data() { return kFix + "/ten/data"; }

}  // namespace

TEST_CASE("ground prints counts for the small fixture") {
  TempDir d;
  Run r = run(d, "ground --rules " + kFix + "/small/rules.ddl --data " + kFix +
                     "/small/data --out " + (d / "g.jsonl"));
  CHECK(r.status == 0);
  CHECK(r.out == "variables 6\nfactors 4\nweights 2\n");
  CHECK(fs::exists(d / "g.jsonl"));
}

TEST_CASE("ground with empty data") {
  TempDir d;
  fs::create_directories(d / "empty");
  Run r = run(d, "ground --rules " + kFix + "/small/rules.ddl --data " + (d / "empty") +
                     " --out " + (d / "g.jsonl"));
  CHECK(r.status == 0);
  CHECK(r.out == "variables 0\nfactors 0\nweights 0\n");
}

TEST_CASE("malformed tsv exits 2 with the line") {
  TempDir d;
  Run r = run(d, "ground --rules " + kFix + "/bad/rules.ddl --data " + kFix +
                     "/bad/data --out " + (d / "g.jsonl"));
  CHECK(r.status == 2);
  CHECK(r.err.find("line 3") != std::string::npos);
}

TEST_CASE("usage errors exit 1") {
  TempDir d;
  CHECK(run(d, "").status == 1);
  CHECK(run(d, "ground --rules").status == 1);
  CHECK(run(d, "infer --graph x --strategy nope").status == 1);
  CHECK(run(d, "materialize --graph x --out y --samples 5 --time-budget 1").status == 1);
}

TEST_CASE("materialize writes exactly N samples and the approximate graph") {
  TempDir d;
  REQUIRE(run(d, "ground --rules " + ten_rules() + " --data " + ten_data() +
                     " --out " + (d / "g.jsonl")).status == 0);
  Run r = run(d, "materialize --graph " + (d / "g.jsonl") + " --out " + (d / "b") +
                     " --samples 1000 --variational 0.01");
  CHECK(r.status == 0);
  ddinc::SampleSet s = ddinc::SampleSet::read_file(d / "b/samples.bin");
  CHECK(s.size() == 1000);
  CHECK(fs::file_size(d / "b/samples.bin") == ddinc::SampleSet::kHeaderBytes + 2 * 1000);
  CHECK(fs::exists(d / "b/approx.jsonl"));
  CHECK(slurp(d / "b/meta.json").find("\"lambda\": 0.01") != std::string::npos);

  Run off = run(d, "materialize --graph " + (d / "g.jsonl") + " --out " + (d / "c") +
                       " --samples 10 --variational off");
  CHECK(off.status == 0);
  CHECK_FALSE(fs::exists(d / "c/approx.jsonl"));
}

TEST_CASE("time budget sample counts grow with the budget") {
  TempDir d;
  REQUIRE(run(d, "ground --rules " + ten_rules() + " --data " + ten_data() +
                     " --out " + (d / "g.jsonl")).status == 0);
  auto samples_for = [&](const std::string& budget) {
    Run r = run(d, "materialize --graph " + (d / "g.jsonl") + " --out " + (d / "b") +
                       " --variational off --time-budget " + budget);
    REQUIRE(r.status == 0);
    return ddinc::SampleSet::read_file(d / "b/samples.bin").size();
  };
  std::size_t small = samples_for("0.02");
  std::size_t large = samples_for("0.3");
  CHECK(small > 0);
  CHECK(large >= small);
}

TEST_CASE("update checks fingerprints") {
  TempDir d;
  REQUIRE(run(d, "ground --rules " + kFix + "/small/rules.ddl --data " + kFix +
                     "/small/data --out " + (d / "fig.jsonl")).status == 0);
  Run r = run(d, "update --rules " + ten_rules() + " --data " + ten_data() +
                     " --data-delta " + kFix + "/ten/delta --graph " + (d / "fig.jsonl") +
                     " --out " + (d / "delta.json"));
  CHECK(r.status == 3);

  REQUIRE(run(d, "ground --rules " + ten_rules() + " --data " + ten_data() +
                     " --out " + (d / "g.jsonl")).status == 0);
  REQUIRE(run(d, "materialize --graph " + (d / "fig.jsonl") + " --out " + (d / "b") +
                     " --samples 20 --variational off").status == 0);
  r = run(d, "update --rules " + ten_rules() + " --data " + ten_data() +
                 " --data-delta " + kFix + "/ten/delta --graph " + (d / "g.jsonl") +
                 " --bundle " + (d / "b") + " --out " + (d / "delta.json"));
  CHECK(r.status == 3);
  r = run(d, "infer --graph " + (d / "g.jsonl") + " --bundle " + (d / "b"));
  CHECK(r.status == 3);
}

TEST_CASE("update classifies and infer follows the strategy") {
  TempDir d;
  std::string rules = kFix + "/small/rules.ddl", data = kFix + "/small/data";
  REQUIRE(run(d, "ground --rules " + rules + " --data " + data + " --out " +
                     (d / "g.jsonl")).status == 0);
  REQUIRE(run(d, "materialize --graph " + (d / "g.jsonl") + " --out " + (d / "b") +
                     " --samples 2000").status == 0);
  Run u = run(d, "update --rules " + rules + " --data " + data + " --data-delta " +
                     kFix + "/small/delta --graph " + (d / "g.jsonl") + " --bundle " +
                     (d / "b") + " --out " + (d / "delta.json"));
  REQUIRE(u.status == 0);
  CHECK(u.out.find("class new_features\nstrategy sampling\n") == 0);
  Run i = run(d, "infer --graph " + (d / "g.jsonl") + " --bundle " + (d / "b") +
                     " --delta " + (d / "delta.json") + " --out " + (d / "m.csv") +
                     " --calibration " + (d / "cal.csv"));
  CHECK(i.status == 0);
  CHECK(i.out.find("strategy sampling") != std::string::npos);
  std::string cal = slurp(d / "cal.csv");
  CHECK(cal.rfind("bucket_lo,bucket_hi,count\n0.0,0.1,", 0) == 0);
  // Ten buckets plus the header.
  CHECK(std::count(cal.begin(), cal.end(), '\n') == 11);

  Run forced = run(d, "infer --graph " + (d / "g.jsonl") + " --bundle " + (d / "b") +
                          " --delta " + (d / "delta.json") +
                          " --strategy sampling --target-accepted 100000");
  CHECK(forced.status == 4);
  CHECK(forced.err.find("variational") != std::string::npos);
  Run fallback = run(d, "infer --graph " + (d / "g.jsonl") + " --bundle " + (d / "b") +
                            " --delta " + (d / "delta.json") + " --target-accepted 100000");
  CHECK(fallback.status == 0);
  CHECK(fallback.out.find("strategy variational") != std::string::npos);

  REQUIRE(run(d, "materialize --graph " + (d / "g.jsonl") + " --out " + (d / "s") +
                     " --samples 50 --variational off").status == 0);
  Run novar = run(d, "infer --graph " + (d / "g.jsonl") + " --bundle " + (d / "s") +
                         " --strategy variational");
  CHECK(novar.status == 4);
}

TEST_CASE("rerun equals a materialization-free gibbs run") {
  TempDir d;
  std::string rules = kFix + "/ten/rules.ddl";
  REQUIRE(run(d, "ground --rules " + rules + " --data " + ten_data() + " --out " +
                     (d / "g.jsonl")).status == 0);
  REQUIRE(run(d, "update --rules " + rules + " --data " + ten_data() + " --data-delta " +
                     kFix + "/ten/delta --graph " + (d / "g.jsonl") + " --out " +
                     (d / "delta.json")).status == 0);
  Run r = run(d, "--seed 5 infer --graph " + (d / "g.jsonl") + " --delta " +
                     (d / "delta.json") + " --strategy rerun --sweeps 500 --burn-in 50");
  REQUIRE(r.status == 0);

  ddinc::FactorGraph g = ddinc::read_graph_file(d / "g.jsonl");
  std::ifstream din(d / "delta.json");
  ddinc::FactorGraph after = ddinc::apply_delta(g, ddinc::read_delta(din)).graph;
  ddinc::GibbsConfig cfg;
  cfg.sweeps = 550;
  cfg.burn_in = 50;
  cfg.seed = 5;
  std::ostringstream expect;
  ddinc::write_marginals_csv(expect, after, ddinc::run_gibbs(after, cfg).marginals);
  CHECK(r.out == "strategy rerun\n" + expect.str());
}

TEST_CASE("learn writes weights and a loss trace, and warmstarts") {
  TempDir d;
  Run r = run(d, "learn --rules " + ten_rules() + " --data " + ten_data() + " --out " +
                     (d / "w.csv") + " --loss " + (d / "loss.csv") +
                     " --epochs 5 --steps 0.1,0.01 --out-graph " + (d / "lg.jsonl"));
  REQUIRE(r.status == 0);
  std::string w = slurp(d / "w.csv");
  CHECK(w.rfind("param_id,description,value\n0,F1:phrase(good),", 0) == 0);
  std::string loss = slurp(d / "loss.csv");
  CHECK(std::count(loss.begin(), loss.end(), '\n') == 1 + 2 * 6);
  CHECK(fs::exists(d / "lg.jsonl"));
  Run warm = run(d, "learn --rules " + ten_rules() + " --data " + ten_data() +
                        " --warmstart " + (d / "w.csv") + " --epochs 1 --steps 0.01");
  CHECK(warm.status == 0);
  CHECK(warm.out.rfind("param_id,description,value\n", 0) == 0);
}

TEST_CASE("config file supplies defaults that flags override") {
  TempDir d;
  REQUIRE(run(d, "ground --rules " + ten_rules() + " --data " + ten_data() +
                     " --out " + (d / "g.jsonl")).status == 0);
  {
    std::ofstream cfg(d / "run.ini");
    cfg << "seed=9\n[materialize]\nsamples=37\nvariational=off\n";
  }
  Run r = run(d, "--config " + (d / "run.ini") + " materialize --graph " +
                     (d / "g.jsonl") + " --out " + (d / "b"));
  REQUIRE(r.status == 0);
  CHECK(ddinc::SampleSet::read_file(d / "b/samples.bin").size() == 37);
  CHECK(slurp(d / "b/meta.json").find("\"seed\": 9") != std::string::npos);
  r = run(d, "--config " + (d / "run.ini") + " materialize --graph " + (d / "g.jsonl") +
                 " --out " + (d / "b") + " --samples 12");
  REQUIRE(r.status == 0);
  CHECK(ddinc::SampleSet::read_file(d / "b/samples.bin").size() == 12);
}

TEST_CASE("bench commands write csv") {
  TempDir d;
  Run s = run(d, "bench semantics --sizes 4 --seeds 2 --max-sweeps 500");
  CHECK(s.status == 0);
  CHECK(s.out.rfind("n,semantics,exact,median_sweeps,censored\n", 0) == 0);
  Run t = run(d, "bench tradeoff --vars 2 --acceptance 1 --sparsity 0.5 --base-vars 10 "
                 "--samples 100 --sweeps 100 --no-timing --out " + (d / "t.csv"));
  CHECK(t.status == 0);
  CHECK(slurp(d / "t.csv").rfind("axis,value,strategy,", 0) == 0);
}
