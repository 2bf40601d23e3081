#include <filesystem>
#include <fstream>
#include <json.hpp>

#include "ddinc/incremental.h"

namespace ddinc {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json meta_json(const BundleMeta& m) {
  json j;
  j["samples"] = m.samples;
  j["seed"] = m.seed;
  j["fingerprint"] = m.fingerprint;
  j["burn_in"] = m.burn_in;
  j["thinning"] = m.thinning;
  j["time_budget"] = m.time_budget ? json(*m.time_budget) : json(nullptr);
  j["lambda"] = m.lambda ? json(*m.lambda) : json(nullptr);
  j["solver_iterations"] = m.solver_iterations;
  j["solver_gap"] = m.solver_gap;
  j["solver_gradient_norm"] = m.solver_gradient_norm;
  j["original_factors"] = m.original_factors;
  j["approx_factors"] = m.approx_factors;
  j["variational_error"] =
      m.variational_error ? json(*m.variational_error) : json(nullptr);
  return j;
}

BundleMeta parse_meta(const json& j) {
  BundleMeta m;
  m.samples = j.at("samples").get<std::size_t>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.fingerprint = j.at("fingerprint").get<std::string>();
  m.burn_in = j.value("burn_in", std::size_t{0});
  m.thinning = j.value("thinning", std::size_t{1});
  if (j.contains("time_budget") && !j["time_budget"].is_null()) {
    m.time_budget = j["time_budget"].get<double>();
  }
  if (j.contains("lambda") && !j["lambda"].is_null()) {
    m.lambda = j["lambda"].get<double>();
  }
  m.solver_iterations = j.value("solver_iterations", std::size_t{0});
  m.solver_gap = j.value("solver_gap", 0.0);
  m.solver_gradient_norm = j.value("solver_gradient_norm", 0.0);
  m.original_factors = j.value("original_factors", std::size_t{0});
  m.approx_factors = j.value("approx_factors", std::size_t{0});
  if (j.contains("variational_error") && !j["variational_error"].is_null()) {
    m.variational_error = j["variational_error"].get<std::string>();
  }
  return m;
}

}  // namespace

void write_bundle(const std::string& dir, const MaterializationBundle& b) {
  fs::create_directories(dir);
  const fs::path root(dir);
  b.samples.write_file((root / "samples.bin").string());
  {
    std::ofstream out(root / "meta.json");
    if (!out) throw InputError("cannot write " + (root / "meta.json").string());
    out << meta_json(b.meta).dump(2) << "\n";
  }
  fs::remove(root / "approx.jsonl");
  fs::remove(root / "strawman.json");
  if (b.approx) write_graph_file((root / "approx.jsonl").string(), *b.approx);
  if (b.strawman) {
    json j;
    json vars = json::array();
    for (VarId v : b.strawman->free_vars) vars.push_back(v + 1);
    j["free_vars"] = vars;
    j["probabilities"] = b.strawman->probabilities;
    std::ofstream out(root / "strawman.json");
    out << j.dump() << "\n";
  }
}

MaterializationBundle read_bundle(const std::string& dir) {
  const fs::path root(dir);
  if (!fs::is_directory(root)) throw InputError("no bundle directory " + dir);
  MaterializationBundle b;
  std::ifstream meta(root / "meta.json");
  if (!meta) throw InputError("bundle " + dir + " has no meta.json");
  try {
    b.meta = parse_meta(json::parse(meta));
  } catch (const json::exception& e) {
    throw InputError("bundle meta.json: " + std::string(e.what()));
  }
  b.samples = SampleSet::read_file((root / "samples.bin").string());
  if (fs::exists(root / "approx.jsonl")) {
    b.approx = read_graph_file((root / "approx.jsonl").string());
  }
  if (fs::exists(root / "strawman.json")) {
    std::ifstream in(root / "strawman.json");
    try {
      json j = json::parse(in);
      WorldTable t;
      for (const auto& v : j.at("free_vars")) {
        t.free_vars.push_back(v.get<VarId>() - 1);
      }
      t.probabilities = j.at("probabilities").get<std::vector<double>>();
      if (t.probabilities.size() != (std::size_t{1} << t.free_vars.size())) {
        throw InputError("strawman table has the wrong size");
      }
      b.strawman = std::move(t);
    } catch (const json::exception& e) {
      throw InputError("bundle strawman.json: " + std::string(e.what()));
    }
  }
  return b;
}

}  // namespace ddinc
