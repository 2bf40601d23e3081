#include <cstdio>
#include <fstream>
#include <sstream>

#include "ddinc/graph.h"
#include "json.hpp"

namespace ddinc {

using nlohmann::json;

namespace {

json variable_record(VarId id, const Variable& v) {
  json ev = nullptr;
  if (v.role == Role::kEvidencePositive) ev = true;
  if (v.role == Role::kEvidenceNegative) ev = false;
  return json{{"v", id + 1}, {"rel", v.relation}, {"tuple", v.tuple},
              {"ev", ev}};
}

json factor_record(FactorId id, const Factor& f) {
  json groundings = json::array();
  for (const auto& g : f.groundings) {
    json lits = json::array();
    for (const auto& l : g) {
      auto id1 = static_cast<std::int64_t>(l.var) + 1;
      lits.push_back(l.positive ? id1 : -id1);
    }
    groundings.push_back(std::move(lits));
  }
  json head = nullptr;
  if (f.head) head = *f.head + 1;
  return json{{"f", id},
              {"rule", f.rule},
              {"head", head},
              {"groundings", groundings},
              {"w", f.weight},
              {"g", std::string(to_string(f.semantics))}};
}

json weight_record(WeightId id, const WeightParam& w) {
  json r{{"wid", id}, {"val", w.value}, {"fixed", w.fixed}};
  if (!w.description.empty()) r["desc"] = w.description;
  return r;
}

VarId var_of(const json& j, std::size_t n, int line) {
  auto id = j.get<std::int64_t>();
  if (id < 1 || static_cast<std::size_t>(id) > n) {
    throw InputError("variable id " + std::to_string(id) + " out of range",
                     line);
  }
  return static_cast<VarId>(id - 1);
}

}  // namespace

void write_graph(std::ostream& out, const FactorGraph& graph) {
  for (VarId v = 0; v < graph.num_variables(); ++v) {
    out << variable_record(v, graph.variable(v)).dump() << '\n';
  }
  for (WeightId w = 0; w < graph.num_weights(); ++w) {
    out << weight_record(w, graph.weight(w)).dump() << '\n';
  }
  for (FactorId f = 0; f < graph.num_factors(); ++f) {
    out << factor_record(f, graph.factor(f)).dump() << '\n';
  }
}

void write_graph_file(const std::string& path, const FactorGraph& graph) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path);
  write_graph(out, graph);
}

FactorGraph read_graph(std::istream& in) {
  struct Pending {
    json record;
    int line;
  };
  std::vector<Pending> vars, factors, weights;
  std::string text;
  int line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(text);
    } catch (const json::parse_error& e) {
      throw InputError(std::string("malformed JSON: ") + e.what(), line);
    }
    if (j.contains("v")) {
      vars.push_back({std::move(j), line});
    } else if (j.contains("f")) {
      factors.push_back({std::move(j), line});
    } else if (j.contains("wid")) {
      weights.push_back({std::move(j), line});
    } else {
      throw InputError("record is neither a variable, factor nor weight",
                       line);
    }
  }
  FactorGraph g;
  try {
    for (std::size_t i = 0; i < vars.size(); ++i) {
      const json& r = vars[i].record;
      if (r.at("v").get<std::size_t>() != i + 1) {
        throw InputError("variable ids must be dense and ascending",
                         vars[i].line);
      }
      Variable v;
      v.relation = r.at("rel").get<std::string>();
      v.tuple = r.at("tuple").get<std::vector<std::string>>();
      const json& ev = r.at("ev");
      if (ev.is_null()) {
        v.role = Role::kQuery;
      } else {
        v.role = ev.get<bool>() ? Role::kEvidencePositive
                                : Role::kEvidenceNegative;
      }
      g.add_variable(std::move(v));
    }
    for (std::size_t i = 0; i < weights.size(); ++i) {
      const json& r = weights[i].record;
      if (r.at("wid").get<std::size_t>() != i) {
        throw InputError("weight ids must be dense and ascending",
                         weights[i].line);
      }
      WeightParam w;
      w.value = r.at("val").get<double>();
      w.fixed = r.at("fixed").get<bool>();
      if (r.contains("desc")) w.description = r["desc"].get<std::string>();
      g.add_weight(std::move(w));
    }
    const std::size_t n = g.num_variables();
    for (std::size_t i = 0; i < factors.size(); ++i) {
      const json& r = factors[i].record;
      int ln = factors[i].line;
      if (r.at("f").get<std::size_t>() != i) {
        throw InputError("factor ids must be dense and ascending", ln);
      }
      Factor f;
      f.rule = r.at("rule").get<std::string>();
      if (!r.at("head").is_null()) f.head = var_of(r["head"], n, ln);
      for (const auto& gr : r.at("groundings")) {
        Grounding lits;
        for (const auto& l : gr) {
          auto s = l.get<std::int64_t>();
          lits.push_back({var_of(json(s < 0 ? -s : s), n, ln), s > 0});
        }
        f.groundings.push_back(std::move(lits));
      }
      f.weight = r.at("w").get<WeightId>();
      auto sem = parse_semantics(r.at("g").get<std::string>());
      if (!sem) throw InputError("unknown semantics", ln);
      f.semantics = *sem;
      try {
        g.add_factor(std::move(f));
      } catch (const InputError& e) {
        throw InputError(e.what(), ln);
      }
    }
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed graph record: ") + e.what());
  }
  return g;
}

FactorGraph read_graph_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  try {
    return read_graph(in);
  } catch (const InputError& e) {
    throw InputError(path + ": " + e.what());
  }
}

std::string fingerprint(const FactorGraph& graph) {
  std::ostringstream ss;
  write_graph(ss, graph);
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : ss.str()) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace ddinc
