#include <doctest.h>

#include <sstream>

#include "ddinc/grounding.h"

using namespace ddinc;

namespace {

const char* kFig = R"(
relation R(x, y) edb.
relation S(y) edb.
relation Q(x) idb.

C1: Q(x) :- R(x, y).
F1: Q(x) :- R(x, y) weight = 1.0.
F2: Q(x) :- R(x, y), S(y) weight = 0.5 @semantics(logical).
)";

struct Fixture {
  RuleProgram program = parse_program(kFig);
  Store store;
  Fixture() {
    store.declare(*program.find_relation("R"));
    store.declare(*program.find_relation("S"));
    store.insert_tuples("R", std::vector<Tuple>{store.tuple({"a", "1"}),
                                                store.tuple({"a", "2"}),
                                                store.tuple({"b", "1"})});
    store.insert_tuples("S", std::vector<Tuple>{store.tuple({"1"})});
  }
};

const Factor* find_factor(const FactorGraph& g, const std::string& rule,
                          const std::string& head) {
  for (const auto& f : g.factors()) {
    if (f.rule == rule && f.head && g.variable(*f.head).tuple ==
                                        std::vector<std::string>{head}) {
      return &f;
    }
  }
  return nullptr;
}

// From-scratch grounding of the store as it is now.
FactorGraph scratch(const RuleProgram& p, const Store& s) {
  Store copy = s;
  return canonicalize(ground(p, copy));
}

}  // namespace

TEST_CASE("grounding the small R, S, Q program") {
  Fixture fx;
  Grounder gr(fx.program);
  const FactorGraph& g = gr.ground(fx.store);
  // R: 3 tuples, S: 1, Q: a and b.
  CHECK(g.num_variables() == 6);
  CHECK(g.num_factors() == 4);
  const Factor* f1a = find_factor(g, "F1", "a");
  REQUIRE(f1a);
  CHECK(f1a->groundings.size() == 2);
  const Factor* f2a = find_factor(g, "F2", "a");
  REQUIRE(f2a);
  CHECK(f2a->groundings.size() == 1);
  CHECK(f2a->groundings[0].size() == 2);
  CHECK(f2a->semantics == Semantics::kLogical);
  CHECK(find_factor(g, "F2", "b"));
}

TEST_CASE("empty data grounds to an empty graph") {
  RuleProgram p = parse_program(kFig);
  Store s;
  FactorGraph g = ground(p, s);
  CHECK(g.num_variables() == 0);
  CHECK(g.num_factors() == 0);
}

TEST_CASE("delta rules enumerate old/delta/new states") {
  RuleProgram p = parse_program(kFig);
  auto rules = delta_rules(*p.find_rule("F2"));
  REQUIRE(rules.size() == 2);
  CHECK(rules[0].states == std::vector<AtomState>{AtomState::kDelta, AtomState::kNew});
  CHECK(rules[1].states == std::vector<AtomState>{AtomState::kOld, AtomState::kDelta});
}

TEST_CASE("inserting one tuple adds its variable and the factors through it") {
  Fixture fx;
  Grounder gr(fx.program);
  FactorGraph before = gr.ground(fx.store);
  auto d = fx.store.insert_tuples("R", std::vector<Tuple>{fx.store.tuple({"c", "1"})});
  UpdateDelta delta = gr.incremental_ground(fx.store, std::vector<DeltaRelation>{d});
  // New variables R(c,1) and Q(c); F1(c) and F2(c) are new factors.
  CHECK(delta.new_vars.size() == 2);
  CHECK(delta.new_factors.size() == 2);
  CHECK(delta.removed_factors.empty());
  CHECK(delta.base_fingerprint == fingerprint(before));
  CHECK(canonicalize(apply_delta(before, delta).graph) == scratch(fx.program, fx.store));
  CHECK(canonicalize(gr.graph()) == scratch(fx.program, fx.store));
}

TEST_CASE("changing a grounding of an existing factor replaces it") {
  Fixture fx;
  Grounder gr(fx.program);
  FactorGraph before = gr.ground(fx.store);
  auto d = fx.store.insert_tuples("R", std::vector<Tuple>{fx.store.tuple({"a", "3"})});
  UpdateDelta delta = gr.incremental_ground(fx.store, std::vector<DeltaRelation>{d});
  CHECK(delta.new_vars.size() == 1);
  CHECK(delta.removed_factors.size() == 1);  // old F1(a)
  CHECK(delta.new_factors.size() == 1);      // F1(a) with three groundings
  CHECK(canonicalize(apply_delta(before, delta).graph) == scratch(fx.program, fx.store));
}

TEST_CASE("deletion removes dependent variables and factors") {
  Fixture fx;
  Grounder gr(fx.program);
  FactorGraph before = gr.ground(fx.store);
  auto d = fx.store.delete_tuples("R", std::vector<Tuple>{fx.store.tuple({"b", "1"})});
  UpdateDelta delta = gr.incremental_ground(fx.store, std::vector<DeltaRelation>{d});
  CHECK(delta.removed_vars.size() == 2);  // R(b,1), Q(b)
  CHECK(delta.removed_factors.size() == 2);
  CHECK(canonicalize(apply_delta(before, delta).graph) == scratch(fx.program, fx.store));
}

TEST_CASE("adding and removing rules") {
  Fixture fx;
  Grounder gr(fx.program);
  FactorGraph before = gr.ground(fx.store);
  RuleProgram next = parse_program(std::string(kFig) +
                                   "F3: Q(x) :- R(x, y), S(y) weight = -0.25.\n");
  UpdateDelta delta = gr.incremental_ground(fx.store, {}, &next);
  CHECK(delta.new_factors.size() == 2);
  CHECK(delta.new_vars.empty());
  CHECK(canonicalize(apply_delta(before, delta).graph) == scratch(next, fx.store));

  FactorGraph mid = gr.graph();
  RuleProgram back = parse_program(kFig);
  UpdateDelta undo = gr.incremental_ground(fx.store, {}, &back);
  CHECK(undo.removed_factors.size() == 2);
  CHECK(canonicalize(apply_delta(mid, undo).graph) == scratch(back, fx.store));
}

TEST_CASE("reweighting a rule only changes weights") {
  Fixture fx;
  Grounder gr(fx.program);
  gr.ground(fx.store);
  std::string text = kFig;
  text.replace(text.find("weight = 1.0"), 12, "weight = 2.0");
  RuleProgram next = parse_program(text);
  UpdateDelta delta = gr.incremental_ground(fx.store, {}, &next);
  CHECK(delta.new_factors.empty());
  CHECK(delta.removed_factors.empty());
  REQUIRE(delta.weight_changes.size() == 1);
  CHECK(delta.weight_changes.begin()->second.second == doctest::Approx(2.0));
  ProgramDelta pd = diff_programs(parse_program(kFig), next);
  CHECK(pd.reweighted_rules == std::vector<std::string>{"F1"});
}

TEST_CASE("supervision rules set evidence roles") {
  RuleProgram p = parse_program(R"(
relation M(m, s) edb.
relation K(s) edb.
relation Q(m) idb.
relation Q_Ev(m, l) evidence.
C: Q(m) :- M(m, s).
S: Q_Ev(m, true) :- M(m, s), K(s).
F: Q(m) :- M(m, s) weight = 1.0.
)");
  Store s;
  s.declare(*p.find_relation("M"));
  s.declare(*p.find_relation("K"));
  s.insert_tuples("M", std::vector<Tuple>{s.tuple({"m1", "x"}), s.tuple({"m2", "y"})});
  Grounder gr(p);
  FactorGraph g = gr.ground(s);
  auto role_of = [&](const FactorGraph& graph, const std::string& m) {
    for (const auto& v : graph.variables()) {
      if (v.relation == "Q" && v.tuple == std::vector<std::string>{m}) return v.role;
    }
    FAIL("variable missing");
    return Role::kQuery;
  };
  CHECK(role_of(g, "m1") == Role::kQuery);
  auto d = s.insert_tuples("K", std::vector<Tuple>{s.tuple({"x"})});
  UpdateDelta delta = gr.incremental_ground(s, std::vector<DeltaRelation>{d});
  REQUIRE(delta.role_changes.size() == 1);
  CHECK(delta.role_changes[0].second == Role::kEvidencePositive);
  CHECK(role_of(gr.graph(), "m1") == Role::kEvidencePositive);
  CHECK(canonicalize(gr.graph()) == scratch(p, s));
}

TEST_CASE("delta file round trip") {
  Fixture fx;
  Grounder gr(fx.program);
  gr.ground(fx.store);
  auto d = fx.store.insert_tuples("R", std::vector<Tuple>{fx.store.tuple({"c", "1"})});
  UpdateDelta delta = gr.incremental_ground(fx.store, std::vector<DeltaRelation>{d});
  std::stringstream ss;
  write_delta(ss, delta);
  CHECK(read_delta(ss) == delta);
}

TEST_CASE("apply_delta rejects a delta for another graph") {
  Fixture fx;
  FactorGraph g = ground(fx.program, fx.store);
  UpdateDelta d;
  d.base_variables = g.num_variables() + 1;
  CHECK_THROWS_AS(apply_delta(g, d), InputError);
}
