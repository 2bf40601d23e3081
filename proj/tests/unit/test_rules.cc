#include <doctest.h>

#include "ddinc/rules.h"

using namespace ddinc;

namespace {

const char* kProgram = R"(
relation Mention(m, s) edb.
relation Word(m, w) edb.
relation Spouse(m) idb.
relation Spouse_Ev(m, l) evidence.
relation Married(s) edb.

C1: Spouse(m) :- Mention(m, s).
S1: Spouse_Ev(m, true) :- Mention(m, s), Married(s).
F1: Spouse(m) :- Word(m, w) weight = phrase(w) @semantics(ratio).
F2: Spouse(m) weight = -0.5.
F3: Spouse(m) :- Mention(m, s), Married(s) weight = 2.0 @interest.
)";

}  // namespace

TEST_CASE("rule kinds and annotations") {
  RuleProgram p = parse_program(kProgram);
  REQUIRE(p.rules.size() == 5);
  CHECK(p.find_rule("C1")->kind == RuleKind::kCandidate);
  CHECK(p.find_rule("S1")->kind == RuleKind::kSupervision);
  const Rule* f1 = p.find_rule("F1");
  CHECK(f1->kind == RuleKind::kInference);
  CHECK(f1->semantics == Semantics::kRatio);
  CHECK(f1->weight->kind == WeightSpec::Kind::kTied);
  CHECK(f1->weight->vars == std::vector<std::string>{"w"});
  CHECK(p.find_rule("F2")->is_prior());
  CHECK(p.find_rule("F2")->weight->value == doctest::Approx(-0.5));
  CHECK(p.find_rule("F3")->interest);
  CHECK_FALSE(p.find_rule("F1")->interest);
  CHECK(p.find_relation("Spouse_Ev")->kind == RelationKind::kEvidence);
}

TEST_CASE("print and reparse is the identity") {
  RuleProgram p = parse_program(kProgram);
  RuleProgram q = parse_program(print_program(p));
  CHECK(p == q);
}

TEST_CASE("learned weight with an initial value") {
  RuleProgram p = parse_program(
      "relation A(x) edb.\nrelation B(x) idb.\n"
      "R: B(x) :- A(x) weight = f(x) init 0.25.\n");
  const WeightSpec& w = *p.rules[0].weight;
  CHECK(w.kind == WeightSpec::Kind::kLearned);
  CHECK(w.value == doctest::Approx(0.25));
}

TEST_CASE("validation errors carry line numbers") {
  auto line_of = [](const std::string& text) {
    try {
      parse_program(text);
    } catch (const InputError& e) {
      return e.line();
    }
    return -1;
  };
  CHECK(line_of("relation A(x) edb.\nB(x) :- A(x).\n") == 2);  // undeclared
  CHECK(line_of("relation A(x) edb.\nrelation B(x) idb.\nB(x) :- A(x, y).\n") == 3);
  CHECK(line_of("relation A(x) edb.\nrelation B(x) idb.\nB(y) :- A(x).\n") == 3);
  CHECK_THROWS_AS(parse_program("relation A(x) edb.\nrelation B(x) idb.\n"
                                "B(x) :- A(x) weight = \n"),
                  InputError);
}

TEST_CASE("recursive programs are rejected") {
  CHECK_THROWS_AS(parse_program("relation A(x) idb.\nrelation B(x) idb.\n"
                                "A(x) :- B(x).\nB(x) :- A(x).\n"),
                  InputError);
}

TEST_CASE("relation order puts bodies before heads") {
  RuleProgram p = parse_program(kProgram);
  auto order = relation_order(p);
  auto pos = [&](const std::string& n) {
    return std::find(order.begin(), order.end(), n) - order.begin();
  };
  CHECK(pos("Mention") < pos("Spouse"));
  CHECK(pos("Word") < pos("Spouse"));
  CHECK(pos("Married") < pos("Spouse_Ev"));
}

TEST_CASE("hierarchical rules") {
  RuleProgram p = parse_program(
      "relation R(x, y) edb.\nrelation S(y) edb.\nrelation Q(x) idb.\n"
      "relation P() idb.\n"
      "H1: Q(x) :- R(x, y).\n"
      "H2: Q(x) :- R(x, y), S(y).\n"
      "H3: P() :- R(x, y), S(y).\n");
  CHECK(check_hierarchical(*p.find_rule("H1")));
  CHECK_FALSE(check_hierarchical(*p.find_rule("H2")));
  CHECK(check_hierarchical(*p.find_rule("H3")));
}

TEST_CASE("tied-weight expansion counts") {
  RuleProgram p = parse_program(
      "relation R(x, y) edb.\nrelation Q(x) idb.\n"
      "F: Q(x) :- R(x, y) weight = f(y).\n");
  std::vector<std::string> domain{"a", "b", "c"};
  auto rules = expand_tied_weights(p.rules[0], domain);
  // |domain|^|x u y| Boolean rules, one weight per y value.
  CHECK(rules.size() == 9);
  std::set<std::string> heads, weights;
  for (const auto& r : rules) {
    heads.insert(r.head_symbol);
    weights.insert(r.weight_param);
  }
  CHECK(heads.size() == 3);
  CHECK(weights.size() == 3);
}
