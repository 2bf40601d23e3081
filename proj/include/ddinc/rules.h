#pragma once

// Weighted datalog-style rule language.
//
//   relation Name(col, ...) edb|idb|evidence.
//   [Label:] Head(args) :- Body1(args), Body2(args) [weight = W] [@annot].
//   [Label:] Head(args) weight = W.            # prior on every Head tuple
//
// Variables are bare identifiers; constants are quoted strings, numbers, or
// the keywords true/false. W is a float (fixed), `name(vars)` (tied and
// learned, starting at 0), or `name(vars) init <float>`. Annotations:
// @semantics(linear|ratio|logical) and @interest.
//
// Rules without a weight are candidate rules, or supervision rules when the
// head is an "<X>_Ev" evidence relation whose last argument is the label.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ddinc/common.h"
#include "ddinc/relstore.h"

namespace ddinc {

struct Term {
  enum class Kind : std::uint8_t { kVariable, kConstant };
  Kind kind = Kind::kVariable;
  std::string text;

  static Term variable(std::string name) {
    return {Kind::kVariable, std::move(name)};
  }
  static Term constant(std::string value) {
    return {Kind::kConstant, std::move(value)};
  }
  bool is_variable() const { return kind == Kind::kVariable; }
  bool operator==(const Term&) const = default;
};

struct Atom {
  std::string predicate;
  std::vector<Term> args;

  std::vector<std::string> variables() const;
  bool operator==(const Atom&) const = default;
};

struct WeightSpec {
  enum class Kind : std::uint8_t { kFixed, kTied, kLearned };
  Kind kind = Kind::kFixed;
  double value = 0.0;  // fixed weight, or initial value when learned
  std::string function;
  std::vector<std::string> vars;

  static WeightSpec fixed(double w) { return {Kind::kFixed, w, "", {}}; }
  static WeightSpec tied(std::string fn, std::vector<std::string> vars) {
    return {Kind::kTied, 0.0, std::move(fn), std::move(vars)};
  }
  static WeightSpec learned(std::string fn, std::vector<std::string> vars,
                            double initial) {
    return {Kind::kLearned, initial, std::move(fn), std::move(vars)};
  }
  bool learnable() const { return kind != Kind::kFixed; }
  bool operator==(const WeightSpec&) const = default;
};

enum class RuleKind : std::uint8_t { kCandidate, kSupervision, kInference };

struct Rule {
  std::string id;
  RuleKind kind = RuleKind::kCandidate;
  Atom head;
  std::vector<Atom> body;
  std::optional<WeightSpec> weight;
  Semantics semantics = Semantics::kLinear;
  bool interest = false;
  int line = 0;

  // A body-less inference rule ranges over the existing tuples of its head.
  bool is_prior() const { return body.empty() && weight.has_value(); }
  std::vector<std::string> head_variables() const;
  std::vector<std::string> body_variables() const;

  // Equality ignores the source line.
  bool operator==(const Rule& o) const;
};

struct RuleProgram {
  std::vector<RelationSchema> relations;
  std::vector<Rule> rules;

  const RelationSchema* find_relation(std::string_view name) const;
  const Rule* find_rule(std::string_view id) const;
  std::vector<const Rule*> rules_of(RuleKind kind) const;

  bool operator==(const RuleProgram&) const = default;
};

// Parses and validates a program. Throws InputError with line/column for
// syntax errors, undeclared predicates, arity mismatches, unsafe rules and
// programs whose relation dependency graph has a cycle.
RuleProgram parse_program(std::string_view text);
RuleProgram parse_program_file(const std::string& path);

// Re-checks a program assembled in code (same checks as parse_program).
void validate_program(const RuleProgram& program);

std::string print_program(const RuleProgram& program);
std::string print_rule(const Rule& rule);

// Relations in an order where every rule's body relations precede its head.
std::vector<std::string> relation_order(const RuleProgram& program);

// True iff the head has no variables or one head variable occurs in every
// body atom.
bool check_hierarchical(const Rule& rule);

// One Boolean rule of the expansion of a general rule over a domain.
struct BooleanRule {
  std::string head_symbol;   // fresh symbol q_{b_y}
  std::string weight_param;  // w_{b_x}, shared across equal x bindings
  std::vector<Atom> body;    // body with head and weight variables bound
};

// Expands a rule by substituting head and weight variables with domain
// values in every possible way (|domain|^|x ∪ y| Boolean rules).
std::vector<BooleanRule> expand_tied_weights(
    const Rule& rule, std::span<const std::string> domain);

}  // namespace ddinc
