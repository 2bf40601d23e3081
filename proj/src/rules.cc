#include "ddinc/rules.h"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace ddinc {

std::vector<std::string> Atom::variables() const {
  std::vector<std::string> out;
  for (const auto& t : args) {
    if (t.is_variable() &&
        std::find(out.begin(), out.end(), t.text) == out.end()) {
      out.push_back(t.text);
    }
  }
  return out;
}

std::vector<std::string> Rule::head_variables() const {
  return head.variables();
}

std::vector<std::string> Rule::body_variables() const {
  std::vector<std::string> out;
  for (const auto& a : body) {
    for (auto& v : a.variables()) {
      if (std::find(out.begin(), out.end(), v) == out.end()) out.push_back(v);
    }
  }
  return out;
}

bool Rule::operator==(const Rule& o) const {
  return id == o.id && kind == o.kind && head == o.head && body == o.body &&
         weight == o.weight && semantics == o.semantics &&
         interest == o.interest;
}

const RelationSchema* RuleProgram::find_relation(std::string_view name) const {
  for (const auto& r : relations) {
    if (r.name == name) return &r;
  }
  return nullptr;
}

const Rule* RuleProgram::find_rule(std::string_view id) const {
  for (const auto& r : rules) {
    if (r.id == id) return &r;
  }
  return nullptr;
}

std::vector<const Rule*> RuleProgram::rules_of(RuleKind kind) const {
  std::vector<const Rule*> out;
  for (const auto& r : rules) {
    if (r.kind == kind) out.push_back(&r);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Lexer

namespace {

enum class Tok {
  kIdent,
  kString,
  kNumber,
  kLParen,
  kRParen,
  kComma,
  kDot,
  kColon,
  kImplies,
  kEquals,
  kAt,
  kEnd
};

struct Token {
  Tok kind;
  std::string text;
  int line;
  int column;
};

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    while (true) {
      skip_space();
      if (pos_ >= src_.size()) {
        out.push_back({Tok::kEnd, "", line_, col_});
        return out;
      }
      int line = line_, col = col_;
      char c = src_[pos_];
      if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
        std::size_t start = pos_;
        while (pos_ < src_.size() &&
               (std::isalnum(static_cast<unsigned char>(src_[pos_])) ||
                src_[pos_] == '_')) {
          advance();
        }
        out.push_back({Tok::kIdent, std::string(src_.substr(start, pos_ - start)),
                       line, col});
      } else if (std::isdigit(static_cast<unsigned char>(c)) ||
                 ((c == '-' || c == '+') && pos_ + 1 < src_.size() &&
                  (std::isdigit(static_cast<unsigned char>(src_[pos_ + 1])) ||
                   src_[pos_ + 1] == '.'))) {
        out.push_back({Tok::kNumber, number(), line, col});
      } else if (c == '"') {
        out.push_back({Tok::kString, string_literal(), line, col});
      } else {
        advance();
        switch (c) {
          case '(': out.push_back({Tok::kLParen, "(", line, col}); break;
          case ')': out.push_back({Tok::kRParen, ")", line, col}); break;
          case ',': out.push_back({Tok::kComma, ",", line, col}); break;
          case '.': out.push_back({Tok::kDot, ".", line, col}); break;
          case '=': out.push_back({Tok::kEquals, "=", line, col}); break;
          case '@': out.push_back({Tok::kAt, "@", line, col}); break;
          case ':':
            if (pos_ < src_.size() && src_[pos_] == '-') {
              advance();
              out.push_back({Tok::kImplies, ":-", line, col});
            } else {
              out.push_back({Tok::kColon, ":", line, col});
            }
            break;
          default:
            throw InputError(std::string("unexpected character '") + c + "'",
                             line, col);
        }
      }
    }
  }

 private:
  void advance() {
    if (src_[pos_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++pos_;
  }

  void skip_space() {
    while (pos_ < src_.size()) {
      char c = src_[pos_];
      if (c == '#') {
        while (pos_ < src_.size() && src_[pos_] != '\n') advance();
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        advance();
      } else {
        return;
      }
    }
  }

  std::string number() {
    std::size_t start = pos_;
    if (src_[pos_] == '-' || src_[pos_] == '+') advance();
    auto digits = [&] {
      while (pos_ < src_.size() &&
             std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
        advance();
      }
    };
    digits();
    if (pos_ + 1 < src_.size() && src_[pos_] == '.' &&
        std::isdigit(static_cast<unsigned char>(src_[pos_ + 1]))) {
      advance();
      digits();
    }
    if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
      advance();
      if (pos_ < src_.size() && (src_[pos_] == '-' || src_[pos_] == '+')) {
        advance();
      }
      digits();
    }
    return std::string(src_.substr(start, pos_ - start));
  }

  std::string string_literal() {
    int line = line_, col = col_;
    advance();  // opening quote
    std::string out;
    while (true) {
      if (pos_ >= src_.size()) {
        throw InputError("unterminated string literal", line, col);
      }
      char c = src_[pos_];
      advance();
      if (c == '"') return out;
      if (c == '\\') {
        if (pos_ >= src_.size()) {
          throw InputError("unterminated string literal", line, col);
        }
        char e = src_[pos_];
        advance();
        out.push_back(e == 'n' ? '\n' : e == 't' ? '\t' : e);
      } else {
        out.push_back(c);
      }
    }
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
};

// ---------------------------------------------------------------------------
// Parser

class Parser {
 public:
  explicit Parser(std::vector<Token> toks) : toks_(std::move(toks)) {}

  RuleProgram run() {
    RuleProgram prog;
    int rule_index = 0;
    while (peek().kind != Tok::kEnd) {
      if (peek().kind == Tok::kIdent && peek().text == "relation" &&
          peek(1).kind == Tok::kIdent) {
        prog.relations.push_back(declaration());
      } else {
        ++rule_index;
        prog.rules.push_back(rule(rule_index));
      }
    }
    return prog;
  }

 private:
  const Token& peek(std::size_t ahead = 0) const {
    return toks_[std::min(pos_ + ahead, toks_.size() - 1)];
  }
  const Token& next() {
    const Token& t = toks_[pos_];
    if (pos_ + 1 < toks_.size()) ++pos_;
    return t;
  }
  const Token& expect(Tok kind, const char* what) {
    if (peek().kind != kind) {
      throw InputError(std::string("expected ") + what + ", found '" +
                           (peek().kind == Tok::kEnd ? "end of input"
                                                     : peek().text) +
                           "'",
                       peek().line, peek().column);
    }
    return next();
  }
  bool accept(Tok kind) {
    if (peek().kind != kind) return false;
    next();
    return true;
  }

  RelationSchema declaration() {
    next();  // "relation"
    RelationSchema s;
    s.name = expect(Tok::kIdent, "relation name").text;
    expect(Tok::kLParen, "'('");
    if (peek().kind != Tok::kRParen) {
      do {
        s.columns.push_back(expect(Tok::kIdent, "column name").text);
      } while (accept(Tok::kComma));
    }
    expect(Tok::kRParen, "')'");
    const Token& k = expect(Tok::kIdent, "relation kind");
    auto kind = parse_relation_kind(k.text);
    if (!kind) {
      throw InputError("unknown relation kind '" + k.text + "'", k.line,
                       k.column);
    }
    s.kind = *kind;
    expect(Tok::kDot, "'.'");
    return s;
  }

  Term term() {
    const Token& t = peek();
    switch (t.kind) {
      case Tok::kIdent:
        next();
        if (t.text == "true" || t.text == "false") return Term::constant(t.text);
        return Term::variable(t.text);
      case Tok::kString:
        next();
        return Term::constant(t.text);
      case Tok::kNumber:
        next();
        return Term::constant(t.text);
      default:
        throw InputError("expected a variable or constant", t.line, t.column);
    }
  }

  Atom atom() {
    Atom a;
    a.predicate = expect(Tok::kIdent, "predicate name").text;
    expect(Tok::kLParen, "'('");
    if (peek().kind != Tok::kRParen) {
      do {
        a.args.push_back(term());
      } while (accept(Tok::kComma));
    }
    expect(Tok::kRParen, "')'");
    return a;
  }

  double number_value(const Token& t) {
    double v = 0;
    auto [ptr, ec] = std::from_chars(t.text.data() + (t.text[0] == '+'),
                                     t.text.data() + t.text.size(), v);
    if (ec != std::errc() || ptr != t.text.data() + t.text.size()) {
      throw InputError("malformed number '" + t.text + "'", t.line, t.column);
    }
    return v;
  }

  WeightSpec weight() {
    expect(Tok::kEquals, "'=' after weight");
    if (peek().kind == Tok::kNumber) return WeightSpec::fixed(number_value(next()));
    std::string fn = expect(Tok::kIdent, "weight value or function").text;
    expect(Tok::kLParen, "'('");
    std::vector<std::string> vars;
    if (peek().kind != Tok::kRParen) {
      do {
        vars.push_back(expect(Tok::kIdent, "weight variable").text);
      } while (accept(Tok::kComma));
    }
    expect(Tok::kRParen, "')'");
    if (peek().kind == Tok::kIdent && peek().text == "init") {
      next();
      double init = number_value(expect(Tok::kNumber, "initial weight"));
      return WeightSpec::learned(std::move(fn), std::move(vars), init);
    }
    return WeightSpec::tied(std::move(fn), std::move(vars));
  }

  Rule rule(int index) {
    Rule r;
    r.line = peek().line;
    if (peek().kind == Tok::kIdent && peek(1).kind == Tok::kColon) {
      r.id = next().text;
      next();
    } else {
      r.id = "r" + std::to_string(index);
    }
    r.head = atom();
    if (accept(Tok::kImplies)) {
      do {
        r.body.push_back(atom());
      } while (accept(Tok::kComma));
    }
    if (peek().kind == Tok::kIdent && peek().text == "weight") {
      next();
      r.weight = weight();
    }
    while (accept(Tok::kAt)) {
      const Token& name = expect(Tok::kIdent, "annotation name");
      if (name.text == "interest") {
        r.interest = true;
      } else if (name.text == "semantics") {
        expect(Tok::kLParen, "'('");
        const Token& s = expect(Tok::kIdent, "semantics name");
        auto sem = parse_semantics(s.text);
        if (!sem) {
          throw InputError("unknown semantics '" + s.text + "'", s.line,
                           s.column);
        }
        r.semantics = *sem;
        expect(Tok::kRParen, "')'");
      } else {
        throw InputError("unknown annotation '@" + name.text + "'", name.line,
                         name.column);
      }
    }
    expect(Tok::kDot, "'.' at end of rule");
    return r;
  }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
};

bool contains(const std::vector<std::string>& v, const std::string& s) {
  return std::find(v.begin(), v.end(), s) != v.end();
}

void check_atom(const RuleProgram& prog, const Atom& a, int line) {
  const RelationSchema* s = prog.find_relation(a.predicate);
  if (!s) throw InputError("undeclared predicate " + a.predicate, line);
  if (s->arity() != a.args.size()) {
    throw InputError("arity mismatch for " + a.predicate + ": declared " +
                         std::to_string(s->arity()) + ", used with " +
                         std::to_string(a.args.size()),
                     line);
  }
}

RuleKind classify(const RuleProgram& prog, const Rule& r) {
  if (r.weight) return RuleKind::kInference;
  const RelationSchema* s = prog.find_relation(r.head.predicate);
  if (s && s->kind == RelationKind::kEvidence &&
      evidence_target(r.head.predicate)) {
    return RuleKind::kSupervision;
  }
  return RuleKind::kCandidate;
}

}  // namespace

void validate_program(const RuleProgram& prog) {
  std::set<std::string> names;
  for (const auto& s : prog.relations) {
    if (!names.insert(s.name).second) {
      throw InputError("relation " + s.name + " declared twice");
    }
    if (s.columns.size() > 31) {
      throw InputError("relation " + s.name + " has more than 31 columns");
    }
    if (s.kind == RelationKind::kEvidence) {
      if (auto target = evidence_target(s.name)) {
        const RelationSchema* base = prog.find_relation(*target);
        if (base && base->arity() + 1 != s.arity()) {
          throw InputError("evidence relation " + s.name +
                           " must have the columns of " + *target +
                           " plus a label column");
        }
      }
    }
  }
  std::set<std::string> ids;
  for (const auto& r : prog.rules) {
    if (!ids.insert(r.id).second) {
      throw InputError("duplicate rule label " + r.id, r.line);
    }
    check_atom(prog, r.head, r.line);
    for (const auto& a : r.body) check_atom(prog, a, r.line);
    if (r.kind != classify(prog, r)) {
      throw InputError("rule " + r.id + " has an inconsistent kind", r.line);
    }
    auto body_vars = r.body_variables();
    if (r.body.empty()) {
      if (!r.weight) {
        throw InputError("rule " + r.id + " has neither a body nor a weight",
                         r.line);
      }
      body_vars = r.head_variables();
    }
    for (const auto& v : r.head_variables()) {
      if (!contains(body_vars, v)) {
        throw InputError("unsafe rule " + r.id + ": head variable " + v +
                             " does not occur in the body",
                         r.line);
      }
    }
    if (r.weight) {
      for (const auto& v : r.weight->vars) {
        if (!contains(body_vars, v)) {
          throw InputError("unsafe rule " + r.id + ": weight variable " + v +
                               " does not occur in the body",
                           r.line);
        }
      }
      const RelationSchema* head = prog.find_relation(r.head.predicate);
      if (head->kind == RelationKind::kEvidence) {
        throw InputError("inference rule " + r.id +
                             " cannot have an evidence relation as head",
                         r.line);
      }
    }
    if (r.kind == RuleKind::kSupervision) {
      const Term& label = r.head.args.back();
      if (!label.is_variable() && label.text != "true" &&
          label.text != "false") {
        throw InputError("supervision rule " + r.id +
                             " must end its head with true, false or a "
                             "variable",
                         r.line);
      }
      if (!prog.find_relation(*evidence_target(r.head.predicate))) {
        throw InputError("undeclared predicate " +
                             *evidence_target(r.head.predicate),
                         r.line);
      }
    }
  }
  relation_order(prog);  // throws on cycles
}

RuleProgram parse_program(std::string_view text) {
  Parser parser(Lexer(text).run());
  RuleProgram prog = parser.run();
  for (auto& r : prog.rules) r.kind = classify(prog, r);
  validate_program(prog);
  return prog;
}

RuleProgram parse_program_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_program(ss.str());
  } catch (const InputError& e) {
    throw InputError(path + ": " + e.what());
  }
}

std::vector<std::string> relation_order(const RuleProgram& prog) {
  std::map<std::string, std::set<std::string>> succ;
  std::map<std::string, int> indegree;
  std::map<std::string, int> line_of;
  for (const auto& s : prog.relations) indegree[s.name] = 0;
  for (const auto& r : prog.rules) {
    for (const auto& a : r.body) {
      if (succ[a.predicate].insert(r.head.predicate).second) {
        ++indegree[r.head.predicate];
        line_of[r.head.predicate] = r.line;
      }
    }
  }
  std::vector<std::string> order;
  std::vector<bool> done(prog.relations.size(), false);
  while (order.size() < prog.relations.size()) {
    bool progressed = false;
    for (std::size_t i = 0; i < prog.relations.size(); ++i) {
      const std::string& name = prog.relations[i].name;
      if (done[i] || indegree[name] != 0) continue;
      done[i] = true;
      progressed = true;
      order.push_back(name);
      for (const auto& s : succ[name]) --indegree[s];
      break;
    }
    if (!progressed) {
      for (std::size_t i = 0; i < prog.relations.size(); ++i) {
        if (!done[i]) {
          const std::string& name = prog.relations[i].name;
          throw InputError("unstratified program: relation " + name +
                               " depends on itself through rules",
                           line_of[name]);
        }
      }
    }
  }
  return order;
}

// ---------------------------------------------------------------------------
// Printing

namespace {

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    if (c == '\n') {
      out += "\\n";
      continue;
    }
    if (c == '\t') {
      out += "\\t";
      continue;
    }
    out.push_back(c);
  }
  return out + "\"";
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  std::string s = buf;
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

std::string print_atom(const Atom& a) {
  std::string out = a.predicate + "(";
  for (std::size_t i = 0; i < a.args.size(); ++i) {
    if (i) out += ", ";
    out += a.args[i].is_variable() ? a.args[i].text : quote(a.args[i].text);
  }
  return out + ")";
}

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ", ";
    out += v[i];
  }
  return out;
}

}  // namespace

std::string print_rule(const Rule& r) {
  std::string out = r.id + ": " + print_atom(r.head);
  if (!r.body.empty()) {
    out += " :- ";
    for (std::size_t i = 0; i < r.body.size(); ++i) {
      if (i) out += ", ";
      out += print_atom(r.body[i]);
    }
  }
  if (r.weight) {
    out += " weight = ";
    if (r.weight->kind == WeightSpec::Kind::kFixed) {
      out += format_double(r.weight->value);
    } else {
      out += r.weight->function + "(" + join(r.weight->vars) + ")";
      if (r.weight->kind == WeightSpec::Kind::kLearned) {
        out += " init " + format_double(r.weight->value);
      }
    }
  }
  if (r.semantics != Semantics::kLinear) {
    out += " @semantics(" + std::string(to_string(r.semantics)) + ")";
  }
  if (r.interest) out += " @interest";
  return out + ".";
}

std::string print_program(const RuleProgram& prog) {
  std::string out;
  for (const auto& s : prog.relations) {
    std::string kind(to_string(s.kind));
    std::transform(kind.begin(), kind.end(), kind.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    out += "relation " + s.name + "(" + join(s.columns) + ") " + kind + ".\n";
  }
  for (const auto& r : prog.rules) out += print_rule(r) + "\n";
  return out;
}

// ---------------------------------------------------------------------------

bool check_hierarchical(const Rule& rule) {
  auto head = rule.head_variables();
  if (head.empty()) return true;
  for (const auto& x : head) {
    bool everywhere = true;
    for (const auto& a : rule.body) {
      if (!contains(a.variables(), x)) {
        everywhere = false;
        break;
      }
    }
    if (everywhere) return true;
  }
  return false;
}

std::vector<BooleanRule> expand_tied_weights(
    const Rule& rule, std::span<const std::string> domain) {
  std::vector<std::string> head_vars = rule.head_variables();
  std::vector<std::string> weight_vars =
      rule.weight ? rule.weight->vars : std::vector<std::string>{};
  std::vector<std::string> vars = head_vars;
  for (const auto& v : weight_vars) {
    if (!contains(vars, v)) vars.push_back(v);
  }
  if (!vars.empty() && domain.empty()) {
    throw InputError("cannot expand rule " + rule.id + " over an empty domain");
  }
  auto value_of = [&](const std::vector<std::size_t>& idx,
                      const std::string& var) -> const std::string& {
    auto pos = std::find(vars.begin(), vars.end(), var) - vars.begin();
    return domain[idx[pos]];
  };
  std::vector<BooleanRule> out;
  std::vector<std::size_t> idx(vars.size(), 0);
  while (true) {
    BooleanRule b;
    b.head_symbol = rule.head.predicate + "[";
    for (std::size_t i = 0; i < head_vars.size(); ++i) {
      if (i) b.head_symbol += ",";
      b.head_symbol += value_of(idx, head_vars[i]);
    }
    b.head_symbol += "]";
    if (rule.weight && rule.weight->learnable()) {
      b.weight_param = rule.id + ":" + rule.weight->function + "(";
      for (std::size_t i = 0; i < weight_vars.size(); ++i) {
        if (i) b.weight_param += ",";
        b.weight_param += value_of(idx, weight_vars[i]);
      }
      b.weight_param += ")";
    } else {
      b.weight_param = rule.id + ":fixed";
    }
    for (const auto& a : rule.body) {
      Atom bound = a;
      for (auto& t : bound.args) {
        if (t.is_variable() && contains(vars, t.text)) {
          t = Term::constant(value_of(idx, t.text));
        }
      }
      b.body.push_back(std::move(bound));
    }
    out.push_back(std::move(b));
    // Odometer over |domain|^|vars|.
    std::size_t k = 0;
    while (k < idx.size() && ++idx[k] == domain.size()) idx[k++] = 0;
    if (k == idx.size()) break;
  }
  return out;
}

}  // namespace ddinc
