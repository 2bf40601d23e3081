#include "ddinc/grounding.h"

#include <algorithm>
#include <istream>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <tuple>

#include "json.hpp"

namespace ddinc {

// A rule with variables numbered and constants interned. Argument codes:
// >= 0 is a variable index into `vars`, < 0 is -(constant id + 1).
struct Grounder::Compiled {
  const Rule* rule = nullptr;
  std::vector<std::string> vars;
  std::vector<std::int64_t> head;
  std::vector<std::vector<std::int64_t>> body;
  std::vector<bool> literal;  // body atom becomes a literal
  std::vector<std::size_t> key;            // group-key variable indices
  std::vector<std::size_t> weight_in_key;  // weight vars, as key positions
  bool weighted = false;
};

namespace {

std::int64_t const_code(ConstId c) { return -static_cast<std::int64_t>(c) - 1; }
ConstId code_const(std::int64_t code) {
  return static_cast<ConstId>(-code - 1);
}

std::set<std::string> variable_relations(const RuleProgram& p) {
  std::set<std::string> out;
  auto add = [&](const std::string& name) {
    const RelationSchema* s = p.find_relation(name);
    if (s && s->kind != RelationKind::kEvidence) out.insert(name);
  };
  for (const auto& r : p.rules) {
    add(r.head.predicate);
    for (const auto& a : r.body) add(a.predicate);
  }
  return out;
}

bool same_structure(const Rule& a, const Rule& b) {
  if (a.kind != b.kind || !(a.head == b.head) || !(a.body == b.body) ||
      a.semantics != b.semantics || a.weight.has_value() != b.weight.has_value()) {
    return false;
  }
  if (!a.weight) return true;
  return a.weight->kind == b.weight->kind &&
         a.weight->function == b.weight->function &&
         a.weight->vars == b.weight->vars;
}

}  // namespace

std::vector<DeltaRule> delta_rules(const Rule& rule) {
  std::vector<DeltaRule> out;
  for (std::size_t i = 0; i < rule.body.size(); ++i) {
    DeltaRule d{rule.id, i, {}};
    for (std::size_t j = 0; j < rule.body.size(); ++j) {
      d.states.push_back(j < i    ? AtomState::kOld
                         : j == i ? AtomState::kDelta
                                  : AtomState::kNew);
    }
    out.push_back(std::move(d));
  }
  return out;
}

std::vector<DeltaRule> delta_rules(const RuleProgram& program) {
  std::vector<DeltaRule> out;
  for (const auto& r : program.rules) {
    for (auto& d : delta_rules(r)) out.push_back(std::move(d));
  }
  return out;
}

ProgramDelta diff_programs(const RuleProgram& before,
                           const RuleProgram& after) {
  ProgramDelta d;
  for (const auto& r : after.rules) {
    const Rule* old = before.find_rule(r.id);
    if (!old) {
      d.added_rules.push_back(r.id);
    } else if (!same_structure(*old, r)) {
      d.modified_rules.push_back(r.id);
    } else if (old->weight && old->weight->value != r.weight->value) {
      d.reweighted_rules.push_back(r.id);
    } else if (old->interest != r.interest) {
      d.interest_changed.push_back(r.id);
    }
  }
  for (const auto& r : before.rules) {
    if (!after.find_rule(r.id)) d.removed_rules.push_back(r.id);
  }
  for (const auto& s : after.relations) {
    if (!before.find_relation(s.name)) d.added_relations.push_back(s.name);
  }
  return d;
}

// ---------------------------------------------------------------------------

Grounder::Grounder(RuleProgram program) : program_(std::move(program)) {}

Grounder::Compiled Grounder::compile(const Rule& rule) {
  Compiled c;
  c.rule = &rule;
  c.vars = rule.is_prior() ? rule.head_variables() : rule.body_variables();
  SymbolTable& syms = store_->symbols();
  auto code = [&](const Term& t) -> std::int64_t {
    if (!t.is_variable()) return const_code(syms.intern(t.text));
    return std::find(c.vars.begin(), c.vars.end(), t.text) - c.vars.begin();
  };
  for (const auto& t : rule.head.args) c.head.push_back(code(t));
  for (const auto& a : rule.body) {
    std::vector<std::int64_t> args;
    for (const auto& t : a.args) args.push_back(code(t));
    c.body.push_back(std::move(args));
    c.literal.push_back(variable_relations_.count(a.predicate) > 0);
  }
  c.weighted = rule.weight.has_value();
  if (c.weighted) {
    std::vector<std::string> key_vars = rule.head_variables();
    for (const auto& v : rule.weight->vars) {
      if (std::find(key_vars.begin(), key_vars.end(), v) == key_vars.end()) {
        key_vars.push_back(v);
      }
    }
    for (const auto& v : key_vars) {
      c.key.push_back(std::find(c.vars.begin(), c.vars.end(), v) -
                      c.vars.begin());
    }
    for (const auto& v : rule.weight->vars) {
      c.weight_in_key.push_back(
          std::find(key_vars.begin(), key_vars.end(), v) - key_vars.begin());
    }
  }
  return c;
}

Tuple Grounder::head_tuple(const Compiled& c, const Binding& b) const {
  Tuple t;
  t.reserve(c.head.size());
  for (auto code : c.head) t.push_back(code >= 0 ? b[code] : code_const(code));
  return t;
}

Tuple Grounder::group_key(const Compiled& c, const Binding& b) const {
  if (!c.weighted) return head_tuple(c, b);
  Tuple k;
  k.reserve(c.key.size());
  for (auto i : c.key) k.push_back(b[i]);
  return k;
}

Grounder::WeightKey Grounder::weight_key(const Compiled& c,
                                         const Tuple& group) const {
  Tuple x;
  for (auto i : c.weight_in_key) x.push_back(group[i]);
  const WeightSpec& w = *c.rule->weight;
  return {c.rule->id + '\x1f' + (w.learnable() ? w.function : ""), x};
}

WeightParam Grounder::weight_param(const Compiled& c,
                                   const Tuple& group) const {
  const WeightSpec& w = *c.rule->weight;
  WeightParam p;
  p.fixed = !w.learnable();
  p.value = w.kind == WeightSpec::Kind::kTied ? 0.0 : w.value;
  p.description = c.rule->id;
  if (w.learnable()) {
    p.description += ":" + w.function + "(";
    for (std::size_t i = 0; i < c.weight_in_key.size(); ++i) {
      if (i) p.description += ",";
      p.description += store_->symbols().name(group[c.weight_in_key[i]]);
    }
    p.description += ")";
  }
  return p;
}

bool Grounder::match_head(const Compiled& c, const Tuple& t,
                          Binding* out) const {
  Binding b(c.vars.size(), kRemoved);
  for (std::size_t i = 0; i < c.head.size(); ++i) {
    auto code = c.head[i];
    if (code < 0) {
      if (t[i] != code_const(code)) return false;
    } else if (b[code] == kRemoved) {
      b[code] = t[i];
    } else if (b[code] != t[i]) {
      return false;
    }
  }
  *out = std::move(b);
  return true;
}

Role Grounder::role_of(const std::string& relation, const Tuple& t) const {
  if (store_->has(relation)) {
    if (auto l = store_->relation(relation).label(t)) {
      return *l == Label::kPositive ? Role::kEvidencePositive
                                    : Role::kEvidenceNegative;
    }
  }
  std::string ev = relation + "_Ev";
  auto it = views_.find(ev);
  if (it == views_.end() || !evidence_relations_.count(ev)) return Role::kQuery;
  std::uint32_t mask = (std::uint32_t{1} << t.size()) - 1;
  bool pos = false, neg = false;
  for (const Tuple& e : it->second.lookup(mask, t)) {
    const std::string& v = store_->symbols().name(e.back());
    pos |= v == "true";
    neg |= v == "false";
  }
  // Conflicting supervision leaves the variable unlabeled.
  if (pos && !neg) return Role::kEvidencePositive;
  if (neg && !pos) return Role::kEvidenceNegative;
  return Role::kQuery;
}

template <typename Fn>
void Grounder::join(const Compiled& c, const std::vector<AtomState>& states,
                    Fn&& fn) {
  const std::size_t n = c.body.size();
  struct Step {
    std::size_t atom;
    std::uint32_t mask = 0;
    std::vector<std::int64_t> key;                         // codes
    std::vector<std::pair<std::size_t, std::size_t>> bind;  // pos, var
    std::vector<std::pair<std::size_t, std::size_t>> same;  // pos, pos
  };
  std::vector<Step> plan;
  std::vector<bool> bound(c.vars.size(), false), used(n, false);
  auto pick = [&]() {
    for (std::size_t a = 0; a < n; ++a) {
      if (states[a] == AtomState::kDelta && !used[a]) return a;
    }
    std::size_t best = n;
    int best_score = -1;
    for (std::size_t a = 0; a < n; ++a) {
      if (used[a]) continue;
      int score = 0;
      for (auto code : c.body[a]) score += code < 0 || bound[code];
      if (score > best_score) {
        best = a;
        best_score = score;
      }
    }
    return best;
  };
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t a = pick();
    used[a] = true;
    Step s;
    s.atom = a;
    const auto& args = c.body[a];
    std::vector<std::int64_t> first_pos(c.vars.size(), -1);
    for (std::size_t p = 0; p < args.size(); ++p) {
      auto code = args[p];
      if (code < 0 || bound[code]) {
        s.mask |= 1u << p;
        s.key.push_back(code);
      } else if (first_pos[code] >= 0) {
        s.same.emplace_back(p, first_pos[code]);
      } else {
        first_pos[code] = static_cast<std::int64_t>(p);
        s.bind.emplace_back(p, code);
      }
    }
    for (auto [p, v] : s.bind) bound[v] = true;
    plan.push_back(std::move(s));
  }

  Binding b(c.vars.size(), kRemoved);
  std::vector<const Relation*> rels(n);
  std::vector<const Presence*> pres(n);
  static const Presence kNone;
  for (std::size_t a = 0; a < n; ++a) {
    const std::string& name = c.rule->body[a].predicate;
    rels[a] = &views_.at(name);
    auto it = presence_.find(name);
    pres[a] = it == presence_.end() ? &kNone : &it->second;
  }

  auto recurse = [&](auto& self, std::size_t depth, int sign) -> void {
    if (depth == plan.size()) {
      fn(b, sign);
      return;
    }
    const Step& s = plan[depth];
    Tuple key;
    key.reserve(s.key.size());
    for (auto code : s.key) key.push_back(code < 0 ? code_const(code) : b[code]);
    auto matches_key = [&](const Tuple& t) {
      std::size_t k = 0;
      for (std::size_t p = 0; p < t.size(); ++p) {
        if (s.mask & (1u << p)) {
          if (t[p] != key[k++]) return false;
        }
      }
      return true;
    };
    auto visit = [&](const Tuple& t, int sg) {
      ++tuple_scans_;
      for (auto [p, q] : s.same) {
        if (t[p] != t[q]) return;
      }
      for (auto [p, v] : s.bind) b[v] = t[p];
      self(self, depth + 1, sign * sg);
    };
    const Presence& pr = *pres[s.atom];
    switch (states[s.atom]) {
      case AtomState::kNew:
        for (const Tuple& t : rels[s.atom]->lookup(s.mask, key)) visit(t, 1);
        break;
      case AtomState::kOld:
        for (const Tuple& t : rels[s.atom]->lookup(s.mask, key)) {
          if (!pr.added.count(t)) visit(t, 1);
        }
        for (const Tuple& t : pr.removed) {
          if (matches_key(t)) visit(t, 1);
        }
        break;
      case AtomState::kDelta:
        for (const Tuple& t : pr.added) {
          if (matches_key(t)) visit(t, 1);
        }
        for (const Tuple& t : pr.removed) {
          if (matches_key(t)) visit(t, -1);
        }
        break;
    }
    for (auto [p, v] : s.bind) b[v] = kRemoved;
  };
  recurse(recurse, 0, 1);
}

const FactorGraph& Grounder::ground(Store& store) {
  views_.clear();
  presence_.clear();
  bindings_.clear();
  graph_ = FactorGraph();
  var_ids_.clear();
  factor_ids_.clear();
  weight_keys_.clear();
  weight_ids_.clear();
  weight_refs_.clear();
  variable_relations_.clear();
  evidence_relations_.clear();
  label_log_pos_ = 0;
  grounded_ = false;
  RuleProgram next = program_;
  update(store, next, {});
  return graph_;
}

UpdateDelta Grounder::incremental_ground(Store& store,
                                         std::span<const DeltaRelation> deltas,
                                         const RuleProgram* next_program) {
  if (!grounded_) throw Error("incremental_ground called before ground");
  BaseChanges base;
  for (const auto& d : deltas) {
    if (!program_.find_relation(d.base)) continue;
    auto& m = base[d.base];
    for (const auto& [t, c] : d.changes) {
      if (c == 0) continue;
      auto& slot = m[t];
      slot += c;
      if (slot == 0) m.erase(t);
    }
  }
  RuleProgram next = next_program ? *next_program : program_;
  return update(store, next, std::move(base));
}

UpdateDelta Grounder::update(Store& store, const RuleProgram& next,
                             BaseChanges base) {
  store_ = &store;
  const RuleProgram empty;
  const RuleProgram& old = grounded_ ? program_ : empty;
  ProgramDelta pd = diff_programs(old, next);

  for (const auto& s : next.relations) {
    const RelationSchema* o = old.find_relation(s.name);
    if (o && !(*o == s)) {
      throw SchemaError("relation " + s.name + " changed its schema");
    }
    if (store.has(s.name) && store.relation(s.name).arity() != s.arity()) {
      throw SchemaError("relation " + s.name + " has arity " +
                        std::to_string(s.arity()) + " in the program but " +
                        std::to_string(store.relation(s.name).arity()) +
                        " in the store");
    }
  }
  for (const auto& s : next.relations) {
    if (old.find_relation(s.name)) continue;
    views_.erase(s.name);
    views_.emplace(s.name, Relation(s));
    auto& b = base[s.name];
    b.clear();
    if (store.has(s.name)) {
      store.relation(s.name).for_each(
          [&](const Tuple& t, std::int64_t c) { b[t] = c; });
    }
  }

  const std::set<std::string> old_var_rels = variable_relations_;
  const std::set<std::string> next_var_rels = variable_relations(next);

  // Old rules compile against the old variable set; `literal` is unused for
  // them, but head and key layouts must match what was stored.
  std::map<std::string, Compiled> old_c, next_c;
  for (const auto& r : old.rules) old_c.emplace(r.id, compile(r));
  variable_relations_ = next_var_rels;
  evidence_relations_.clear();
  for (const auto& s : next.relations) {
    if (s.kind == RelationKind::kEvidence) evidence_relations_.insert(s.name);
  }
  for (const auto& r : next.rules) next_c.emplace(r.id, compile(r));

  std::set<std::string> unwind(pd.removed_rules.begin(),
                               pd.removed_rules.end());
  unwind.insert(pd.modified_rules.begin(), pd.modified_rules.end());
  std::set<std::string> fresh(pd.added_rules.begin(), pd.added_rules.end());
  fresh.insert(pd.modified_rules.begin(), pd.modified_rules.end());

  std::map<std::string, std::map<Tuple, std::set<Binding>>> old_bindings;
  for (const auto& id : unwind) {
    auto it = bindings_.find(id);
    if (it == bindings_.end()) continue;
    old_bindings[id] = std::move(it->second);
    bindings_.erase(it);
  }

  std::set<FactorKey> affected;
  std::vector<std::string> order = relation_order(next);
  for (const auto& s : old.relations) {
    if (!next.find_relation(s.name)) order.push_back(s.name);
  }

  presence_.clear();
  for (const auto& rel : order) {
    std::map<Tuple, std::int64_t> change;
    if (auto it = base.find(rel); it != base.end()) change = it->second;

    for (const auto& r : old.rules) {
      if (r.head.predicate != rel || !unwind.count(r.id)) continue;
      const Compiled& c = old_c.at(r.id);
      for (const auto& [g, bs] : old_bindings[r.id]) {
        if (c.weighted) affected.insert({r.id, g});
        if (r.is_prior()) continue;
        for (const auto& b : bs) change[head_tuple(c, b)] -= 1;
      }
    }

    for (const auto& r : next.rules) {
      if (r.head.predicate != rel || r.is_prior()) continue;
      const Compiled& c = next_c.at(r.id);
      auto& groups = bindings_[r.id];
      auto gain = [&](const Binding& b) {
        Tuple g = group_key(c, b);
        if (!groups[g].insert(b).second) {
          throw std::logic_error("binding gained twice");
        }
        change[head_tuple(c, b)] += 1;
        if (c.weighted) affected.insert({r.id, std::move(g)});
      };
      auto lose = [&](const Binding& b) {
        Tuple g = group_key(c, b);
        auto it = groups.find(g);
        if (it == groups.end() || !it->second.erase(b)) {
          throw std::logic_error("lost a binding that was never derived");
        }
        if (it->second.empty()) groups.erase(it);
        change[head_tuple(c, b)] -= 1;
        if (c.weighted) affected.insert({r.id, std::move(g)});
      };
      if (fresh.count(r.id)) {
        std::vector<AtomState> all(r.body.size(), AtomState::kNew);
        join(c, all, [&](const Binding& b, int) { gain(b); });
      } else {
        std::map<Binding, int> net;
        for (const auto& d : delta_rules(r)) {
          auto it = presence_.find(r.body[d.delta_atom].predicate);
          if (it == presence_.end() || it->second.empty()) continue;
          join(c, d.states, [&](const Binding& b, int s) { net[b] += s; });
        }
        for (const auto& [b, s] : net) {
          if (s == 1) {
            gain(b);
          } else if (s == -1) {
            lose(b);
          } else if (s != 0) {
            throw std::logic_error("delta rules produced a multiplicity");
          }
        }
      }
      if (groups.empty()) bindings_.erase(r.id);
    }

    Relation& v = views_.at(rel);
    Presence& p = presence_[rel];
    for (const auto& [t, c] : change) {
      if (c == 0) continue;
      std::int64_t before = v.count(t);
      std::int64_t after = v.add(t, c);
      if (before == 0 && after > 0) p.added.insert(t);
      if (before > 0 && after == 0) p.removed.insert(t);
    }

    for (const auto& r : next.rules) {
      if (r.head.predicate != rel || !r.is_prior()) continue;
      const Compiled& c = next_c.at(r.id);
      auto& groups = bindings_[r.id];
      Binding b;
      auto touch = [&](const Tuple& t, bool gained) {
        if (!match_head(c, t, &b)) return;
        ++tuple_scans_;
        Tuple g = group_key(c, b);
        if (gained) {
          groups[g].insert(b);
        } else {
          auto it = groups.find(g);
          if (it != groups.end()) {
            it->second.erase(b);
            if (it->second.empty()) groups.erase(it);
          }
        }
        affected.insert({r.id, std::move(g)});
      };
      if (fresh.count(r.id)) {
        v.for_each([&](const Tuple& t, std::int64_t) { touch(t, true); });
      } else {
        for (const auto& t : p.added) touch(t, true);
        for (const auto& t : p.removed) touch(t, false);
      }
      if (groups.empty()) bindings_.erase(r.id);
    }
  }

  // --- graph delta -------------------------------------------------------
  UpdateDelta d;
  d.base_variables = graph_.num_variables();
  d.base_factors = graph_.num_factors();
  d.base_weights = graph_.num_weights();
  d.base_fingerprint = fingerprint(graph_);

  std::map<VarKey, VarId> new_var_uid;
  std::set<VarId> removed_vars;
  auto add_var = [&](const std::string& rel, const Tuple& t) {
    VarId uid = static_cast<VarId>(d.base_variables + d.new_vars.size());
    new_var_uid.emplace(VarKey{rel, t}, uid);
    d.new_vars.push_back({role_of(rel, t), rel, store.symbols().names(t)});
  };
  for (const auto& rel : order) {
    bool was = old_var_rels.count(rel) > 0;
    bool is = next_var_rels.count(rel) > 0;
    const Presence& p = presence_[rel];
    if (was && is) {
      for (const auto& t : p.removed) removed_vars.insert(var_ids_.at({rel, t}));
      for (const auto& t : p.added) add_var(rel, t);
    } else if (is) {
      views_.at(rel).for_each(
          [&](const Tuple& t, std::int64_t) { add_var(rel, t); });
    } else if (was) {
      for (auto it = var_ids_.lower_bound({rel, {}});
           it != var_ids_.end() && it->first.relation == rel; ++it) {
        removed_vars.insert(it->second);
      }
    }
  }
  d.removed_vars.assign(removed_vars.begin(), removed_vars.end());

  std::set<VarKey> role_candidates;
  for (std::size_t i = label_log_pos_; i < store.label_log().size(); ++i) {
    const LabelEvent& e = store.label_log()[i];
    role_candidates.insert({e.relation, e.tuple});
  }
  for (const auto& [rel, changes] : base) {
    for (const auto& [t, c] : changes) role_candidates.insert({rel, t});
  }
  for (const auto& [rel, p] : presence_) {
    auto target = evidence_target(rel);
    if (!target || !evidence_relations_.count(rel)) continue;
    for (const auto* set : {&p.added, &p.removed}) {
      for (const auto& t : *set) {
        role_candidates.insert({*target, Tuple(t.begin(), t.end() - 1)});
      }
    }
  }
  for (const auto& k : role_candidates) {
    auto it = var_ids_.find(k);
    if (it == var_ids_.end() || removed_vars.count(it->second)) continue;
    Role r = role_of(k.relation, k.tuple);
    if (r != graph_.variable(it->second).role) {
      d.role_changes.emplace_back(it->second, r);
    }
  }
  std::sort(d.role_changes.begin(), d.role_changes.end());

  auto uid = [&](const std::string& rel, const Tuple& t) -> VarId {
    VarKey k{rel, t};
    if (auto it = new_var_uid.find(k); it != new_var_uid.end()) {
      return it->second;
    }
    return var_ids_.at(k);
  };

  std::vector<std::size_t> refs = weight_refs_;
  std::vector<FactorKey> removed_keys;
  for (const auto& fk : affected) {
    if (auto it = factor_ids_.find(fk); it != factor_ids_.end()) {
      d.removed_factors.push_back(it->second);
      --refs[graph_.factor(it->second).weight];
      removed_keys.push_back(fk);
    }
  }
  std::sort(d.removed_factors.begin(), d.removed_factors.end());

  std::map<WeightKey, WeightId> new_weight_uid;
  std::vector<WeightKey> new_weight_keys;
  std::vector<std::size_t> new_refs;
  std::vector<FactorKey> new_factor_keys;
  for (const auto& fk : affected) {
    auto cit = next_c.find(fk.rule);
    if (cit == next_c.end() || !cit->second.weighted) continue;
    auto rit = bindings_.find(fk.rule);
    if (rit == bindings_.end()) continue;
    auto git = rit->second.find(fk.key);
    if (git == rit->second.end() || git->second.empty()) continue;
    const Compiled& c = cit->second;
    const Rule& r = *c.rule;
    Factor f;
    f.rule = r.id;
    f.semantics = r.semantics;
    f.head = uid(r.head.predicate, head_tuple(c, *git->second.begin()));
    for (const auto& b : git->second) {
      Grounding lits;
      for (std::size_t a = 0; a < r.body.size(); ++a) {
        if (!c.literal[a]) continue;
        Tuple t;
        for (auto code : c.body[a]) {
          t.push_back(code >= 0 ? b[code] : code_const(code));
        }
        lits.push_back({uid(r.body[a].predicate, t), true});
      }
      f.groundings.push_back(std::move(lits));
    }
    WeightKey wk = weight_key(c, fk.key);
    if (auto it = weight_ids_.find(wk); it != weight_ids_.end()) {
      f.weight = it->second;
      ++refs[it->second];
    } else if (auto it2 = new_weight_uid.find(wk);
               it2 != new_weight_uid.end()) {
      f.weight = it2->second;
      ++new_refs[it2->second - d.base_weights];
    } else {
      f.weight = static_cast<WeightId>(d.base_weights + d.new_weights.size());
      new_weight_uid.emplace(wk, f.weight);
      new_weight_keys.push_back(wk);
      new_refs.push_back(1);
      d.new_weights.push_back(weight_param(c, fk.key));
    }
    d.new_factors.push_back(std::move(f));
    new_factor_keys.push_back(fk);
  }

  for (WeightId w = 0; w < refs.size(); ++w) {
    if (refs[w] == 0) {
      d.removed_weights.push_back(w);
      continue;
    }
    const std::string& id =
        weight_keys_[w].first.substr(0, weight_keys_[w].first.find('\x1f'));
    auto cit = next_c.find(id);
    if (cit == next_c.end()) continue;
    const WeightSpec& spec = *cit->second.rule->weight;
    double value = spec.kind == WeightSpec::Kind::kTied ? 0.0 : spec.value;
    const Rule* before = old.find_rule(id);
    bool respecified = before && before->weight &&
                       before->weight->value != spec.value;
    if (respecified && graph_.weight(w).value != value) {
      d.weight_changes[w] = {graph_.weight(w).value, value};
    }
  }

  // --- apply and remap ---------------------------------------------------
  AppliedDelta ad = apply_delta(graph_, d);

  std::map<VarKey, VarId> var_ids;
  for (const auto& [k, id] : var_ids_) {
    if (ad.var_map[id] != kRemoved) var_ids.emplace(k, ad.var_map[id]);
  }
  for (const auto& [k, u] : new_var_uid) var_ids.emplace(k, ad.var_map[u]);
  var_ids_ = std::move(var_ids);

  for (const auto& k : removed_keys) factor_ids_.erase(k);
  for (auto& [k, id] : factor_ids_) id = ad.factor_map[id];
  for (std::size_t i = 0; i < new_factor_keys.size(); ++i) {
    factor_ids_[new_factor_keys[i]] = ad.factor_map[d.base_factors + i];
  }

  std::vector<WeightKey> keys(ad.graph.num_weights());
  std::vector<std::size_t> counts(ad.graph.num_weights(), 0);
  for (WeightId w = 0; w < weight_keys_.size(); ++w) {
    if (ad.weight_map[w] == kRemoved) continue;
    keys[ad.weight_map[w]] = weight_keys_[w];
    counts[ad.weight_map[w]] = refs[w];
  }
  for (std::size_t i = 0; i < new_weight_keys.size(); ++i) {
    WeightId w = ad.weight_map[d.base_weights + i];
    keys[w] = new_weight_keys[i];
    counts[w] = new_refs[i];
  }
  weight_keys_ = std::move(keys);
  weight_refs_ = std::move(counts);
  weight_ids_.clear();
  for (WeightId w = 0; w < weight_keys_.size(); ++w) {
    weight_ids_.emplace(weight_keys_[w], w);
  }

  graph_ = std::move(ad.graph);
  program_ = next;
  label_log_pos_ = store.label_log().size();
  grounded_ = true;
  return d;
}

FactorGraph ground(const RuleProgram& program, Store& store) {
  Grounder g(program);
  return g.ground(store);
}

// ---------------------------------------------------------------------------

AppliedDelta apply_delta(const FactorGraph& before, const UpdateDelta& delta) {
  if (delta.base_variables != before.num_variables() ||
      delta.base_factors != before.num_factors() ||
      delta.base_weights != before.num_weights()) {
    throw InputError("update delta does not match the graph it is applied to");
  }
  AppliedDelta out;
  const std::size_t nv = before.num_variables() + delta.new_vars.size();
  const std::size_t nf = before.num_factors() + delta.new_factors.size();
  const std::size_t nw = before.num_weights() + delta.new_weights.size();
  out.var_map.assign(nv, kRemoved);
  out.factor_map.assign(nf, kRemoved);
  out.weight_map.assign(nw, kRemoved);

  std::vector<bool> var_gone(before.num_variables(), false);
  for (VarId v : delta.removed_vars) var_gone.at(v) = true;
  std::vector<bool> factor_gone(before.num_factors(), false);
  for (FactorId f : delta.removed_factors) factor_gone.at(f) = true;
  std::vector<bool> weight_gone(before.num_weights(), false);
  for (WeightId w : delta.removed_weights) weight_gone.at(w) = true;

  std::vector<Role> roles(before.num_variables());
  for (VarId v = 0; v < before.num_variables(); ++v) {
    roles[v] = before.variable(v).role;
  }
  for (const auto& [v, r] : delta.role_changes) roles.at(v) = r;

  FactorGraph& g = out.graph;
  for (VarId v = 0; v < before.num_variables(); ++v) {
    if (var_gone[v]) continue;
    Variable var = before.variable(v);
    var.role = roles[v];
    out.var_map[v] = g.add_variable(std::move(var));
  }
  for (std::size_t i = 0; i < delta.new_vars.size(); ++i) {
    out.var_map[before.num_variables() + i] =
        g.add_variable(delta.new_vars[i]);
  }
  for (WeightId w = 0; w < before.num_weights(); ++w) {
    if (weight_gone[w]) continue;
    WeightParam p = before.weight(w);
    if (auto it = delta.weight_changes.find(w);
        it != delta.weight_changes.end()) {
      p.value = it->second.second;
    }
    out.weight_map[w] = g.add_weight(std::move(p));
  }
  for (std::size_t i = 0; i < delta.new_weights.size(); ++i) {
    out.weight_map[before.num_weights() + i] =
        g.add_weight(delta.new_weights[i]);
  }

  auto remap = [&](Factor f) {
    auto var = [&](VarId v) {
      if (v >= nv || out.var_map[v] == kRemoved) {
        throw InputError("factor refers to a removed or unknown variable");
      }
      return out.var_map[v];
    };
    if (f.head) f.head = var(*f.head);
    for (auto& gr : f.groundings) {
      for (auto& l : gr) l.var = var(l.var);
    }
    if (f.weight >= nw || out.weight_map[f.weight] == kRemoved) {
      throw InputError("factor refers to a removed or unknown weight");
    }
    f.weight = out.weight_map[f.weight];
    return f;
  };
  for (FactorId f = 0; f < before.num_factors(); ++f) {
    if (factor_gone[f]) continue;
    out.factor_map[f] = g.add_factor(remap(before.factor(f)));
  }
  for (std::size_t i = 0; i < delta.new_factors.size(); ++i) {
    out.factor_map[before.num_factors() + i] =
        g.add_factor(remap(delta.new_factors[i]));
  }
  return out;
}

FactorGraph canonicalize(const FactorGraph& graph) {
  const std::size_t nv = graph.num_variables();
  std::vector<VarId> vperm(nv);
  std::iota(vperm.begin(), vperm.end(), 0);
  std::sort(vperm.begin(), vperm.end(), [&](VarId a, VarId b) {
    const Variable& x = graph.variable(a);
    const Variable& y = graph.variable(b);
    return std::tie(x.relation, x.tuple, x.role) <
           std::tie(y.relation, y.tuple, y.role);
  });
  std::vector<VarId> vpos(nv);
  for (VarId i = 0; i < nv; ++i) vpos[vperm[i]] = i;

  std::vector<WeightId> wperm(graph.num_weights());
  std::iota(wperm.begin(), wperm.end(), 0);
  std::sort(wperm.begin(), wperm.end(), [&](WeightId a, WeightId b) {
    const WeightParam& x = graph.weight(a);
    const WeightParam& y = graph.weight(b);
    return std::tie(x.description, x.fixed, x.value) <
           std::tie(y.description, y.fixed, y.value);
  });
  std::vector<WeightId> wpos(wperm.size());
  for (WeightId i = 0; i < wperm.size(); ++i) wpos[wperm[i]] = i;

  std::vector<Factor> factors;
  for (const auto& f0 : graph.factors()) {
    Factor f = f0;
    if (f.head) f.head = vpos[*f.head];
    for (auto& gr : f.groundings) {
      for (auto& l : gr) l.var = vpos[l.var];
    }
    std::sort(f.groundings.begin(), f.groundings.end());
    f.weight = wpos[f.weight];
    factors.push_back(std::move(f));
  }
  auto fkey = [](const Factor& f) {
    return std::make_tuple(std::cref(f.rule),
                           f.head ? static_cast<std::int64_t>(*f.head) : -1,
                           std::cref(f.groundings), f.weight, f.semantics);
  };
  std::sort(factors.begin(), factors.end(),
            [&](const Factor& a, const Factor& b) { return fkey(a) < fkey(b); });

  FactorGraph out;
  for (VarId v : vperm) out.add_variable(graph.variable(v));
  for (WeightId w : wperm) out.add_weight(graph.weight(w));
  for (auto& f : factors) out.add_factor(std::move(f));
  return out;
}

// ---------------------------------------------------------------------------

namespace {

using nlohmann::json;

json role_json(Role r) {
  if (r == Role::kEvidencePositive) return true;
  if (r == Role::kEvidenceNegative) return false;
  return nullptr;
}

Role json_role(const json& j) {
  if (j.is_null()) return Role::kQuery;
  return j.get<bool>() ? Role::kEvidencePositive : Role::kEvidenceNegative;
}

}  // namespace

void write_delta(std::ostream& out, const UpdateDelta& d) {
  json j;
  j["base"] = {{"variables", d.base_variables},
               {"factors", d.base_factors},
               {"weights", d.base_weights},
               {"fingerprint", d.base_fingerprint}};
  json vars = json::array();
  for (const auto& v : d.new_vars) {
    vars.push_back({{"rel", v.relation}, {"tuple", v.tuple},
                    {"ev", role_json(v.role)}});
  }
  j["new_vars"] = vars;
  json removed = json::array();
  for (VarId v : d.removed_vars) removed.push_back(v + 1);
  j["removed_vars"] = removed;
  json roles = json::array();
  for (const auto& [v, r] : d.role_changes) {
    roles.push_back({{"v", v + 1}, {"ev", role_json(r)}});
  }
  j["role_changes"] = roles;
  json factors = json::array();
  for (const auto& f : d.new_factors) {
    json gs = json::array();
    for (const auto& g : f.groundings) {
      json lits = json::array();
      for (const auto& l : g) {
        auto id = static_cast<std::int64_t>(l.var) + 1;
        lits.push_back(l.positive ? id : -id);
      }
      gs.push_back(lits);
    }
    factors.push_back({{"rule", f.rule},
                       {"head", f.head ? json(*f.head + 1) : json(nullptr)},
                       {"groundings", gs},
                       {"w", f.weight},
                       {"g", std::string(to_string(f.semantics))}});
  }
  j["new_factors"] = factors;
  j["removed_factors"] = d.removed_factors;
  json weights = json::array();
  for (const auto& w : d.new_weights) {
    weights.push_back(
        {{"val", w.value}, {"fixed", w.fixed}, {"desc", w.description}});
  }
  j["new_weights"] = weights;
  j["removed_weights"] = d.removed_weights;
  json changes = json::array();
  for (const auto& [w, c] : d.weight_changes) {
    changes.push_back({{"wid", w}, {"old", c.first}, {"new", c.second}});
  }
  j["weight_changes"] = changes;
  out << j.dump(1) << '\n';
}

UpdateDelta read_delta(std::istream& in) {
  UpdateDelta d;
  try {
    json j = json::parse(in);
    const json& base = j.at("base");
    d.base_variables = base.at("variables").get<std::size_t>();
    d.base_factors = base.at("factors").get<std::size_t>();
    d.base_weights = base.at("weights").get<std::size_t>();
    d.base_fingerprint = base.at("fingerprint").get<std::string>();
    for (const auto& v : j.at("new_vars")) {
      d.new_vars.push_back({json_role(v.at("ev")), v.at("rel").get<std::string>(),
                            v.at("tuple").get<std::vector<std::string>>()});
    }
    for (const auto& v : j.at("removed_vars")) {
      d.removed_vars.push_back(v.get<VarId>() - 1);
    }
    for (const auto& r : j.at("role_changes")) {
      d.role_changes.emplace_back(r.at("v").get<VarId>() - 1,
                                  json_role(r.at("ev")));
    }
    for (const auto& fj : j.at("new_factors")) {
      Factor f;
      f.rule = fj.at("rule").get<std::string>();
      if (!fj.at("head").is_null()) f.head = fj["head"].get<VarId>() - 1;
      for (const auto& gj : fj.at("groundings")) {
        Grounding g;
        for (const auto& l : gj) {
          auto s = l.get<std::int64_t>();
          g.push_back({static_cast<VarId>((s < 0 ? -s : s) - 1), s > 0});
        }
        f.groundings.push_back(std::move(g));
      }
      f.weight = fj.at("w").get<WeightId>();
      auto sem = parse_semantics(fj.at("g").get<std::string>());
      if (!sem) throw InputError("unknown semantics in delta");
      f.semantics = *sem;
      d.new_factors.push_back(std::move(f));
    }
    d.removed_factors = j.at("removed_factors").get<std::vector<FactorId>>();
    for (const auto& w : j.at("new_weights")) {
      d.new_weights.push_back({w.at("val").get<double>(),
                               w.at("fixed").get<bool>(),
                               w.at("desc").get<std::string>()});
    }
    d.removed_weights = j.at("removed_weights").get<std::vector<WeightId>>();
    for (const auto& c : j.at("weight_changes")) {
      d.weight_changes[c.at("wid").get<WeightId>()] = {
          c.at("old").get<double>(), c.at("new").get<double>()};
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed update delta: ") + e.what());
  }
  return d;
}

}  // namespace ddinc
