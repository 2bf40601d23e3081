#include "ddinc/relstore.h"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace ddinc {

std::string_view to_string(Semantics s) {
  switch (s) {
    case Semantics::kLinear: return "linear";
    case Semantics::kRatio: return "ratio";
    case Semantics::kLogical: return "logical";
  }
  return "linear";
}

std::optional<Semantics> parse_semantics(std::string_view s) {
  if (s == "linear") return Semantics::kLinear;
  if (s == "ratio") return Semantics::kRatio;
  if (s == "logical") return Semantics::kLogical;
  return std::nullopt;
}

std::string_view to_string(RelationKind k) {
  switch (k) {
    case RelationKind::kEDB: return "EDB";
    case RelationKind::kIDB: return "IDB";
    case RelationKind::kEvidence: return "Evidence";
  }
  return "EDB";
}

std::optional<RelationKind> parse_relation_kind(std::string_view s) {
  std::string lower(s);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  if (lower == "edb") return RelationKind::kEDB;
  if (lower == "idb") return RelationKind::kIDB;
  if (lower == "evidence") return RelationKind::kEvidence;
  return std::nullopt;
}

std::optional<std::string> evidence_target(std::string_view name) {
  constexpr std::string_view kSuffix = "_Ev";
  if (name.size() <= kSuffix.size() || !name.ends_with(kSuffix)) {
    return std::nullopt;
  }
  return std::string(name.substr(0, name.size() - kSuffix.size()));
}

// ---------------------------------------------------------------------------

ConstId SymbolTable::intern(std::string_view s) {
  auto it = ids_.find(std::string(s));
  if (it != ids_.end()) return it->second;
  ConstId id = static_cast<ConstId>(names_.size());
  names_.emplace_back(s);
  ids_.emplace(names_.back(), id);
  return id;
}

std::optional<ConstId> SymbolTable::find(std::string_view s) const {
  auto it = ids_.find(std::string(s));
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

Tuple SymbolTable::tuple(std::span<const std::string> values) {
  Tuple t;
  t.reserve(values.size());
  for (const auto& v : values) t.push_back(intern(v));
  return t;
}

std::vector<std::string> SymbolTable::names(const Tuple& t) const {
  std::vector<std::string> out;
  out.reserve(t.size());
  for (ConstId c : t) out.push_back(name(c));
  return out;
}

DeltaRelation DeltaRelation::negated() const {
  DeltaRelation out{base, changes};
  for (auto& [t, c] : out.changes) c = -c;
  return out;
}

// ---------------------------------------------------------------------------

Relation::Relation(RelationSchema schema) : schema_(std::move(schema)) {}

void Relation::check_arity(const Tuple& t) const {
  if (t.size() != arity()) {
    throw InputError("arity mismatch for relation " + name() + ": expected " +
                     std::to_string(arity()) + " values, got " +
                     std::to_string(t.size()));
  }
}

std::int64_t Relation::count(const Tuple& t) const {
  auto it = entries_.find(t);
  return it == entries_.end() ? 0 : it->second.count;
}

std::optional<Label> Relation::label(const Tuple& t) const {
  auto it = entries_.find(t);
  if (it == entries_.end()) return std::nullopt;
  return it->second.label;
}

std::vector<TupleRecord> Relation::records() const {
  std::vector<TupleRecord> out;
  out.reserve(entries_.size());
  for (const auto& [t, e] : entries_) out.push_back({t, e.count, e.label});
  return out;
}

Tuple Relation::project(std::uint32_t mask, const Tuple& t) const {
  Tuple key;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (mask & (1u << i)) key.push_back(t[i]);
  }
  return key;
}

std::int64_t Relation::add(const Tuple& t, std::int64_t delta) {
  check_arity(t);
  if (delta == 0) return count(t);
  auto it = entries_.find(t);
  std::int64_t before = it == entries_.end() ? 0 : it->second.count;
  std::int64_t after = before + delta;
  if (after < 0) {
    throw InputError("deletion below zero count in relation " + name());
  }
  if (after == 0) {
    Tuple key = t;  // `t` may alias the erased entry
    entries_.erase(it);
    for (auto& [mask, index] : indexes_) {
      auto bucket = index.find(project(mask, key));
      if (bucket != index.end()) {
        bucket->second.erase(key);
        if (bucket->second.empty()) index.erase(bucket);
      }
    }
  } else if (before == 0) {
    entries_.emplace(t, Entry{after, std::nullopt});
    for (auto& [mask, index] : indexes_) index[project(mask, t)].insert(t);
  } else {
    it->second.count = after;
  }
  return after;
}

void Relation::set_label(const Tuple& t, Label label) {
  auto it = entries_.find(t);
  if (it == entries_.end()) {
    throw InputError("cannot label absent tuple in relation " + name());
  }
  if (it->second.label && *it->second.label != label) {
    throw InputError("conflicting evidence label on a tuple of relation " +
                     name());
  }
  it->second.label = label;
}

const std::set<Tuple>& Relation::lookup(std::uint32_t mask,
                                        const Tuple& key) const {
  static const std::set<Tuple> kEmpty;
  auto [it, inserted] = indexes_.try_emplace(mask);
  Index& index = it->second;
  if (inserted) {
    for (const auto& [t, e] : entries_) index[project(mask, t)].insert(t);
  }
  auto bucket = index.find(key);
  return bucket == index.end() ? kEmpty : bucket->second;
}

// ---------------------------------------------------------------------------

Relation& Store::declare(const RelationSchema& schema) {
  auto it = relations_.find(schema.name);
  if (it != relations_.end()) {
    if (!(it->second.schema() == schema)) {
      throw SchemaError("relation " + schema.name +
                        " redeclared with a different schema");
    }
    return it->second;
  }
  order_.push_back(schema.name);
  return relations_.emplace(schema.name, Relation(schema)).first->second;
}

bool Store::has(std::string_view name) const {
  return relations_.find(name) != relations_.end();
}

const Relation& Store::relation(std::string_view name) const {
  auto it = relations_.find(name);
  if (it == relations_.end()) {
    throw SchemaError("unknown relation " + std::string(name));
  }
  return it->second;
}

Relation& Store::relation(std::string_view name) {
  auto it = relations_.find(name);
  if (it == relations_.end()) {
    throw SchemaError("unknown relation " + std::string(name));
  }
  return it->second;
}

namespace {

DeltaRelation aggregate(std::string_view base, std::span<const Tuple> tuples,
                        std::int64_t sign) {
  DeltaRelation delta{std::string(base), {}};
  std::map<Tuple, std::size_t> slot;
  for (const Tuple& t : tuples) {
    auto [it, fresh] = slot.try_emplace(t, delta.changes.size());
    if (fresh) {
      delta.changes.emplace_back(t, sign);
    } else {
      delta.changes[it->second].second += sign;
    }
  }
  return delta;
}

}  // namespace

void Store::apply(const DeltaRelation& delta) {
  Relation& rel = relation(delta.base);
  // Validate before mutating so a failing batch leaves the store unchanged.
  std::map<Tuple, std::int64_t> net;
  for (const auto& [t, c] : delta.changes) {
    if (t.size() != rel.arity()) {
      throw InputError("arity mismatch for relation " + rel.name());
    }
    net[t] += c;
  }
  for (const auto& [t, c] : net) {
    if (rel.count(t) + c < 0) {
      throw InputError("deletion below zero count in relation " + rel.name());
    }
  }
  for (const auto& [t, c] : net) rel.add(t, c);
}

DeltaRelation Store::insert_tuples(std::string_view relation_name,
                                   std::span<const Tuple> tuples) {
  DeltaRelation delta = aggregate(relation_name, tuples, +1);
  apply(delta);
  return delta;
}

DeltaRelation Store::delete_tuples(std::string_view relation_name,
                                   std::span<const Tuple> tuples) {
  DeltaRelation delta = aggregate(relation_name, tuples, -1);
  apply(delta);
  return delta;
}

DeltaRelation Store::mark_evidence(std::string_view relation_name,
                                   const Tuple& tuple, Label label) {
  Relation& rel = relation(relation_name);
  if (tuple.size() != rel.arity()) {
    throw InputError("arity mismatch for relation " + rel.name());
  }
  auto existing = rel.label(tuple);
  if (existing && *existing != label) {
    throw InputError("conflicting evidence label on a tuple of relation " +
                     rel.name());
  }
  DeltaRelation delta{std::string(relation_name), {}};
  if (!rel.contains(tuple)) {
    rel.add(tuple, 1);
    delta.changes.emplace_back(tuple, 1);
  }
  if (!existing) {
    rel.set_label(tuple, label);
    label_log_.push_back({std::string(relation_name), tuple, label});
  }
  return delta;
}

Tuple Store::tuple(std::initializer_list<std::string_view> values) {
  Tuple t;
  for (auto v : values) t.push_back(symbols_.intern(v));
  return t;
}

bool Store::operator==(const Store& other) const {
  if (relations_.size() != other.relations_.size()) return false;
  for (const auto& [name, rel] : relations_) {
    if (!other.has(name)) return false;
    const Relation& o = other.relation(name);
    if (!(rel.schema() == o.schema()) || rel.size() != o.size()) return false;
    bool same = true;
    rel.for_each([&](const Tuple& t, std::int64_t c) {
      std::vector<std::string> names = symbols_.names(t);
      Tuple mapped;
      for (const auto& n : names) {
        auto id = other.symbols_.find(n);
        if (!id) {
          same = false;
          return;
        }
        mapped.push_back(*id);
      }
      if (o.count(mapped) != c || o.label(mapped) != rel.label(t)) {
        same = false;
      }
    });
    if (!same) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// TSV

namespace {

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.emplace_back(s.substr(start));
      return out;
    }
    out.emplace_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\r')) {
    s.remove_prefix(1);
  }
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

RelationSchema parse_header(std::string_view line, const std::string& source) {
  constexpr std::string_view kPrefix = "#relation ";
  if (!line.starts_with(kPrefix)) {
    throw InputError(source + ": expected '#relation <name>(<cols>) kind=<k>'",
                     1, 1);
  }
  line.remove_prefix(kPrefix.size());
  auto open = line.find('(');
  auto close = line.find(')');
  if (open == std::string_view::npos || close == std::string_view::npos ||
      close < open) {
    throw InputError(source + ": malformed relation header", 1, 1);
  }
  RelationSchema schema;
  schema.name = std::string(trim(line.substr(0, open)));
  if (schema.name.empty()) {
    throw InputError(source + ": missing relation name", 1, 1);
  }
  std::string_view cols = trim(line.substr(open + 1, close - open - 1));
  if (!cols.empty()) {
    for (auto& c : split(cols, ',')) {
      schema.columns.emplace_back(trim(c));
    }
  }
  std::string_view rest = trim(line.substr(close + 1));
  if (!rest.empty()) {
    if (!rest.starts_with("kind=")) {
      throw InputError(source + ": expected kind=<EDB|IDB|Evidence>", 1,
                       static_cast<int>(close + kPrefix.size() + 2));
    }
    auto kind = parse_relation_kind(rest.substr(5));
    if (!kind) {
      throw InputError(source + ": unknown relation kind '" +
                           std::string(rest.substr(5)) + "'",
                       1);
    }
    schema.kind = *kind;
  }
  return schema;
}

}  // namespace

TsvRelation read_tsv(std::istream& in, const std::string& source) {
  TsvRelation out;
  std::string line;
  if (!std::getline(in, line)) {
    throw InputError(source + ": empty file, expected a relation header", 1);
  }
  out.schema = parse_header(trim(line), source);
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view body = trim(line);
    if (body.empty()) continue;
    TsvRow row;
    row.line = lineno;
    std::vector<std::string> fields = split(body, '\t');
    while (!fields.empty() && fields.back().starts_with("@")) {
      std::string_view opt = fields.back();
      if (opt.starts_with("@count=")) {
        std::string_view num = opt.substr(7);
        std::int64_t value = 0;
        auto [ptr, ec] =
            std::from_chars(num.data(), num.data() + num.size(), value);
        if (ec != std::errc() || ptr != num.data() + num.size()) {
          throw InputError(source + ": bad @count value", lineno);
        }
        row.count = value;
      } else if (opt == "@label=pos") {
        row.label = Label::kPositive;
      } else if (opt == "@label=neg") {
        row.label = Label::kNegative;
      } else {
        throw InputError(source + ": unknown row option '" + std::string(opt) +
                             "'",
                         lineno);
      }
      fields.pop_back();
    }
    if (out.schema.arity() == 0) {
      if (!(fields.empty() || (fields.size() == 1 && fields[0] == "()"))) {
        throw InputError(source + ": zero-arity rows must be '()'", lineno);
      }
      fields.clear();
    }
    if (fields.size() != out.schema.arity()) {
      throw InputError(source + ": expected " +
                           std::to_string(out.schema.arity()) +
                           " fields, got " + std::to_string(fields.size()),
                       lineno);
    }
    row.values = std::move(fields);
    out.rows.push_back(std::move(row));
  }
  return out;
}

TsvRelation read_tsv_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  return read_tsv(in, path.string());
}

void write_tsv(std::ostream& out, const Store& store, const Relation& rel) {
  const auto& s = rel.schema();
  out << "#relation " << s.name << "(";
  for (std::size_t i = 0; i < s.columns.size(); ++i) {
    if (i) out << ",";
    out << s.columns[i];
  }
  out << ") kind=" << to_string(s.kind) << "\n";
  for (const auto& rec : rel.records()) {
    if (rec.values.empty()) {
      out << "()";
    } else {
      for (std::size_t i = 0; i < rec.values.size(); ++i) {
        if (i) out << "\t";
        out << store.symbols().name(rec.values[i]);
      }
    }
    if (rec.count != 1) out << "\t@count=" << rec.count;
    if (rec.evidence_label) {
      out << (*rec.evidence_label == Label::kPositive ? "\t@label=pos"
                                                      : "\t@label=neg");
    }
    out << "\n";
  }
}

DeltaRelation load_tsv(Store& store, const TsvRelation& tsv) {
  store.declare(tsv.schema);
  DeltaRelation delta{tsv.schema.name, {}};
  for (const auto& row : tsv.rows) {
    delta.changes.emplace_back(store.symbols().tuple(row.values), row.count);
  }
  try {
    store.apply(delta);
  } catch (const InputError& e) {
    throw InputError(tsv.schema.name + ": " + e.what());
  }
  for (const auto& row : tsv.rows) {
    if (!row.label) continue;
    try {
      DeltaRelation extra = store.mark_evidence(
          tsv.schema.name, store.symbols().tuple(row.values), *row.label);
      for (auto& c : extra.changes) delta.changes.push_back(c);
    } catch (const InputError& e) {
      throw InputError(tsv.schema.name + ": " + e.what(), row.line);
    }
  }
  return delta;
}

std::vector<DeltaRelation> load_store_dir(Store& store,
                                          const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw InputError("not a directory: " + dir.string());
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() == ".tsv") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<DeltaRelation> deltas;
  for (const auto& f : files) deltas.push_back(load_tsv(store, read_tsv_file(f)));
  return deltas;
}

void dump_store_dir(const Store& store, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& name : store.relation_names()) {
    std::ofstream out(dir / (name + ".tsv"));
    write_tsv(out, store, store.relation(name));
  }
}

}  // namespace ddinc
