#pragma once

// In-memory relational store. Every tuple carries a derivation count
// (multiset semantics) and an optional evidence label. Mutations report the
// applied change as a DeltaRelation so that incremental grounding can work
// from deltas alone.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ddinc/common.h"

namespace ddinc {

using ConstId = std::uint32_t;
using Tuple = std::vector<ConstId>;

struct TupleHash {
  std::size_t operator()(const Tuple& t) const noexcept {
    std::uint64_t h = 1469598103934665603ull;
    for (ConstId c : t) {
      h ^= c;
      h *= 1099511628211ull;
    }
    return static_cast<std::size_t>(h);
  }
};

// Interned constants of the active domain.
class SymbolTable {
 public:
  ConstId intern(std::string_view s);
  std::optional<ConstId> find(std::string_view s) const;
  const std::string& name(ConstId id) const { return names_.at(id); }
  std::size_t size() const { return names_.size(); }

  Tuple tuple(std::span<const std::string> values);
  std::vector<std::string> names(const Tuple& t) const;

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, ConstId> ids_;
};

enum class RelationKind : std::uint8_t { kEDB, kIDB, kEvidence };

std::string_view to_string(RelationKind k);
std::optional<RelationKind> parse_relation_kind(std::string_view s);

struct RelationSchema {
  std::string name;
  std::vector<std::string> columns;
  RelationKind kind = RelationKind::kEDB;

  std::size_t arity() const { return columns.size(); }
  bool operator==(const RelationSchema&) const = default;
};

// Relations named "<X>_Ev" of kind Evidence carry labels for X: their last
// column holds "true" or "false". Returns X for such names.
std::optional<std::string> evidence_target(std::string_view relation_name);

struct TupleRecord {
  Tuple values;
  std::int64_t count = 0;
  std::optional<Label> evidence_label;
};

// Signed count changes against one relation.
struct DeltaRelation {
  std::string base;
  std::vector<std::pair<Tuple, std::int64_t>> changes;

  bool empty() const { return changes.empty(); }
  DeltaRelation negated() const;
};

class Relation {
 public:
  explicit Relation(RelationSchema schema);

  const RelationSchema& schema() const { return schema_; }
  const std::string& name() const { return schema_.name; }
  std::size_t arity() const { return schema_.arity(); }
  std::size_t size() const { return entries_.size(); }

  std::int64_t count(const Tuple& t) const;
  bool contains(const Tuple& t) const { return count(t) > 0; }
  std::optional<Label> label(const Tuple& t) const;

  std::vector<TupleRecord> records() const;

  template <typename Fn>
  void for_each(Fn&& fn) const {
    for (const auto& [t, e] : entries_) fn(t, e.count);
  }

  // Adds `delta` to the count of `t`; a tuple reaching zero is removed along
  // with its label. Throws InputError if the count would go negative.
  std::int64_t add(const Tuple& t, std::int64_t delta);
  void set_label(const Tuple& t, Label label);

  // Present tuples whose columns selected by `mask` (bit i = column i) equal
  // `key` (the selected values in column order). The index for a mask is
  // built on first use and maintained by add() afterwards.
  const std::set<Tuple>& lookup(std::uint32_t mask, const Tuple& key) const;

 private:
  struct Entry {
    std::int64_t count = 0;
    std::optional<Label> label;
  };
  using Index = std::unordered_map<Tuple, std::set<Tuple>, TupleHash>;

  Tuple project(std::uint32_t mask, const Tuple& t) const;
  void check_arity(const Tuple& t) const;

  RelationSchema schema_;
  std::map<Tuple, Entry> entries_;
  mutable std::map<std::uint32_t, Index> indexes_;
};

struct LabelEvent {
  std::string relation;
  Tuple tuple;
  Label label;
};

// Single writer, many readers. Lookup indexes are built lazily, so concurrent
// readers must first warm the indexes they need or hold a private copy.
class Store {
 public:
  SymbolTable& symbols() { return symbols_; }
  const SymbolTable& symbols() const { return symbols_; }

  // Declares a relation; redeclaring with an identical schema is a no-op.
  Relation& declare(const RelationSchema& schema);
  bool has(std::string_view name) const;
  const Relation& relation(std::string_view name) const;
  Relation& relation(std::string_view name);
  const std::vector<std::string>& relation_names() const { return order_; }

  DeltaRelation insert_tuples(std::string_view relation,
                              std::span<const Tuple> tuples);
  DeltaRelation delete_tuples(std::string_view relation,
                              std::span<const Tuple> tuples);
  // Applies signed changes atomically: nothing changes if any count would
  // become negative.
  void apply(const DeltaRelation& delta);

  // Labels a tuple as evidence, inserting it when absent. Returns the count
  // change made by the insertion (empty if the tuple already existed).
  DeltaRelation mark_evidence(std::string_view relation, const Tuple& tuple,
                              Label label);
  const std::vector<LabelEvent>& label_log() const { return label_log_; }

  // Convenience: interns the values and builds a tuple.
  Tuple tuple(std::initializer_list<std::string_view> values);

  bool operator==(const Store& other) const;

 private:
  SymbolTable symbols_;
  std::map<std::string, Relation, std::less<>> relations_;
  std::vector<std::string> order_;
  std::vector<LabelEvent> label_log_;
};

// TSV relation files: a header line
//   #relation <name>(<col>,...) kind=<EDB|IDB|Evidence>
// followed by tab-separated rows, each optionally ending with "@count=<n>"
// (signed; negative rows delete) and "@label=<pos|neg>". A zero-arity tuple
// is written as "()".
struct TsvRow {
  std::vector<std::string> values;
  std::int64_t count = 1;
  std::optional<Label> label;
  int line = 0;
};

struct TsvRelation {
  RelationSchema schema;
  std::vector<TsvRow> rows;
};

TsvRelation read_tsv(std::istream& in, const std::string& source = "<tsv>");
TsvRelation read_tsv_file(const std::filesystem::path& path);
void write_tsv(std::ostream& out, const Store& store, const Relation& rel);

// Declares the relation and applies every row. Returns the count changes.
DeltaRelation load_tsv(Store& store, const TsvRelation& tsv);

// Loads every *.tsv file of a directory in lexicographic order.
std::vector<DeltaRelation> load_store_dir(Store& store,
                                          const std::filesystem::path& dir);
void dump_store_dir(const Store& store, const std::filesystem::path& dir);

}  // namespace ddinc
