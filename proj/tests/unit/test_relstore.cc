#include <doctest.h>

#include <sstream>

#include "ddinc/relstore.h"

using namespace ddinc;

TEST_CASE("relation counts follow signed changes") {
  Store s;
  s.declare({"R", {"a", "b"}, RelationKind::kEDB});
  Tuple t = s.tuple({"x", "1"});
  std::vector<Tuple> ts{t, t};
  DeltaRelation d = s.insert_tuples("R", ts);
  CHECK(s.relation("R").count(t) == 2);
  CHECK(d.base == "R");
  s.delete_tuples("R", std::vector<Tuple>{t});
  CHECK(s.relation("R").count(t) == 1);
  s.delete_tuples("R", std::vector<Tuple>{t});
  CHECK_FALSE(s.relation("R").contains(t));
  CHECK(s.relation("R").size() == 0);
  CHECK_THROWS_AS(s.delete_tuples("R", std::vector<Tuple>{t}), InputError);
}

TEST_CASE("apply is atomic") {
  Store s;
  s.declare({"R", {"a"}, RelationKind::kEDB});
  Tuple a = s.tuple({"a"}), b = s.tuple({"b"});
  s.insert_tuples("R", std::vector<Tuple>{a});
  DeltaRelation bad{"R", {{b, 1}, {a, -2}}};
  CHECK_THROWS_AS(s.apply(bad), InputError);
  CHECK(s.relation("R").count(a) == 1);
  CHECK_FALSE(s.relation("R").contains(b));
}

TEST_CASE("arity and schema errors") {
  Store s;
  s.declare({"R", {"a"}, RelationKind::kEDB});
  CHECK_NOTHROW(s.declare({"R", {"a"}, RelationKind::kEDB}));
  CHECK_THROWS_AS(s.declare({"R", {"a", "b"}, RelationKind::kEDB}), SchemaError);
  CHECK_THROWS_AS(s.insert_tuples("R", std::vector<Tuple>{s.tuple({"x", "y"})}),
                  InputError);
  CHECK_THROWS_AS(s.relation("missing"), SchemaError);
}

TEST_CASE("lookup index stays current after inserts and deletes") {
  Store s;
  s.declare({"R", {"a", "b"}, RelationKind::kEDB});
  Tuple t1 = s.tuple({"x", "1"}), t2 = s.tuple({"x", "2"}), t3 = s.tuple({"y", "1"});
  s.insert_tuples("R", std::vector<Tuple>{t1, t3});
  const Relation& r = s.relation("R");
  Tuple key{t1[0]};
  CHECK(r.lookup(1, key).size() == 1);
  s.insert_tuples("R", std::vector<Tuple>{t2});
  CHECK(r.lookup(1, key).size() == 2);
  s.delete_tuples("R", std::vector<Tuple>{t1});
  CHECK(r.lookup(1, key) == std::set<Tuple>{t2});
  CHECK(r.lookup(2, Tuple{t1[1]}) == std::set<Tuple>{t3});
}

TEST_CASE("evidence labels are logged and conflicts rejected") {
  Store s;
  s.declare({"Q", {"a"}, RelationKind::kIDB});
  Tuple t = s.tuple({"x"});
  DeltaRelation d = s.mark_evidence("Q", t, Label::kPositive);
  CHECK(d.changes.size() == 1);
  CHECK(s.relation("Q").label(t) == Label::kPositive);
  CHECK(s.mark_evidence("Q", t, Label::kPositive).empty());
  CHECK_THROWS_AS(s.mark_evidence("Q", t, Label::kNegative), InputError);
  CHECK(s.label_log().size() == 1);
}

TEST_CASE("evidence relation naming") {
  CHECK(evidence_target("Q_Ev") == "Q");
  CHECK_FALSE(evidence_target("Q").has_value());
}

TEST_CASE("tsv round trip with counts and labels") {
  std::istringstream in(
      "#relation R(a,b) kind=EDB\n"
      "x\t1\n"
      "x\t2\t@count=3\n"
      "y\t1\t@label=pos\n");
  TsvRelation tsv = read_tsv(in);
  CHECK(tsv.schema.name == "R");
  REQUIRE(tsv.rows.size() == 3);
  CHECK(tsv.rows[1].count == 3);
  CHECK(tsv.rows[2].label == Label::kPositive);

  Store s;
  load_tsv(s, tsv);
  const Relation& r = s.relation("R");
  CHECK(r.count(s.tuple({"x", "2"})) == 3);
  CHECK(r.label(s.tuple({"y", "1"})) == Label::kPositive);

  std::ostringstream out;
  write_tsv(out, s, r);
  std::istringstream back(out.str());
  Store s2;
  load_tsv(s2, read_tsv(back));
  CHECK(s2.relation("R").count(s2.tuple({"x", "2"})) == 3);
  CHECK(s2.relation("R").label(s2.tuple({"y", "1"})) == Label::kPositive);
}

TEST_CASE("malformed tsv reports the line") {
  std::istringstream in(
      "#relation R(a,b) kind=EDB\n"
      "x\t1\n"
      "only-one-column\n");
  try {
    read_tsv(in, "R.tsv");
    FAIL("expected InputError");
  } catch (const InputError& e) {
    CHECK(e.line() == 3);
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
}

TEST_CASE("zero arity relation") {
  std::istringstream in("#relation Q() kind=IDB\n()\n");
  Store s;
  load_tsv(s, read_tsv(in));
  CHECK(s.relation("Q").contains(Tuple{}));
}
