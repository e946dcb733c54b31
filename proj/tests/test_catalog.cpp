#include "doctest.h"
#include "fixtures.hpp"
#include "oracles.hpp"
#include "plansieve/catalog.hpp"
#include "plansieve/planspace.hpp"

using namespace plansieve;
using namespace plansieve::testing;

TEST_CASE("catalog generation honors the schema") {
    Catalog cat = Catalog::generate(s3_schema());
    CHECK(cat.table_count() == 3);
    CHECK(cat.row_count(cat.table_id("A")) == 100);
    CHECK(cat.row_count(cat.table_id("B")) == 300);
    CHECK(cat.row_count(cat.table_id("C")) == 200);

    // key columns hold exactly 1..row_count
    TableId a = cat.table_id("A");
    const auto& ids = cat.column(a, cat.column_index(a, "id"));
    for (std::size_t r = 0; r < ids.size(); ++r)
        REQUIRE(ids[r] == static_cast<std::int64_t>(r) + 1);

    // foreign keys stay within the target key domain
    TableId b = cat.table_id("B");
    for (std::int64_t v : cat.column(b, cat.column_index(b, "aid"))) {
        REQUIRE(v >= 1);
        REQUIRE(v <= 100);
    }
}

TEST_CASE("catalog generation is deterministic") {
    Catalog c1 = Catalog::generate(s3_schema());
    Catalog c2 = Catalog::generate(s3_schema());
    for (int t = 0; t < c1.table_count(); ++t)
        for (std::size_t c = 0; c < c1.spec().tables[t].columns.size(); ++c)
            REQUIRE(c1.column(t, static_cast<int>(c)) == c2.column(t, static_cast<int>(c)));

    Catalog c3 = Catalog::generate(s3_schema(43));
    CHECK(c1.column(1, 1) != c3.column(1, 1));
}

TEST_CASE("schema validation names the offender") {
    SchemaSpec spec = s3_schema();
    spec.tables[1].columns[1].target_table = "X";
    CHECK_THROWS_AS(spec.validate(), ValidationError);
    try {
        spec.validate();
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("B.aid") != std::string::npos);
        CHECK(std::string(e.what()).find("X") != std::string::npos);
    }

    SchemaSpec zero = s3_schema();
    zero.tables[0].rows = 0;
    CHECK_THROWS_AS(zero.validate(), ValidationError);

    SchemaSpec dup = s3_schema();
    dup.tables.push_back(dup.tables[0]);
    CHECK_THROWS_AS(dup.validate(), ValidationError);
}

TEST_CASE("schema spec round-trips through json") {
    SchemaSpec spec = s3_schema();
    SchemaSpec parsed = SchemaSpec::from_json_text(spec.to_json_text());
    Catalog c1 = Catalog::generate(spec);
    Catalog c2 = Catalog::generate(parsed);
    REQUIRE(c1.column(1, 1) == c2.column(1, 1));
}

TEST_CASE("true cardinality of an empty selection is zero") {
    Catalog cat = Catalog::generate(s3_schema());
    Subplan sp;
    sp.tables = mask_of(0);
    sp.selections = {{0, "x", CmpOp::Gt, 50}};  // above the declared domain
    CHECK(true_cardinality(cat, sp) == 0);
}

TEST_CASE("pure foreign-key join keeps the fact side cardinality") {
    Catalog cat = Catalog::generate(s3_schema());
    JoinGraph g = infer_join_closure(s3_query());
    CHECK(true_cardinality(cat, g.subplan(mask_of(0) | mask_of(1))) == 300);
    CHECK(true_cardinality(cat, g.subplan(mask_of(0) | mask_of(2))) == 200);
}

TEST_CASE("hash join agrees with the nested-loop oracle") {
    Catalog cat = Catalog::generate(s3_schema());
    JoinGraph g = infer_join_closure(s3_query("s3", {{0, "x", CmpOp::Le, 25}}));

    for (TableMask m : {mask_of(0) | mask_of(1), mask_of(1) | mask_of(2),
                        mask_of(0) | mask_of(1) | mask_of(2)}) {
        Subplan sp = g.subplan(m);
        CHECK(true_cardinality(cat, sp) == naive_join_count(cat, sp));
    }
}

TEST_CASE("oracle agrees with the nested-loop route on random fixtures") {
    for (std::uint64_t seed = 1; seed <= 12; ++seed) {
        RandomFixture fx = random_fixture(seed, 4);
        Catalog cat = Catalog::generate(fx.schema);
        JoinGraph g = infer_join_closure(fx.query);
        auto subs = enumerate_subplans(g);
        for (const auto& [k, list] : subs)
            for (const auto& sp : list)
                REQUIRE(true_cardinality(cat, sp) == naive_join_count(cat, sp));
    }
}

TEST_CASE("oracle consistency: adding a join cannot multiply past the new table") {
    Catalog cat = Catalog::generate(s3_schema());
    JoinGraph g = infer_join_closure(s3_query());
    std::uint64_t ab = true_cardinality(cat, g.subplan(mask_of(0) | mask_of(1)));
    std::uint64_t abc =
        true_cardinality(cat, g.subplan(mask_of(0) | mask_of(1) | mask_of(2)));
    CHECK(abc <= ab * cat.row_count(2));
}

TEST_CASE("unknown references raise reference errors") {
    Catalog cat = Catalog::generate(s3_schema());
    Subplan sp;
    sp.tables = mask_of(0);
    sp.selections = {{0, "nope", CmpOp::Eq, 1}};
    CHECK_THROWS_AS(true_cardinality(cat, sp), ReferenceError);
    CHECK_THROWS_AS(cat.table_id("unknown"), ReferenceError);
}

TEST_CASE("execute_query logs every plan node") {
    Catalog cat = Catalog::generate(s3_schema());
    JoinGraph g = infer_join_closure(s3_query());
    CardinalityAssignment truth, noisy;
    fill_assignments(cat, g, 7, 0.0, truth, noisy);
    PlanTree plan = optimize(g, truth);

    ExecutionLog log = execute_query(cat, plan, "s3");
    REQUIRE(log.entries.size() == 5);  // A, B, C, one pair, ABC
    for (const auto& entry : log.entries)
        CHECK(entry.true_cardinality == true_cardinality(cat, entry.subplan));
    // ordered by (k, table set): three leaves first
    CHECK(log.entries[0].subplan.k() == 1);
    CHECK(log.entries[1].subplan.k() == 1);
    CHECK(log.entries[2].subplan.k() == 1);
    CHECK(log.entries[3].subplan.k() == 2);
    CHECK(log.entries[4].subplan.k() == 3);

    PlanTree single = PlanTree::leaf(g, 0);
    CHECK(execute_query(cat, single, "one").entries.size() == 1);
}
