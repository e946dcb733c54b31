#include <cstdio>
#include <filesystem>
#include <set>

#include "doctest.h"
#include "fixtures.hpp"
#include "plansieve/workloadgen.hpp"

using namespace plansieve;
using namespace plansieve::testing;

namespace {

Query template_ab() {
    Query q;
    q.id = "tab";
    q.tables = {0, 1};
    q.joins = {{1, "aid", 0, "id"}};
    q.selections = {{0, "x", CmpOp::Gt, 10}};
    return q;
}

Query template_abc() {
    return s3_query("tabc", {{0, "x", CmpOp::Le, 40}, {1, "y", CmpOp::Gt, 5}});
}

Query template_ac() {
    Query q;
    q.id = "tac";
    q.tables = {0, 2};
    q.joins = {{2, "aid", 0, "id"}};
    q.selections = {{2, "z", CmpOp::Le, 15}};
    return q;
}

}  // namespace

TEST_CASE("component extraction is lossless") {
    Query tmpl = template_abc();
    TemplateComponents parts = extract_components(tmpl);
    CHECK(parts.tables.size() == 3);
    CHECK(parts.joins.size() == 2);
    CHECK(parts.slots.size() == 2);

    Query back = parts.recombine(tmpl.id);
    CHECK(back.tables == tmpl.tables);
    CHECK(back.joins == tmpl.joins);
    CHECK(back.selections == tmpl.selections);

    Query bare = s3_query("bare");
    CHECK(extract_components(bare).slots.empty());
}

TEST_CASE("domain learning scans once and caches") {
    Catalog cat = Catalog::generate(s3_schema());
    DomainStore store;
    std::uint64_t scans = 0;

    DomainInfo first = learn_domain(cat, 0, "x", store, &scans);
    CHECK(scans == 1);
    CHECK(first.min >= 1);
    CHECK(first.max <= 50);
    CHECK(first.row_count == 100);
    CHECK(first.sample.size() <= 64);
    for (std::int64_t v : first.sample) {
        CHECK(v >= first.min);
        CHECK(v <= first.max);
    }

    DomainInfo second = learn_domain(cat, 0, "x", store, &scans);
    CHECK(scans == 1);  // store hit, no new scan
    CHECK(second == first);

    learn_domain(cat, 1, "y", store, &scans);
    CHECK(store.size() == 2);
    CHECK_THROWS_AS(learn_domain(cat, 0, "nope", store), ReferenceError);
}

TEST_CASE("domain store persists losslessly") {
    Catalog cat = Catalog::generate(s3_schema());
    DomainStore store;
    learn_domain(cat, 0, "x", store);
    learn_domain(cat, 2, "z", store);

    std::string path =
        (std::filesystem::temp_directory_path() / "plansieve_domains_test.jsonl").string();
    store.save(path);
    DomainStore loaded = DomainStore::load(path);
    std::remove(path.c_str());

    REQUIRE(loaded.size() == store.size());
    REQUIRE(loaded.find("A.x") != nullptr);
    CHECK(*loaded.find("A.x") == *store.find("A.x"));
    CHECK(*loaded.find("C.z") == *store.find("C.z"));
}

TEST_CASE("variants preserve structure and mutate predicates") {
    Catalog cat = Catalog::generate(s3_schema());
    DomainStore store;
    Query tmpl = template_abc();
    for (const auto& slot : tmpl.selections)
        learn_domain(cat, slot.table, slot.column, store);

    auto variants = generate(tmpl, store, cat, 50, 99);
    REQUIRE(variants.size() == 50);
    bool saw_revalue = false, saw_drop = false, saw_keep = false;
    for (const auto& v : variants) {
        CHECK(v.tables == tmpl.tables);
        CHECK(v.joins == tmpl.joins);
        CHECK(v.selections.size() <= tmpl.selections.size());
        if (v.selections.size() < tmpl.selections.size()) saw_drop = true;
        for (const auto& s : v.selections) {
            bool verbatim = false;
            for (const auto& slot : tmpl.selections) verbatim |= s == slot;
            (verbatim ? saw_keep : saw_revalue) = true;
        }
    }
    CHECK(saw_keep);
    CHECK(saw_drop);
    CHECK(saw_revalue);

    auto again = generate(tmpl, store, cat, 50, 99);
    for (std::size_t i = 0; i < variants.size(); ++i)
        CHECK(again[i].selections == variants[i].selections);

    CHECK_THROWS_AS(generate(tmpl, store, cat, 0, 1), ConfigError);
}

TEST_CASE("validation accepts templates and rejects empty results") {
    Catalog cat = Catalog::generate(s3_schema());
    CHECK(validate(cat, template_abc()).accepted);
    CHECK(validate(cat, template_ab()).accepted);

    Query empty = template_ab();
    empty.selections[0] = {0, "x", CmpOp::Gt, 50};  // beyond the domain
    ValidationResult r = validate(cat, empty);
    CHECK_FALSE(r.accepted);
    CHECK(r.reason == "empty result");

    Query dangling = template_ab();
    dangling.selections[0].table = 2;  // not in the query
    CHECK_FALSE(validate(cat, dangling).accepted);

    Query bad_col = template_ab();
    bad_col.selections[0].column = "missing";
    CHECK_FALSE(validate(cat, bad_col).accepted);
}

TEST_CASE("workload scaling reaches the target with all templates") {
    Catalog cat = Catalog::generate(s3_schema());
    std::vector<Query> templates{template_ab(), template_abc(), template_ac()};
    Workload w = scale_workload(templates, cat, 30, 7);
    REQUIRE(w.queries.size() == 30);
    CHECK_FALSE(w.budget_exhausted);

    std::set<std::string> roots;
    for (const auto& q : w.queries) {
        roots.insert(q.id.substr(0, q.id.find("_s")));
        CHECK(validate(cat, q).accepted);
        // join graph equals the template's
        JoinGraph g = infer_join_closure(q);
        for (const auto& tmpl : templates) {
            if (q.id.rfind(tmpl.id + "_", 0) != 0) continue;
            JoinGraph tg = infer_join_closure(tmpl);
            REQUIRE(g.tables == tg.tables);
            REQUIRE(g.classes == tg.classes);
        }
    }
    CHECK(roots.size() == 3);

    Workload again = scale_workload(templates, cat, 30, 7);
    REQUIRE(again.queries.size() == w.queries.size());
    for (std::size_t i = 0; i < w.queries.size(); ++i) {
        CHECK(again.queries[i].id == w.queries[i].id);
        CHECK(again.queries[i].selections == w.queries[i].selections);
    }

    Workload one = scale_workload(templates, cat, 1, 9);
    CHECK(one.queries.size() == 1);
}

TEST_CASE("impossible templates exhaust the retry budget") {
    Catalog cat = Catalog::generate(s3_schema());
    Query hopeless = template_ab();
    hopeless.selections[0] = {0, "x", CmpOp::Gt, 9999};
    MutationPolicy keep_all{1.0, 0.0, 0.0, false};
    Workload w = scale_workload({hopeless}, cat, 5, 3, keep_all);
    CHECK(w.budget_exhausted);
    CHECK(w.queries.empty());
    CHECK(w.candidates_tried == 250);  // 50x the target
}

TEST_CASE("workload files round-trip") {
    Catalog cat = Catalog::generate(s3_schema());
    std::vector<Query> queries{template_ab(), template_abc()};
    std::string path =
        (std::filesystem::temp_directory_path() / "plansieve_workload_test.jsonl").string();
    save_workload(queries, cat, path);
    std::vector<Query> loaded = load_workload(path, cat);
    std::remove(path.c_str());

    REQUIRE(loaded.size() == 2);
    CHECK(loaded[0].id == "tab");
    CHECK(loaded[0].tables == queries[0].tables);
    CHECK(loaded[0].joins == queries[0].joins);
    CHECK(loaded[0].selections == queries[0].selections);
    CHECK(loaded[1].selections == queries[1].selections);
}
