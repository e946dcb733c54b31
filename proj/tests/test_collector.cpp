#include <cstdio>
#include <filesystem>

#include "doctest.h"
#include "fixtures.hpp"
#include "oracles.hpp"
#include "plansieve/collector.hpp"
#include "plansieve/l1error.hpp"

using namespace plansieve;
using namespace plansieve::testing;

namespace {

// table ids used by the pattern fixtures: mk=0, mi=1, t=2
constexpr TableId kMk = 0, kMi = 1, kT = 2;

Subplan three_way(std::vector<Selection> selections) {
    Subplan sp;
    sp.tables = mask_of(kMk) | mask_of(kMi) | mask_of(kT);
    sp.joins = {{kMk, "movie_id", kMi, "movie_id"}, {kMi, "movie_id", kT, "id"}};
    sp.selections = std::move(selections);
    return sp;
}

// the five variants of the running three-table example with their
// observed cardinalities
struct Observed {
    Subplan subplan;
    std::uint64_t cardinality;
};

std::vector<Observed> five_variants() {
    Selection mi_info{kMi, "info", CmpOp::Eq, 7};
    Selection t_2000{kT, "production_year", CmpOp::Gt, 2000};
    Selection t_1990{kT, "production_year", CmpOp::Gt, 1990};
    return {
        {three_way({mi_info, t_2000}), 25'700},
        {three_way({mi_info, t_1990}), 35'300},
        {three_way({mi_info}), 58'300},
        {three_way({t_1990}), 157'000'000},
        {three_way({}), 235'400'000},
    };
}

ExecutionLog log_of(const std::vector<Observed>& entries, const std::string& id = "q") {
    ExecutionLog log;
    log.query_id = id;
    for (const auto& o : entries) log.entries.push_back({o.subplan, o.cardinality});
    return log;
}

}  // namespace

TEST_CASE("patterns at the three specificities") {
    auto vars = five_variants();
    Pattern join_only = make_pattern(vars[0].subplan, PatternKind::JoinOnly);
    CHECK(join_only.tables == (mask_of(kMk) | mask_of(kMi) | mask_of(kT)));
    CHECK(join_only.selections.empty());
    CHECK(join_only.sigma_tables == 0);
    // join-only is a function of the table set alone
    CHECK(join_only == make_pattern(vars[4].subplan, PatternKind::JoinOnly));

    Pattern aware = make_pattern(vars[0].subplan, PatternKind::SelectionAware);
    CHECK(aware.sigma_tables == (mask_of(kMi) | mask_of(kT)));
    CHECK(aware == make_pattern(vars[1].subplan, PatternKind::SelectionAware));
    CHECK(aware != make_pattern(vars[2].subplan, PatternKind::SelectionAware));

    // no selections: the sigma marker set is empty, same shape as join-only
    Pattern bare = make_pattern(vars[4].subplan, PatternKind::SelectionAware);
    CHECK(bare.sigma_tables == 0);
    CHECK(bare.tables == join_only.tables);

    Pattern exact1 = make_pattern(vars[0].subplan, PatternKind::Exact);
    Pattern exact2 = make_pattern(vars[1].subplan, PatternKind::Exact);
    CHECK(exact1 != exact2);
    CHECK(exact1 == make_pattern(vars[0].subplan, PatternKind::Exact));
}

TEST_CASE("running means per pattern over the five variants") {
    CardinalityCache cache;
    for (const auto& o : five_variants()) cache.ingest_log(log_of({o}));

    const CacheEntry* generic =
        cache.find(make_pattern(five_variants()[0].subplan, PatternKind::JoinOnly));
    REQUIRE(generic != nullptr);
    CHECK(generic->observation_count == 5);
    CHECK(generic->mean_cardinality == 78'503'860.0);

    const CacheEntry* aware =
        cache.find(make_pattern(five_variants()[0].subplan, PatternKind::SelectionAware));
    REQUIRE(aware != nullptr);
    CHECK(aware->observation_count == 2);  // the first two share their sigma set
    CHECK(aware->mean_cardinality == 30'500.0);

    // the remaining three variants form three distinct selection-aware entries
    for (int i = 2; i < 5; ++i) {
        const CacheEntry* e = cache.find(
            make_pattern(five_variants()[i].subplan, PatternKind::SelectionAware));
        REQUIRE(e != nullptr);
        CHECK(e->observation_count == 1);
    }
}

TEST_CASE("repeated ingest keeps the mean and counts observations") {
    CardinalityCache cache;
    auto vars = five_variants();
    cache.ingest_log(log_of({vars[0]}));
    cache.ingest_log(log_of({vars[0]}));
    const CacheEntry* e = cache.find(make_pattern(vars[0].subplan, PatternKind::Exact));
    REQUIRE(e != nullptr);
    CHECK(e->observation_count == 2);
    CHECK(e->mean_cardinality == 25'700.0);
}

TEST_CASE("recency policy overweights the newest observation") {
    CardinalityCache cache(MeanPolicy::ExponentialRecency, 0.25);
    auto vars = five_variants();
    cache.ingest_log(log_of({{vars[0].subplan, 100}}));
    cache.ingest_log(log_of({{vars[0].subplan, 200}}));
    const CacheEntry* e = cache.find(make_pattern(vars[0].subplan, PatternKind::Exact));
    REQUIRE(e != nullptr);
    CHECK(e->mean_cardinality == doctest::Approx(125.0));
}

TEST_CASE("lookup probes most specific first") {
    Catalog cat = Catalog::generate(s3_schema());
    CardinalityCache cache;
    auto vars = five_variants();
    EstimatorSpec est{EstimatorKind::RandEst, 9};
    SurrogateContext ctx{"probe", nullptr};

    CHECK(cache.lookup(vars[0].subplan, est, cat, ctx).source == LookupSource::Surrogate);

    cache.ingest_log(log_of({vars[0]}));
    CardLookup exact = cache.lookup(vars[0].subplan, est, cat, ctx);
    CHECK(exact.source == LookupSource::ExactHit);
    CHECK(exact.value == 25'700.0);

    // same sigma set, different predicate value: selection-aware hit
    CardLookup aware = cache.lookup(vars[1].subplan, est, cat, ctx);
    CHECK(aware.source == LookupSource::SelectionAwareHit);
    CHECK(aware.value == 25'700.0);

    // sigma on t only matches nothing but the generic join pattern
    CardLookup generic = cache.lookup(vars[3].subplan, est, cat, ctx);
    CHECK(generic.source == LookupSource::JoinOnlyHit);
}

TEST_CASE("lookup does not mutate the cache") {
    Catalog cat = Catalog::generate(s3_schema());
    CardinalityCache cache;
    auto vars = five_variants();
    cache.ingest_log(log_of({vars[0]}));
    std::size_t before = cache.size();
    EstimatorSpec est{EstimatorKind::RandEst, 9};
    SurrogateContext ctx{"probe", nullptr};
    (void)cache.lookup(vars[3].subplan, est, cat, ctx);
    (void)cache.lookup(vars[4].subplan, est, cat, ctx);
    CHECK(cache.size() == before);
}

TEST_CASE("independence estimator is exact on a pure foreign-key join") {
    Catalog cat = Catalog::generate(s3_schema());
    JoinGraph g = infer_join_closure(s3_query());
    Subplan ab = g.subplan(mask_of(0) | mask_of(1));
    EstimatorSpec est{EstimatorKind::Independence, 0};
    SurrogateContext ctx{"s3", nullptr};
    CHECK(surrogate(est, ab, cat, ctx) == doctest::Approx(300.0));
    // and matches the oracle because the foreign key forces |A join B| = |B|
    CHECK(surrogate(est, ab, cat, ctx) ==
          doctest::Approx(static_cast<double>(true_cardinality(cat, ab))));
}

TEST_CASE("independence estimator multiplies exact selectivities") {
    Catalog cat = Catalog::generate(s3_schema());
    Selection sel{0, "x", CmpOp::Le, 25};
    JoinGraph g = infer_join_closure(s3_query("s3sel", {sel}));
    Subplan ab = g.subplan(mask_of(0) | mask_of(1));
    EstimatorSpec est{EstimatorKind::Independence, 0};
    SurrogateContext ctx{"s3sel", nullptr};
    double selectivity = static_cast<double>(cat.selection_count(sel)) / 100.0;
    CHECK(surrogate(est, ab, cat, ctx) == doctest::Approx(300.0 * selectivity));
}

TEST_CASE("rand_est is deterministic per query and subplan") {
    Catalog cat = Catalog::generate(s3_schema());
    JoinGraph g = infer_join_closure(s3_query());
    Subplan ab = g.subplan(mask_of(0) | mask_of(1));
    EstimatorSpec est{EstimatorKind::RandEst, 4};
    SurrogateContext ctx{"q1", nullptr};
    double v1 = surrogate(est, ab, cat, ctx);
    double v2 = surrogate(est, ab, cat, ctx);
    CHECK(v1 == v2);
    CHECK(v1 >= 1.0);
    CHECK(v1 <= static_cast<double>(cat.max_row_count()));

    SurrogateContext other{"q2", nullptr};
    EstimatorSpec reseeded{EstimatorKind::RandEst, 5};
    bool differs = surrogate(est, ab, cat, other) != v1 ||
                   surrogate(reseeded, ab, cat, ctx) != v1;
    CHECK(differs);
}

TEST_CASE("reversed_tc flips the per-size order") {
    Catalog cat = Catalog::generate(s3_schema());
    Subplan mk_t;
    mk_t.tables = mask_of(0) | mask_of(2);
    Subplan mk_ci;
    mk_ci.tables = mask_of(0) | mask_of(1);

    std::map<int, std::vector<std::pair<TableMask, double>>> per_k;
    per_k[2] = {{mk_t.tables, 1.0}, {mk_ci.tables, 10.0}};
    SurrogateContext ctx{"q", &per_k};
    EstimatorSpec est{EstimatorKind::ReversedTC, 0};
    CHECK(surrogate(est, mk_t, cat, ctx) == 10.0);
    CHECK(surrogate(est, mk_ci, cat, ctx) == 1.0);

    SurrogateContext missing{"q", nullptr};
    CHECK_THROWS_AS(surrogate(est, mk_t, cat, missing), DataError);
}

TEST_CASE("cache persistence round-trips exactly") {
    CardinalityCache cache;
    for (const auto& o : five_variants()) cache.ingest_log(log_of({o}));
    // a non-integer mean too
    auto vars = five_variants();
    cache.ingest_log(log_of({{vars[0].subplan, 1}}));

    std::string path =
        (std::filesystem::temp_directory_path() / "plansieve_cache_test.jsonl").string();
    cache.save(path);
    CardinalityCache loaded = CardinalityCache::load(path);
    std::remove(path.c_str());

    REQUIRE(loaded.size() == cache.size());
    for (const auto& o : vars)
        for (PatternKind kind :
             {PatternKind::Exact, PatternKind::SelectionAware, PatternKind::JoinOnly}) {
            const CacheEntry* a = cache.find(make_pattern(o.subplan, kind));
            const CacheEntry* b = loaded.find(make_pattern(o.subplan, kind));
            REQUIRE(a != nullptr);
            REQUIRE(b != nullptr);
            CHECK(a->mean_cardinality == b->mean_cardinality);  // bitwise
            CHECK(a->observation_count == b->observation_count);
            CHECK(a->last_updated == b->last_updated);
        }
}

TEST_CASE("mean stays the exact arithmetic mean under random ingest") {
    Rng rng(31);
    CardinalityCache cache;
    auto vars = five_variants();
    double sum = 0.0;
    std::uint64_t n = 0;
    for (int i = 0; i < 200; ++i) {
        std::uint64_t card = rng.below(1'000'000);
        cache.ingest_log(log_of({{vars[0].subplan, card}}));
        sum += static_cast<double>(card);
        ++n;
        const CacheEntry* e = cache.find(make_pattern(vars[0].subplan, PatternKind::Exact));
        REQUIRE(e != nullptr);
        REQUIRE(e->mean_cardinality == sum / static_cast<double>(n));
    }
}

TEST_CASE("convergence: exact coverage reproduces the oracle ordering") {
    Catalog cat = Catalog::generate(s3_schema());
    JoinGraph g = infer_join_closure(s3_query("conv", {{0, "x", CmpOp::Le, 30}}));
    auto subs = enumerate_subplans(g);

    ExecutionLog log;
    log.query_id = "conv";
    for (const auto& [k, list] : subs)
        for (const auto& sp : list) log.entries.push_back({sp, true_cardinality(cat, sp)});

    CardinalityCache cache;
    cache.ingest_log(log);

    EstimatorSpec est{EstimatorKind::RandEst, 123};
    SurrogateContext ctx{"conv", nullptr};
    CardinalityAssignment truth, from_cache;
    for (const auto& [k, list] : subs)
        for (const auto& sp : list) {
            CardLookup lk = cache.lookup(sp, est, cat, ctx);
            REQUIRE(lk.source == LookupSource::ExactHit);
            from_cache.set(sp.tables, lk.value, Provenance::True);
            truth.set(sp.tables, static_cast<double>(true_cardinality(cat, sp)),
                      Provenance::True);
        }
    for (const auto& [k, list] : subs) {
        PositionVectorPair a = position_vectors(list, truth, truth);
        PositionVectorPair b = position_vectors(list, from_cache, from_cache);
        CHECK(a.rho == b.rho);
    }
}
