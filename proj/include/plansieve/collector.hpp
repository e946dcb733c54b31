#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "plansieve/catalog.hpp"
#include "plansieve/query.hpp"

namespace plansieve {

enum class PatternKind { Exact, SelectionAware, JoinOnly };

const char* pattern_kind_name(PatternKind k);
PatternKind pattern_kind_from_name(const std::string& s);

/// Cache key at one of three specificities: full predicates, per-table
/// selection presence markers, or the join structure alone.
struct Pattern {
    PatternKind kind = PatternKind::JoinOnly;
    TableMask tables = 0;
    std::vector<Selection> selections;  // Exact only, canonical order
    TableMask sigma_tables = 0;         // SelectionAware only

    friend bool operator==(const Pattern&, const Pattern&) = default;
    friend auto operator<=>(const Pattern& a, const Pattern& b) {
        return std::tie(a.kind, a.tables, a.sigma_tables, a.selections) <=>
               std::tie(b.kind, b.tables, b.sigma_tables, b.selections);
    }
};

Pattern make_pattern(const Subplan& subplan, PatternKind kind);

enum class LookupSource { ExactHit, SelectionAwareHit, JoinOnlyHit, Surrogate };

const char* lookup_source_name(LookupSource s);

struct CardLookup {
    double value = 0.0;
    LookupSource source = LookupSource::Surrogate;
};

enum class EstimatorKind { Independence, RandEst, ReversedTC, Oracle };

const char* estimator_kind_name(EstimatorKind k);
EstimatorKind estimator_kind_from_name(const std::string& s);

struct EstimatorSpec {
    EstimatorKind kind = EstimatorKind::Independence;
    std::uint64_t seed = 0;
    double noise_sigma = 0.0;  // multiplies the output by exp(N(0, sigma))
};

/// Extra inputs an estimator may need beyond the subplan itself.
struct SurrogateContext {
    std::string query_id;
    // per join size: the query's subplans with their true cardinalities
    // (required by ReversedTC)
    const std::map<int, std::vector<std::pair<TableMask, double>>>* per_k_truth = nullptr;
};

double surrogate(const EstimatorSpec& estimator, const Subplan& subplan,
                 const Catalog& catalog, const SurrogateContext& context);

struct CacheEntry {
    Pattern pattern;
    double sum = 0.0;
    std::uint64_t observation_count = 0;
    std::uint64_t last_updated = 0;
    double mean_cardinality = 0.0;
};

enum class MeanPolicy { Unweighted, ExponentialRecency };

/// Pattern-keyed store of observed true cardinalities. Lookups never mutate;
/// ingest requires exclusive access (single writer, many readers).
class CardinalityCache {
public:
    explicit CardinalityCache(MeanPolicy policy = MeanPolicy::Unweighted,
                              double recency_alpha = 0.25)
        : policy_(policy), alpha_(recency_alpha) {}

    /// Most-specific-first probe: exact, then selection-aware, then
    /// join-only; on a full miss the estimator supplies a surrogate.
    CardLookup lookup(const Subplan& subplan, const EstimatorSpec& estimator,
                      const Catalog& catalog, const SurrogateContext& context) const;

    /// Updates (or creates) the entries of all three pattern kinds for every
    /// log entry.
    void ingest_log(const ExecutionLog& log);

    const CacheEntry* find(const Pattern& pattern) const;
    std::size_t size() const { return entries_.size(); }

    void save(const std::string& path) const;
    static CardinalityCache load(const std::string& path,
                                 MeanPolicy policy = MeanPolicy::Unweighted,
                                 double recency_alpha = 0.25);

private:
    void observe(const Pattern& pattern, std::uint64_t cardinality);

    MeanPolicy policy_;
    double alpha_;
    std::uint64_t sequence_ = 0;
    std::map<Pattern, CacheEntry> entries_;
};

}  // namespace plansieve
