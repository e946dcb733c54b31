#include "plansieve/collector.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include "json.hpp"

namespace plansieve {

using nlohmann::json;

const char* pattern_kind_name(PatternKind k) {
    switch (k) {
        case PatternKind::Exact: return "exact";
        case PatternKind::SelectionAware: return "selection_aware";
        case PatternKind::JoinOnly: return "join_only";
    }
    return "?";
}

PatternKind pattern_kind_from_name(const std::string& s) {
    if (s == "exact") return PatternKind::Exact;
    if (s == "selection_aware") return PatternKind::SelectionAware;
    if (s == "join_only") return PatternKind::JoinOnly;
    throw ValidationError("unknown pattern kind '" + s + "'");
}

const char* lookup_source_name(LookupSource s) {
    switch (s) {
        case LookupSource::ExactHit: return "exact_hit";
        case LookupSource::SelectionAwareHit: return "selection_aware_hit";
        case LookupSource::JoinOnlyHit: return "join_only_hit";
        case LookupSource::Surrogate: return "surrogate";
    }
    return "?";
}

const char* estimator_kind_name(EstimatorKind k) {
    switch (k) {
        case EstimatorKind::Independence: return "independence";
        case EstimatorKind::RandEst: return "rand_est";
        case EstimatorKind::ReversedTC: return "reversed_tc";
        case EstimatorKind::Oracle: return "oracle";
    }
    return "?";
}

EstimatorKind estimator_kind_from_name(const std::string& s) {
    if (s == "independence") return EstimatorKind::Independence;
    if (s == "rand_est") return EstimatorKind::RandEst;
    if (s == "reversed_tc") return EstimatorKind::ReversedTC;
    if (s == "oracle") return EstimatorKind::Oracle;
    throw ValidationError("unknown estimator kind '" + s + "'");
}

Pattern make_pattern(const Subplan& subplan, PatternKind kind) {
    Pattern p;
    p.kind = kind;
    p.tables = subplan.tables;
    switch (kind) {
        case PatternKind::Exact:
            p.selections = subplan.selections;
            std::sort(p.selections.begin(), p.selections.end());
            break;
        case PatternKind::SelectionAware:
            for (const auto& s : subplan.selections) p.sigma_tables |= mask_of(s.table);
            break;
        case PatternKind::JoinOnly:
            break;
    }
    return p;
}

namespace {

double apply_noise(double value, const EstimatorSpec& est, const std::string& query_id,
                   TableMask tables) {
    if (est.noise_sigma <= 0.0) return value;
    Rng rng(derive_seed(est.seed ^ 0x6e6f697365ULL, query_id, tables));
    return value * std::exp(est.noise_sigma * rng.normal());
}

double independence_estimate(const Subplan& subplan, const Catalog& catalog) {
    double result = 1.0;
    for (TableId t : mask_to_tables(subplan.tables))
        result *= static_cast<double>(catalog.row_count(t));

    for (const auto& s : subplan.selections) {
        double rows = static_cast<double>(catalog.row_count(s.table));
        result *= static_cast<double>(catalog.selection_count(s)) / rows;
    }

    // System-R style: one factor 1/max(V(R,a), V(S,b)) per spanning edge of
    // each column equivalence class (chain over the canonical member order)
    std::vector<std::pair<TableId, int>> cols;
    auto index_of = [&](TableId t, const std::string& name) {
        auto key = std::make_pair(t, catalog.column_index(t, name));
        auto it = std::find(cols.begin(), cols.end(), key);
        if (it == cols.end()) {
            cols.push_back(key);
            return cols.size() - 1;
        }
        return static_cast<std::size_t>(it - cols.begin());
    };
    std::vector<std::size_t> parent;
    std::function<std::size_t(std::size_t)> find = [&](std::size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    for (const auto& e : subplan.joins) {
        auto a = index_of(e.t1, e.c1);
        auto b = index_of(e.t2, e.c2);
        while (parent.size() < cols.size()) parent.push_back(parent.size());
        parent[find(a)] = find(b);
    }
    while (parent.size() < cols.size()) parent.push_back(parent.size());

    std::map<std::size_t, std::vector<std::pair<TableId, int>>> classes;
    for (std::size_t i = 0; i < cols.size(); ++i) classes[find(i)].push_back(cols[i]);
    for (auto& [root, members] : classes) {
        if (members.size() < 2) continue;
        std::sort(members.begin(), members.end());
        for (std::size_t i = 0; i + 1 < members.size(); ++i) {
            double va = static_cast<double>(
                catalog.distinct_count(members[i].first, members[i].second));
            double vb = static_cast<double>(
                catalog.distinct_count(members[i + 1].first, members[i + 1].second));
            result /= std::max(va, vb);
        }
    }
    return result;
}

}  // namespace

double surrogate(const EstimatorSpec& estimator, const Subplan& subplan,
                 const Catalog& catalog, const SurrogateContext& context) {
    double value = 0.0;
    switch (estimator.kind) {
        case EstimatorKind::Independence:
            value = independence_estimate(subplan, catalog);
            break;
        case EstimatorKind::RandEst: {
            Rng rng(derive_seed(estimator.seed, context.query_id, subplan.tables));
            value = static_cast<double>(1 + rng.below(catalog.max_row_count()));
            break;
        }
        case EstimatorKind::ReversedTC: {
            if (!context.per_k_truth)
                throw DataError("reversed_tc estimator requires the query's per-k "
                                "true cardinalities in the surrogate context");
            auto git = context.per_k_truth->find(subplan.k());
            if (git == context.per_k_truth->end())
                throw DataError("reversed_tc context is missing join size " +
                                std::to_string(subplan.k()));
            auto group = git->second;  // (tables, truth)
            std::sort(group.begin(), group.end(), [](const auto& a, const auto& b) {
                if (a.second != b.second) return a.second < b.second;
                return a.first < b.first;
            });
            std::size_t pos = group.size();
            for (std::size_t i = 0; i < group.size(); ++i)
                if (group[i].first == subplan.tables) { pos = i; break; }
            if (pos == group.size())
                throw DataError("reversed_tc context does not contain subplan " +
                                mask_to_string(subplan.tables));
            value = group[group.size() - 1 - pos].second;
            break;
        }
        case EstimatorKind::Oracle:
            value = static_cast<double>(true_cardinality(catalog, subplan));
            break;
    }
    return apply_noise(value, estimator, context.query_id, subplan.tables);
}

CardLookup CardinalityCache::lookup(const Subplan& subplan, const EstimatorSpec& estimator,
                                    const Catalog& catalog,
                                    const SurrogateContext& context) const {
    static constexpr PatternKind kOrder[] = {PatternKind::Exact, PatternKind::SelectionAware,
                                             PatternKind::JoinOnly};
    static constexpr LookupSource kSource[] = {LookupSource::ExactHit,
                                               LookupSource::SelectionAwareHit,
                                               LookupSource::JoinOnlyHit};
    for (int i = 0; i < 3; ++i) {
        const CacheEntry* e = find(make_pattern(subplan, kOrder[i]));
        if (e) return {e->mean_cardinality, kSource[i]};
    }
    return {surrogate(estimator, subplan, catalog, context), LookupSource::Surrogate};
}

void CardinalityCache::observe(const Pattern& pattern, std::uint64_t cardinality) {
    CacheEntry& e = entries_[pattern];
    if (e.observation_count == 0) e.pattern = pattern;
    e.sum += static_cast<double>(cardinality);
    e.observation_count += 1;
    if (policy_ == MeanPolicy::Unweighted || e.observation_count == 1)
        e.mean_cardinality = e.sum / static_cast<double>(e.observation_count);
    else
        e.mean_cardinality = (1.0 - alpha_) * e.mean_cardinality +
                             alpha_ * static_cast<double>(cardinality);
    e.last_updated = sequence_;
}

void CardinalityCache::ingest_log(const ExecutionLog& log) {
    for (const auto& entry : log.entries) {
        ++sequence_;
        observe(make_pattern(entry.subplan, PatternKind::Exact), entry.true_cardinality);
        observe(make_pattern(entry.subplan, PatternKind::SelectionAware),
                entry.true_cardinality);
        observe(make_pattern(entry.subplan, PatternKind::JoinOnly), entry.true_cardinality);
    }
}

const CacheEntry* CardinalityCache::find(const Pattern& pattern) const {
    auto it = entries_.find(pattern);
    return it == entries_.end() ? nullptr : &it->second;
}

void CardinalityCache::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write cache file '" + path + "'");
    for (const auto& [pattern, entry] : entries_) {
        // selection_signature depends on the kind: the full predicate list,
        // the sigma-marked tables, or nothing
        json sig;
        switch (pattern.kind) {
            case PatternKind::Exact: {
                sig = json::array();
                for (const auto& s : pattern.selections)
                    sig.push_back({{"table", s.table},
                                   {"col", s.column},
                                   {"op", cmp_op_name(s.op)},
                                   {"value", s.value}});
                break;
            }
            case PatternKind::SelectionAware:
                sig = mask_to_tables(pattern.sigma_tables);
                break;
            case PatternKind::JoinOnly:
                sig = json::array();
                break;
        }
        json line{{"kind", pattern_kind_name(pattern.kind)},
                  {"table_set", mask_to_tables(pattern.tables)},
                  {"selection_signature", sig},
                  {"mean", entry.mean_cardinality},
                  {"count", entry.observation_count},
                  {"last_updated", entry.last_updated}};
        out << line.dump() << '\n';
    }
}

CardinalityCache CardinalityCache::load(const std::string& path, MeanPolicy policy,
                                        double recency_alpha) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open cache file '" + path + "'");
    CardinalityCache cache(policy, recency_alpha);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        Pattern p;
        p.kind = pattern_kind_from_name(j.at("kind").get<std::string>());
        for (TableId t : j.at("table_set").get<std::vector<TableId>>()) p.tables |= mask_of(t);
        const json& sig = j.at("selection_signature");
        if (p.kind == PatternKind::Exact) {
            for (const auto& js : sig) {
                Selection s;
                s.table = js.at("table").get<TableId>();
                s.column = js.at("col").get<std::string>();
                s.op = cmp_op_from_name(js.at("op").get<std::string>());
                s.value = js.at("value").get<std::int64_t>();
                p.selections.push_back(s);
            }
        } else if (p.kind == PatternKind::SelectionAware) {
            for (TableId t : sig.get<std::vector<TableId>>()) p.sigma_tables |= mask_of(t);
        }
        CacheEntry e;
        e.pattern = p;
        e.mean_cardinality = j.at("mean").get<double>();
        e.observation_count = j.at("count").get<std::uint64_t>();
        e.sum = e.mean_cardinality * static_cast<double>(e.observation_count);
        e.last_updated = j.at("last_updated").get<std::uint64_t>();
        cache.entries_[p] = e;
        cache.sequence_ = std::max(cache.sequence_, e.last_updated);
    }
    return cache;
}

}  // namespace plansieve
