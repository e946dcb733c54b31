#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "plansieve/catalog.hpp"
#include "plansieve/query.hpp"

namespace plansieve {

/// Lossless decomposition of a template query.
struct TemplateComponents {
    std::vector<TableId> tables;
    std::vector<JoinEdge> joins;
    std::vector<Selection> slots;  // the template's selections, verbatim

    Query recombine(const std::string& id) const;
};

TemplateComponents extract_components(const Query& tmpl);

struct DomainInfo {
    std::string column_key;  // "table.column"
    std::int64_t min = 0;
    std::int64_t max = 0;
    std::vector<std::int64_t> sample;  // <= 64 distinct values within [min, max]
    std::uint64_t row_count = 0;

    friend bool operator==(const DomainInfo&, const DomainInfo&) = default;
};

/// Key-value store of learned column domains, persisted between runs.
class DomainStore {
public:
    const DomainInfo* find(const std::string& column_key) const;
    void put(const DomainInfo& info);
    std::size_t size() const { return infos_.size(); }

    void save(const std::string& path) const;
    static DomainStore load(const std::string& path);

private:
    std::map<std::string, DomainInfo> infos_;
};

/// Returns cached info without touching the catalog on a store hit;
/// otherwise scans the column, stores, and returns. `scans` (optional)
/// counts actual catalog scans for instrumentation.
DomainInfo learn_domain(const Catalog& catalog, TableId table, const std::string& column,
                        DomainStore& store, std::uint64_t* scans = nullptr);

struct MutationPolicy {
    double keep = 0.4;
    double revalue = 0.4;
    double drop = 0.2;
    bool allow_join_mutation = false;  // off by default; predicates only
};

/// n predicate-mutated variants of the template; tables and joins are
/// preserved verbatim. The catalog only resolves table names for store keys.
std::vector<Query> generate(const Query& tmpl, const DomainStore& store,
                            const Catalog& catalog, int n, std::uint64_t seed,
                            const MutationPolicy& policy = {});

struct ValidationResult {
    bool accepted = false;
    std::string reason;  // set when rejected
};

/// Accepted iff the query resolves against the catalog and its full join
/// has at least one result row.
ValidationResult validate(const Catalog& catalog, const Query& query);

struct Workload {
    std::vector<Query> queries;
    bool budget_exhausted = false;
    std::uint64_t candidates_tried = 0;
};

/// Round-robins the templates through generate+validate until target_count
/// queries are accepted or the retry budget (50x target) runs out.
Workload scale_workload(const std::vector<Query>& templates, const Catalog& catalog,
                        int target_count, std::uint64_t seed,
                        const MutationPolicy& policy = {}, DomainStore* store = nullptr);

std::vector<Query> load_workload(const std::string& path, const Catalog& catalog);
void save_workload(const std::vector<Query>& queries, const Catalog& catalog,
                   const std::string& path);

}  // namespace plansieve
