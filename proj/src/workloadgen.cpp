#include "plansieve/workloadgen.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "plansieve/planspace.hpp"

namespace plansieve {

using nlohmann::json;

Query TemplateComponents::recombine(const std::string& id) const {
    Query q;
    q.id = id;
    q.tables = tables;
    q.joins = joins;
    q.selections = slots;
    return q;
}

TemplateComponents extract_components(const Query& tmpl) {
    return {tmpl.tables, tmpl.joins, tmpl.selections};
}

const DomainInfo* DomainStore::find(const std::string& column_key) const {
    auto it = infos_.find(column_key);
    return it == infos_.end() ? nullptr : &it->second;
}

void DomainStore::put(const DomainInfo& info) { infos_[info.column_key] = info; }

void DomainStore::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write domain store '" + path + "'");
    for (const auto& [key, info] : infos_) {
        json j{{"column", key},
               {"min", info.min},
               {"max", info.max},
               {"sample", info.sample},
               {"row_count", info.row_count}};
        out << j.dump() << '\n';
    }
}

DomainStore DomainStore::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open domain store '" + path + "'");
    DomainStore store;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        DomainInfo info;
        info.column_key = j.at("column").get<std::string>();
        info.min = j.at("min").get<std::int64_t>();
        info.max = j.at("max").get<std::int64_t>();
        info.sample = j.at("sample").get<std::vector<std::int64_t>>();
        info.row_count = j.at("row_count").get<std::uint64_t>();
        store.put(info);
    }
    return store;
}

DomainInfo learn_domain(const Catalog& catalog, TableId table, const std::string& column,
                        DomainStore& store, std::uint64_t* scans) {
    std::string key = catalog.table_name(table) + "." + column;
    if (const DomainInfo* hit = store.find(key)) return *hit;

    int col = catalog.column_index(table, column);  // throws on unknown column
    if (scans) ++*scans;
    const auto& sorted = catalog.sorted_column(table, col);
    DomainInfo info;
    info.column_key = key;
    info.min = sorted.front();
    info.max = sorted.back();
    info.row_count = catalog.row_count(table);
    std::vector<std::int64_t> distinct = sorted;
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    if (distinct.size() <= 64) {
        info.sample = distinct;
    } else {
        // evenly strided sample keeps the result deterministic
        for (std::size_t i = 0; i < 64; ++i)
            info.sample.push_back(distinct[i * distinct.size() / 64]);
    }
    store.put(info);
    return info;
}

std::vector<Query> generate(const Query& tmpl, const DomainStore& store,
                            const Catalog& catalog, int n, std::uint64_t seed,
                            const MutationPolicy& policy) {
    if (n <= 0) throw ConfigError("variant count must be positive");
    TemplateComponents parts = extract_components(tmpl);
    static constexpr CmpOp kOps[] = {CmpOp::Eq, CmpOp::Lt, CmpOp::Gt, CmpOp::Le, CmpOp::Ge};

    std::vector<Query> out;
    for (int v = 0; v < n; ++v) {
        Rng rng(derive_seed(seed, tmpl.id, static_cast<std::uint64_t>(v)));
        Query q;
        q.id = tmpl.id + "_v" + std::to_string(v);
        q.tables = parts.tables;
        q.joins = parts.joins;
        for (const Selection& slot : parts.slots) {
            double roll = rng.real();
            if (roll < policy.keep) {
                q.selections.push_back(slot);
            } else if (roll < policy.keep + policy.revalue) {
                const DomainInfo* dom =
                    store.find(catalog.table_name(slot.table) + "." + slot.column);
                if (!dom)
                    throw DataError("domain for " + catalog.table_name(slot.table) + "." +
                                    slot.column + " has not been learned");
                Selection s = slot;
                s.op = kOps[rng.below(5)];
                s.value = dom->sample.empty() ? slot.value
                                              : dom->sample[rng.below(dom->sample.size())];
                q.selections.push_back(s);
            }
            // else: drop the slot
        }
        out.push_back(std::move(q));
    }
    return out;
}

ValidationResult validate(const Catalog& catalog, const Query& query) {
    for (TableId t : query.tables)
        if (t < 0 || t >= catalog.table_count())
            return {false, "unknown table id " + std::to_string(t)};
    std::set<TableId> known(query.tables.begin(), query.tables.end());
    for (const auto& s : query.selections) {
        if (!known.count(s.table))
            return {false, "selection references table id " + std::to_string(s.table) +
                               " outside the query"};
        if (!catalog.has_column(s.table, s.column))
            return {false, "unknown column " + catalog.table_name(s.table) + "." + s.column};
    }
    for (const auto& e : query.joins) {
        if (!known.count(e.t1) || !known.count(e.t2))
            return {false, "join references a table outside the query"};
        if (!catalog.has_column(e.t1, e.c1) || !catalog.has_column(e.t2, e.c2))
            return {false, "join references an unknown column"};
    }
    JoinGraph graph;
    try {
        graph = infer_join_closure(query);
    } catch (const ValidationError& e) {
        return {false, e.what()};
    }
    std::uint64_t card = true_cardinality(catalog, graph.subplan(graph.all_mask()));
    if (card == 0) return {false, "empty result"};
    return {true, ""};
}

Workload scale_workload(const std::vector<Query>& templates, const Catalog& catalog,
                        int target_count, std::uint64_t seed, const MutationPolicy& policy,
                        DomainStore* store) {
    if (templates.empty()) throw ConfigError("need at least one template");
    if (target_count <= 0) throw ConfigError("target count must be positive");

    DomainStore local;
    DomainStore& domains = store ? *store : local;
    for (const Query& tmpl : templates)
        for (const Selection& slot : tmpl.selections)
            learn_domain(catalog, slot.table, slot.column, domains);

    Workload result;
    const std::uint64_t budget = static_cast<std::uint64_t>(target_count) * 50;
    std::uint64_t round = 0;
    while (result.queries.size() < static_cast<std::size_t>(target_count) &&
           result.candidates_tried < budget) {
        for (std::size_t t = 0;
             t < templates.size() && result.queries.size() < static_cast<std::size_t>(target_count);
             ++t) {
            if (result.candidates_tried >= budget) break;
            std::uint64_t variant_seed =
                derive_seed(seed, templates[t].id + "/round", round);
            std::vector<Query> cands =
                generate(templates[t], domains, catalog, 1, variant_seed, policy);
            ++result.candidates_tried;
            Query q = cands[0];
            q.id = templates[t].id + "_s" + std::to_string(result.queries.size());
            if (validate(catalog, q).accepted) result.queries.push_back(std::move(q));
        }
        ++round;
    }
    result.budget_exhausted = result.queries.size() < static_cast<std::size_t>(target_count);
    return result;
}

std::vector<Query> load_workload(const std::string& path, const Catalog& catalog) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open workload file '" + path + "'");
    std::vector<Query> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j = json::parse(line);
        Query q;
        q.id = j.at("id").get<std::string>();
        for (const auto& name : j.at("tables"))
            q.tables.push_back(catalog.table_id(name.get<std::string>()));
        for (const auto& je : j.at("joins")) {
            if (!je.is_array() || je.size() != 4)
                throw ValidationError("workload line " + std::to_string(lineno) +
                                      ": joins must be [t1, c1, t2, c2]");
            JoinEdge e;
            e.t1 = catalog.table_id(je[0].get<std::string>());
            e.c1 = je[1].get<std::string>();
            e.t2 = catalog.table_id(je[2].get<std::string>());
            e.c2 = je[3].get<std::string>();
            q.joins.push_back(std::move(e));
        }
        for (const auto& js : j.value("selections", json::array())) {
            Selection s;
            s.table = catalog.table_id(js.at("table").get<std::string>());
            s.column = js.at("col").get<std::string>();
            s.op = cmp_op_from_name(js.at("op").get<std::string>());
            s.value = js.at("value").get<std::int64_t>();
            q.selections.push_back(std::move(s));
        }
        out.push_back(std::move(q));
    }
    return out;
}

void save_workload(const std::vector<Query>& queries, const Catalog& catalog,
                   const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write workload file '" + path + "'");
    for (const Query& q : queries) {
        json joins = json::array();
        for (const auto& e : q.joins)
            joins.push_back({catalog.table_name(e.t1), e.c1, catalog.table_name(e.t2), e.c2});
        json sels = json::array();
        for (const auto& s : q.selections)
            sels.push_back({{"table", catalog.table_name(s.table)},
                            {"col", s.column},
                            {"op", cmp_op_name(s.op)},
                            {"value", s.value}});
        json tables = json::array();
        for (TableId t : q.tables) tables.push_back(catalog.table_name(t));
        json line{{"id", q.id}, {"tables", tables}, {"joins", joins}, {"selections", sels}};
        out << line.dump() << '\n';
    }
}

}  // namespace plansieve
