#include "plansieve/catalog.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <unordered_map>

#include "json.hpp"
#include "plansieve/planspace.hpp"

namespace plansieve {

using nlohmann::json;

namespace {

const ColumnSpec* find_column(const TableSpec& table, const std::string& name) {
    for (const auto& c : table.columns)
        if (c.name == name) return &c;
    return nullptr;
}

ColumnKind column_kind_from_name(const std::string& s) {
    if (s == "key") return ColumnKind::Key;
    if (s == "fk") return ColumnKind::ForeignKey;
    if (s == "attr") return ColumnKind::Attribute;
    throw ValidationError("unknown column kind '" + s + "'");
}

const char* column_kind_name(ColumnKind k) {
    switch (k) {
        case ColumnKind::Key: return "key";
        case ColumnKind::ForeignKey: return "fk";
        case ColumnKind::Attribute: return "attr";
    }
    return "?";
}

/// Inverse-CDF Zipf draw over ranks 1..n with exponent s.
class ZipfSampler {
public:
    ZipfSampler(std::uint64_t n, double s) : cumulative_(n) {
        double total = 0.0;
        for (std::uint64_t k = 1; k <= n; ++k) {
            total += std::pow(static_cast<double>(k), -s);
            cumulative_[k - 1] = total;
        }
    }

    std::int64_t draw(Rng& rng) const {
        double u = rng.real() * cumulative_.back();
        auto it = std::lower_bound(cumulative_.begin(), cumulative_.end(), u);
        return static_cast<std::int64_t>(it - cumulative_.begin()) + 1;
    }

private:
    std::vector<double> cumulative_;
};

}  // namespace

void SchemaSpec::validate() const {
    if (tables.empty()) throw ValidationError("schema has no tables");
    std::set<std::string> names;
    for (const auto& t : tables) {
        if (!names.insert(t.name).second)
            throw ValidationError("duplicate table name '" + t.name + "'");
        if (t.rows < 1)
            throw ValidationError("table '" + t.name + "' must have at least one row");
        std::set<std::string> cols;
        for (const auto& c : t.columns) {
            if (!cols.insert(c.name).second)
                throw ValidationError("duplicate column '" + t.name + "." + c.name + "'");
            if (c.kind == ColumnKind::Attribute && c.lo > c.hi)
                throw ValidationError("column '" + t.name + "." + c.name +
                                      "' has an empty domain");
        }
    }
    for (const auto& t : tables) {
        for (const auto& c : t.columns) {
            if (c.kind != ColumnKind::ForeignKey) continue;
            auto target = std::find_if(tables.begin(), tables.end(), [&](const TableSpec& u) {
                return u.name == c.target_table;
            });
            if (target == tables.end())
                throw ValidationError("foreign key '" + t.name + "." + c.name +
                                      "' references unknown table '" + c.target_table + "'");
            const ColumnSpec* tc = find_column(*target, c.target_column);
            if (!tc || tc->kind != ColumnKind::Key)
                throw ValidationError("foreign key '" + t.name + "." + c.name +
                                      "' must reference a key column, got '" +
                                      c.target_table + "." + c.target_column + "'");
        }
    }
}

SchemaSpec SchemaSpec::from_json_text(const std::string& text) {
    json j = json::parse(text);
    SchemaSpec spec;
    spec.seed = j.value("seed", std::uint64_t{0});
    spec.fk_skew = j.value("fk_skew", 1.1);
    for (const auto& jt : j.at("tables")) {
        TableSpec t;
        t.name = jt.at("name").get<std::string>();
        t.rows = jt.at("rows").get<std::uint64_t>();
        for (const auto& jc : jt.at("columns")) {
            ColumnSpec c;
            c.name = jc.at("name").get<std::string>();
            c.kind = column_kind_from_name(jc.at("kind").get<std::string>());
            if (c.kind == ColumnKind::ForeignKey) {
                std::string target = jc.at("target").get<std::string>();
                auto dot = target.find('.');
                if (dot == std::string::npos)
                    throw ValidationError("foreign key target '" + target +
                                          "' must look like table.column");
                c.target_table = target.substr(0, dot);
                c.target_column = target.substr(dot + 1);
            } else if (c.kind == ColumnKind::Attribute) {
                c.lo = jc.at("lo").get<std::int64_t>();
                c.hi = jc.at("hi").get<std::int64_t>();
            }
            t.columns.push_back(std::move(c));
        }
        spec.tables.push_back(std::move(t));
    }
    spec.validate();
    return spec;
}

std::string SchemaSpec::to_json_text() const {
    json j;
    j["seed"] = seed;
    j["fk_skew"] = fk_skew;
    j["tables"] = json::array();
    for (const auto& t : tables) {
        json jt{{"name", t.name}, {"rows", t.rows}, {"columns", json::array()}};
        for (const auto& c : t.columns) {
            json jc{{"name", c.name}, {"kind", column_kind_name(c.kind)}};
            if (c.kind == ColumnKind::ForeignKey)
                jc["target"] = c.target_table + "." + c.target_column;
            if (c.kind == ColumnKind::Attribute) {
                jc["lo"] = c.lo;
                jc["hi"] = c.hi;
            }
            jt["columns"].push_back(jc);
        }
        j["tables"].push_back(jt);
    }
    return j.dump(2);
}

SchemaSpec SchemaSpec::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open schema file '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return from_json_text(buf.str());
}

Catalog Catalog::generate(const SchemaSpec& spec) {
    spec.validate();
    Catalog cat;
    cat.spec_ = spec;
    for (std::size_t t = 0; t < spec.tables.size(); ++t)
        cat.table_ids_[spec.tables[t].name] = static_cast<TableId>(t);

    cat.columns_.resize(spec.tables.size());
    cat.sorted_columns_.resize(spec.tables.size());
    cat.distinct_.resize(spec.tables.size());

    for (std::size_t t = 0; t < spec.tables.size(); ++t) {
        const TableSpec& ts = spec.tables[t];
        cat.columns_[t].resize(ts.columns.size());
        for (std::size_t c = 0; c < ts.columns.size(); ++c) {
            const ColumnSpec& cs = ts.columns[c];
            std::vector<std::int64_t>& values = cat.columns_[t][c];
            values.resize(ts.rows);
            // one stream per column so tables are independent of each other
            Rng rng(derive_seed(spec.seed, ts.name + "." + cs.name));
            switch (cs.kind) {
                case ColumnKind::Key:
                    for (std::uint64_t r = 0; r < ts.rows; ++r)
                        values[r] = static_cast<std::int64_t>(r) + 1;
                    break;
                case ColumnKind::ForeignKey: {
                    TableId target = cat.table_ids_.at(cs.target_table);
                    std::uint64_t domain = spec.tables[target].rows;
                    ZipfSampler zipf(domain, spec.fk_skew);
                    for (std::uint64_t r = 0; r < ts.rows; ++r)
                        values[r] = zipf.draw(rng);
                    break;
                }
                case ColumnKind::Attribute:
                    for (std::uint64_t r = 0; r < ts.rows; ++r)
                        values[r] = rng.range(cs.lo, cs.hi);
                    break;
            }
        }
        // statistics
        cat.sorted_columns_[t].resize(ts.columns.size());
        cat.distinct_[t].resize(ts.columns.size());
        for (std::size_t c = 0; c < ts.columns.size(); ++c) {
            auto sorted = cat.columns_[t][c];
            std::sort(sorted.begin(), sorted.end());
            cat.distinct_[t][c] = static_cast<std::uint64_t>(
                std::unique(sorted.begin(), sorted.end()) - sorted.begin());
            // keep duplicates for rank queries; re-sort copy
            cat.sorted_columns_[t][c] = cat.columns_[t][c];
            std::sort(cat.sorted_columns_[t][c].begin(), cat.sorted_columns_[t][c].end());
        }
    }
    return cat;
}

TableId Catalog::table_id(const std::string& name) const {
    auto it = table_ids_.find(name);
    if (it == table_ids_.end()) throw ReferenceError("unknown table '" + name + "'");
    return it->second;
}

const std::string& Catalog::table_name(TableId t) const {
    if (t < 0 || t >= table_count()) throw ReferenceError("table id out of range");
    return spec_.tables[t].name;
}

std::uint64_t Catalog::row_count(TableId t) const {
    if (t < 0 || t >= table_count()) throw ReferenceError("table id out of range");
    return spec_.tables[t].rows;
}

int Catalog::column_index(TableId t, const std::string& column) const {
    if (t < 0 || t >= table_count()) throw ReferenceError("table id out of range");
    const auto& cols = spec_.tables[t].columns;
    for (std::size_t c = 0; c < cols.size(); ++c)
        if (cols[c].name == column) return static_cast<int>(c);
    throw ReferenceError("unknown column '" + spec_.tables[t].name + "." + column + "'");
}

bool Catalog::has_column(TableId t, const std::string& column) const {
    if (t < 0 || t >= table_count()) return false;
    const auto& cols = spec_.tables[t].columns;
    return std::any_of(cols.begin(), cols.end(),
                       [&](const ColumnSpec& c) { return c.name == column; });
}

const std::vector<std::int64_t>& Catalog::column(TableId t, int col) const {
    return columns_.at(t).at(col);
}

const std::vector<std::int64_t>& Catalog::sorted_column(TableId t, int col) const {
    return sorted_columns_.at(t).at(col);
}

std::uint64_t Catalog::distinct_count(TableId t, int col) const {
    return distinct_.at(t).at(col);
}

std::int64_t Catalog::column_min(TableId t, int col) const {
    return sorted_columns_.at(t).at(col).front();
}

std::int64_t Catalog::column_max(TableId t, int col) const {
    return sorted_columns_.at(t).at(col).back();
}

std::uint64_t Catalog::max_row_count() const {
    std::uint64_t m = 1;
    for (const auto& t : spec_.tables) m = std::max(m, t.rows);
    return m;
}

std::uint64_t Catalog::selection_count(const Selection& pred) const {
    int col = column_index(pred.table, pred.column);
    const auto& sorted = sorted_columns_[pred.table][col];
    auto lo = sorted.begin();
    auto hi = sorted.end();
    switch (pred.op) {
        case CmpOp::Eq:
            return std::upper_bound(lo, hi, pred.value) - std::lower_bound(lo, hi, pred.value);
        case CmpOp::Lt:
            return std::lower_bound(lo, hi, pred.value) - lo;
        case CmpOp::Le:
            return std::upper_bound(lo, hi, pred.value) - lo;
        case CmpOp::Gt:
            return hi - std::upper_bound(lo, hi, pred.value);
        case CmpOp::Ge:
            return hi - std::lower_bound(lo, hi, pred.value);
    }
    return 0;
}

namespace {

constexpr std::size_t kNestedLoopLimit = 64;

struct FilteredTable {
    TableId table = -1;
    std::vector<std::uint32_t> rows;  // surviving row indices
};

std::vector<std::uint32_t> filter_rows(const Catalog& catalog, TableId t,
                                       const std::vector<Selection>& selections) {
    std::vector<const std::vector<std::int64_t>*> cols;
    std::vector<const Selection*> preds;
    for (const auto& s : selections) {
        if (s.table != t) continue;
        cols.push_back(&catalog.column(t, catalog.column_index(t, s.column)));
        preds.push_back(&s);
    }
    std::vector<std::uint32_t> out;
    std::uint64_t n = catalog.row_count(t);
    out.reserve(n);
    for (std::uint64_t r = 0; r < n; ++r) {
        bool ok = true;
        for (std::size_t i = 0; i < preds.size(); ++i) {
            if (!cmp_eval((*cols[i])[r], preds[i]->op, preds[i]->value)) {
                ok = false;
                break;
            }
        }
        if (ok) out.push_back(static_cast<std::uint32_t>(r));
    }
    return out;
}

struct EquivClasses {
    // class id -> member columns (table, column index), canonical order
    std::vector<std::vector<std::pair<TableId, int>>> classes;
};

EquivClasses build_classes(const Catalog& catalog, const Subplan& subplan) {
    std::vector<std::pair<TableId, int>> cols;
    auto col_of = [&](TableId t, const std::string& name) {
        if (!catalog.has_column(t, name))
            throw ReferenceError("unknown column '" + catalog.table_name(t) + "." + name + "'");
        return std::make_pair(t, catalog.column_index(t, name));
    };
    auto index_of = [&](std::pair<TableId, int> c) {
        auto it = std::find(cols.begin(), cols.end(), c);
        if (it == cols.end()) {
            cols.push_back(c);
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
        auto a = index_of(col_of(e.t1, e.c1));
        auto b = index_of(col_of(e.t2, e.c2));
        while (parent.size() < cols.size()) parent.push_back(parent.size());
        parent[find(a)] = find(b);
    }
    while (parent.size() < cols.size()) parent.push_back(parent.size());

    std::map<std::size_t, std::vector<std::pair<TableId, int>>> grouped;
    for (std::size_t i = 0; i < cols.size(); ++i) grouped[find(i)].push_back(cols[i]);
    EquivClasses out;
    for (auto& [root, members] : grouped) {
        if (members.size() < 2) continue;
        std::sort(members.begin(), members.end());
        out.classes.push_back(std::move(members));
    }
    std::sort(out.classes.begin(), out.classes.end());
    return out;
}

struct KeyHash {
    std::size_t operator()(const std::vector<std::int64_t>& key) const {
        std::size_t h = 1469598103934665603ULL;
        for (std::int64_t v : key) {
            h ^= static_cast<std::size_t>(v);
            h *= 1099511628211ULL;
        }
        return h;
    }
};

}  // namespace

std::uint64_t filtered_row_count(const Catalog& catalog, TableId t,
                                 const std::vector<Selection>& selections) {
    for (const auto& s : selections)
        if (s.table == t && !catalog.has_column(t, s.column))
            throw ReferenceError("unknown column '" + catalog.table_name(t) + "." + s.column + "'");
    return filter_rows(catalog, t, selections).size();
}

std::uint64_t true_cardinality(const Catalog& catalog, const Subplan& subplan) {
    std::vector<TableId> tables = mask_to_tables(subplan.tables);
    for (TableId t : tables)
        if (t < 0 || t >= catalog.table_count())
            throw ReferenceError("subplan references unknown table id " + std::to_string(t));

    if (tables.size() == 1) return filtered_row_count(catalog, tables[0], subplan.selections);

    EquivClasses classes = build_classes(catalog, subplan);

    std::map<TableId, std::vector<std::uint32_t>> filtered;
    for (TableId t : tables) filtered[t] = filter_rows(catalog, t, subplan.selections);

    // within-table equality inside one class (t.a = t.b) is applied up front
    for (const auto& cls : classes.classes) {
        for (TableId t : tables) {
            std::vector<int> own;
            for (const auto& [ct, cc] : cls)
                if (ct == t) own.push_back(cc);
            if (own.size() < 2) continue;
            auto& rows = filtered[t];
            std::vector<std::uint32_t> kept;
            for (std::uint32_t r : rows) {
                std::int64_t v = catalog.column(t, own[0])[r];
                bool ok = true;
                for (std::size_t i = 1; i < own.size(); ++i)
                    if (catalog.column(t, own[i])[r] != v) { ok = false; break; }
                if (ok) kept.push_back(r);
            }
            rows = std::move(kept);
        }
    }

    auto tables_linked = [&](TableId a, TableId b) {
        for (const auto& cls : classes.classes) {
            bool ha = false, hb = false;
            for (const auto& [ct, cc] : cls) {
                ha |= ct == a;
                hb |= ct == b;
            }
            if (ha && hb) return true;
        }
        return false;
    };

    // greedy join order: smallest filtered table first, then the smallest
    // table linked to the current prefix
    std::vector<TableId> order;
    {
        std::vector<TableId> remaining = tables;
        auto smallest = std::min_element(remaining.begin(), remaining.end(),
                                         [&](TableId a, TableId b) {
                                             auto sa = filtered[a].size(), sb = filtered[b].size();
                                             return std::tie(sa, a) < std::tie(sb, b);
                                         });
        order.push_back(*smallest);
        remaining.erase(smallest);
        while (!remaining.empty()) {
            auto best = remaining.end();
            for (auto it = remaining.begin(); it != remaining.end(); ++it) {
                bool linked = std::any_of(order.begin(), order.end(),
                                          [&](TableId o) { return tables_linked(o, *it); });
                if (!linked) continue;
                if (best == remaining.end() ||
                    std::make_pair(filtered[*it].size(), *it) <
                        std::make_pair(filtered[*best].size(), *best))
                    best = it;
            }
            if (best == remaining.end())
                throw ValidationError("subplan " + mask_to_string(subplan.tables) +
                                      " has no join predicates connecting all tables");
            order.push_back(*best);
            remaining.erase(best);
        }
    }

    // tuples of row indices, aligned with `order` prefix
    std::vector<std::vector<std::uint32_t>> current;
    for (std::uint32_t r : filtered[order[0]]) current.push_back({r});

    for (std::size_t step = 1; step < order.size() && !current.empty(); ++step) {
        TableId t = order[step];
        const auto& rows = filtered[t];

        // equality constraints between t and the joined prefix, per class:
        // prefix side may expose several member columns; the probe value from
        // t is compared against each of them
        struct Constraint {
            int t_col;                                       // column in t
            std::vector<std::pair<std::size_t, int>> prev;   // (prefix pos, column)
        };
        std::vector<Constraint> constraints;
        for (const auto& cls : classes.classes) {
            Constraint c{-1, {}};
            for (const auto& [ct, cc] : cls) {
                if (ct == t) {
                    c.t_col = cc;  // all of t's members are equal already
                } else {
                    auto pos = std::find(order.begin(), order.begin() + step, ct);
                    if (pos != order.begin() + step)
                        c.prev.emplace_back(pos - order.begin(), cc);
                }
            }
            if (c.t_col >= 0 && !c.prev.empty()) constraints.push_back(std::move(c));
        }

        auto prev_key = [&](const std::vector<std::uint32_t>& tup) {
            std::vector<std::int64_t> key;
            for (const auto& c : constraints)
                for (const auto& [pos, col] : c.prev)
                    key.push_back(catalog.column(order[pos], col)[tup[pos]]);
            return key;
        };
        auto t_key = [&](std::uint32_t r) {
            std::vector<std::int64_t> key;
            for (const auto& c : constraints) {
                std::int64_t v = catalog.column(t, c.t_col)[r];
                for (std::size_t i = 0; i < c.prev.size(); ++i) key.push_back(v);
            }
            return key;
        };

        std::vector<std::vector<std::uint32_t>> next;
        if (constraints.empty())
            throw ValidationError("subplan " + mask_to_string(subplan.tables) +
                                  " requires a cross product");

        if (current.size() < kNestedLoopLimit || rows.size() < kNestedLoopLimit) {
            for (const auto& tup : current) {
                auto pk = prev_key(tup);
                for (std::uint32_t r : rows) {
                    if (t_key(r) == pk) {
                        auto nt = tup;
                        nt.push_back(r);
                        next.push_back(std::move(nt));
                    }
                }
            }
        } else if (rows.size() <= current.size()) {
            std::unordered_multimap<std::vector<std::int64_t>, std::uint32_t, KeyHash> index;
            index.reserve(rows.size());
            for (std::uint32_t r : rows) index.emplace(t_key(r), r);
            for (const auto& tup : current) {
                auto [lo, hi] = index.equal_range(prev_key(tup));
                for (auto it = lo; it != hi; ++it) {
                    auto nt = tup;
                    nt.push_back(it->second);
                    next.push_back(std::move(nt));
                }
            }
        } else {
            std::unordered_multimap<std::vector<std::int64_t>, std::size_t, KeyHash> index;
            index.reserve(current.size());
            for (std::size_t i = 0; i < current.size(); ++i)
                index.emplace(prev_key(current[i]), i);
            for (std::uint32_t r : rows) {
                auto [lo, hi] = index.equal_range(t_key(r));
                for (auto it = lo; it != hi; ++it) {
                    auto nt = current[it->second];
                    nt.push_back(r);
                    next.push_back(std::move(nt));
                }
            }
        }
        current = std::move(next);
    }
    return current.size();
}

ExecutionLog execute_query(const Catalog& catalog, const PlanTree& plan,
                           const std::string& query_id) {
    std::map<std::pair<int, TableMask>, Subplan> nodes;
    for (std::size_t i = 0; i < plan.node_count(); ++i) {
        const Subplan& sp = plan.node(static_cast<int>(i)).subplan;
        nodes.emplace(std::make_pair(sp.k(), sp.tables), sp);
    }
    ExecutionLog log;
    log.query_id = query_id;
    for (const auto& [key, sp] : nodes)
        log.entries.push_back({sp, true_cardinality(catalog, sp)});
    return log;
}

}  // namespace plansieve
