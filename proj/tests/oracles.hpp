// Test-only oracles: independent brute-force routes used to check the
// production implementations. These deliberately avoid the library's join
// and optimization code paths.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include "plansieve/catalog.hpp"
#include "plansieve/planspace.hpp"

namespace plansieve::testing {

/// Plain nested loops over all filtered row combinations, checking every
/// join edge directly. Exponential; fixtures only.
inline std::uint64_t naive_join_count(const Catalog& catalog, const Subplan& subplan) {
    std::vector<TableId> tables = mask_to_tables(subplan.tables);
    std::vector<std::vector<std::uint32_t>> rows;
    for (TableId t : tables) {
        std::vector<std::uint32_t> kept;
        for (std::uint32_t r = 0; r < catalog.row_count(t); ++r) {
            bool ok = true;
            for (const auto& s : subplan.selections) {
                if (s.table != t) continue;
                std::int64_t v = catalog.column(t, catalog.column_index(t, s.column))[r];
                if (!cmp_eval(v, s.op, s.value)) {
                    ok = false;
                    break;
                }
            }
            if (ok) kept.push_back(r);
        }
        rows.push_back(std::move(kept));
    }

    std::uint64_t count = 0;
    std::vector<std::uint32_t> tuple(tables.size());
    auto edge_holds = [&](const JoinEdge& e) {
        auto idx_of = [&](TableId t) {
            return std::find(tables.begin(), tables.end(), t) - tables.begin();
        };
        std::int64_t v1 =
            catalog.column(e.t1, catalog.column_index(e.t1, e.c1))[tuple[idx_of(e.t1)]];
        std::int64_t v2 =
            catalog.column(e.t2, catalog.column_index(e.t2, e.c2))[tuple[idx_of(e.t2)]];
        return v1 == v2;
    };
    std::function<void(std::size_t)> rec = [&](std::size_t level) {
        if (level == tables.size()) {
            for (const auto& e : subplan.joins)
                if (!edge_holds(e)) return;
            ++count;
            return;
        }
        for (std::uint32_t r : rows[level]) {
            tuple[level] = r;
            rec(level + 1);
        }
    };
    rec(0);
    return count;
}

/// Minimum cost over every binary join tree, found by explicit enumeration
/// of all connected splits (no memoization).
inline double exhaustive_min_cost(const JoinGraph& graph, const CardinalityAssignment& cards,
                                  TableMask subset) {
    if (popcount(subset) == 1) return 0.0;
    std::vector<TableId> members = mask_to_tables(subset);
    double best = std::numeric_limits<double>::infinity();
    // iterate all proper nonempty subsets containing the first member to
    // avoid double-counting mirrored splits
    std::size_t m = members.size();
    for (std::uint64_t bits = 0; bits + 1 < (std::uint64_t{1} << (m - 1)); ++bits) {
        TableMask left = mask_of(members[0]);
        for (std::size_t i = 1; i < m; ++i)
            if (bits & (std::uint64_t{1} << (i - 1))) left |= mask_of(members[i]);
        TableMask right = subset ^ left;
        if (!graph.connected(left) || !graph.connected(right)) continue;
        double c = exhaustive_min_cost(graph, cards, left) +
                   exhaustive_min_cost(graph, cards, right);
        best = std::min(best, c);
    }
    return best + cards.at(subset);
}

struct RandomFixture {
    SchemaSpec schema;
    Query query;
};

/// Random FK-tree schema plus a query joining all of its tables; the join
/// graph is connected by construction.
inline RandomFixture random_fixture(std::uint64_t seed, int max_tables = 6) {
    Rng rng(seed);
    int T = 2 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_tables - 1)));

    RandomFixture fx;
    fx.schema.seed = rng.next();
    for (int t = 0; t < T; ++t) {
        TableSpec table;
        table.name = "t" + std::to_string(t);
        table.rows = 20 + rng.below(40);
        table.columns.push_back({"id", ColumnKind::Key, "", "", 0, 0});
        if (t > 0) {
            int parent = static_cast<int>(rng.below(static_cast<std::uint64_t>(t)));
            table.columns.push_back(
                {"fk", ColumnKind::ForeignKey, "t" + std::to_string(parent), "id", 0, 0});
        }
        table.columns.push_back({"x", ColumnKind::Attribute, "", "", 1, 20});
        fx.schema.tables.push_back(std::move(table));
    }

    fx.query.id = "q" + std::to_string(seed);
    for (int t = 0; t < T; ++t) fx.query.tables.push_back(t);
    for (int t = 1; t < T; ++t) {
        const ColumnSpec& fk = fx.schema.tables[t].columns[1];
        TableId parent = 0;
        for (int u = 0; u < T; ++u)
            if (fx.schema.tables[u].name == fk.target_table) parent = u;
        fx.query.joins.push_back({t, "fk", parent, "id"});
    }
    int n_sel = static_cast<int>(rng.below(3));
    for (int i = 0; i < n_sel; ++i) {
        Selection s;
        s.table = static_cast<TableId>(rng.below(static_cast<std::uint64_t>(T)));
        s.column = "x";
        s.op = rng.real() < 0.5 ? CmpOp::Le : CmpOp::Ge;
        s.value = rng.range(1, 20);
        fx.query.selections.push_back(s);
    }
    return fx;
}

/// Oracle cardinalities for every connected subset plus a noisy copy.
inline void fill_assignments(const Catalog& catalog, const JoinGraph& graph,
                             std::uint64_t seed, double sigma,
                             CardinalityAssignment& truth, CardinalityAssignment& noisy) {
    Rng rng(seed);
    auto subs = enumerate_subplans(graph);
    for (TableId t : graph.tables) {
        double card =
            static_cast<double>(true_cardinality(catalog, graph.subplan(mask_of(t))));
        truth.set(mask_of(t), card, Provenance::True);
        noisy.set(mask_of(t), card, Provenance::Estimated);
    }
    for (const auto& [k, list] : subs)
        for (const auto& sp : list) {
            double card = static_cast<double>(true_cardinality(catalog, sp));
            truth.set(sp.tables, card, Provenance::True);
            noisy.set(sp.tables, card * std::exp(sigma * rng.normal()),
                      Provenance::Estimated);
        }
}

}  // namespace plansieve::testing
