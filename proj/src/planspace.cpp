#include "plansieve/planspace.hpp"

#include <algorithm>
#include <functional>
#include <sstream>

namespace plansieve {

TableMask JoinGraph::all_mask() const {
    TableMask m = 0;
    for (TableId t : tables) m |= mask_of(t);
    return m;
}

bool JoinGraph::adjacent(TableId a, TableId b) const {
    if (a == b) return false;
    for (const auto& cls : classes) {
        bool ha = false, hb = false;
        for (const auto& c : cls) {
            ha |= c.table == a;
            hb |= c.table == b;
        }
        if (ha && hb) return true;
    }
    return false;
}

bool JoinGraph::connected(TableMask subset) const {
    if (subset == 0) return false;
    std::vector<TableId> members = mask_to_tables(subset);
    TableMask visited = mask_of(members[0]);
    std::vector<TableId> frontier{members[0]};
    while (!frontier.empty()) {
        TableId t = frontier.back();
        frontier.pop_back();
        for (TableId u : members) {
            if ((visited & mask_of(u)) == 0 && adjacent(t, u)) {
                visited |= mask_of(u);
                frontier.push_back(u);
            }
        }
    }
    return visited == subset;
}

Subplan JoinGraph::subplan(TableMask subset) const {
    Subplan sp;
    sp.tables = subset;
    for (const auto& cls : classes) {
        std::vector<ColumnRef> members;
        for (const auto& c : cls)
            if (subset & mask_of(c.table)) members.push_back(c);
        // chain edges over the canonical member order express the class
        for (std::size_t i = 0; i + 1 < members.size(); ++i)
            sp.joins.push_back({members[i].table, members[i].column, members[i + 1].table,
                                members[i + 1].column});
    }
    for (const auto& s : selections)
        if (subset & mask_of(s.table)) sp.selections.push_back(s);
    return sp;
}

JoinGraph infer_join_closure(const Query& query) {
    for (const auto& e : query.joins) {
        for (TableId t : {e.t1, e.t2})
            if (std::find(query.tables.begin(), query.tables.end(), t) == query.tables.end())
                throw ValidationError("query '" + query.id + "' joins table id " +
                                      std::to_string(t) + " that is not in its table list");
    }
    for (const auto& s : query.selections)
        if (std::find(query.tables.begin(), query.tables.end(), s.table) == query.tables.end())
            throw ValidationError("query '" + query.id + "' selects on table id " +
                                  std::to_string(s.table) + " that is not in its table list");

    JoinGraph g;
    g.query_id = query.id;
    g.tables = query.tables;
    std::sort(g.tables.begin(), g.tables.end());
    g.tables.erase(std::unique(g.tables.begin(), g.tables.end()), g.tables.end());
    g.selections = query.selections;
    std::sort(g.selections.begin(), g.selections.end());

    // union-find over the columns mentioned in join predicates
    std::vector<ColumnRef> cols;
    auto index_of = [&](const ColumnRef& c) {
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
    for (const auto& e : query.joins) {
        auto a = index_of({e.t1, e.c1});
        auto b = index_of({e.t2, e.c2});
        while (parent.size() < cols.size()) parent.push_back(parent.size());
        parent[find(a)] = find(b);
    }
    while (parent.size() < cols.size()) parent.push_back(parent.size());

    std::map<std::size_t, std::vector<ColumnRef>> grouped;
    for (std::size_t i = 0; i < cols.size(); ++i) grouped[find(i)].push_back(cols[i]);
    for (auto& [root, members] : grouped) {
        if (members.size() < 2) continue;
        std::sort(members.begin(), members.end());
        g.classes.push_back(std::move(members));
    }
    std::sort(g.classes.begin(), g.classes.end());

    if (g.tables.size() > 1 && !g.connected(g.all_mask()))
        throw ValidationError("query '" + query.id +
                              "' is disconnected after join closure (cross products unsupported)");
    return g;
}

std::map<int, std::vector<Subplan>> enumerate_subplans(const JoinGraph& graph) {
    std::map<int, std::vector<Subplan>> out;
    int T = static_cast<int>(graph.tables.size());
    if (T < 2) return out;

    // subsets in lexicographic order of their sorted table-id vectors:
    // generate per k via combinations over the sorted table list
    for (int k = 2; k <= T; ++k) {
        std::vector<int> idx(k);
        for (int i = 0; i < k; ++i) idx[i] = i;
        std::vector<Subplan>& bucket = out[k];
        for (;;) {
            TableMask m = 0;
            for (int i : idx) m |= mask_of(graph.tables[i]);
            if (graph.connected(m)) bucket.push_back(graph.subplan(m));
            int pos = k - 1;
            while (pos >= 0 && idx[pos] == T - k + pos) --pos;
            if (pos < 0) break;
            ++idx[pos];
            for (int i = pos + 1; i < k; ++i) idx[i] = idx[i - 1] + 1;
        }
        if (bucket.empty()) out.erase(k);
    }
    return out;
}

void CardinalityAssignment::set(TableMask tables, double value, Provenance prov) {
    entries_[tables] = Entry{value, prov};
}

bool CardinalityAssignment::contains(TableMask tables) const {
    return entries_.count(tables) > 0;
}

double CardinalityAssignment::at(TableMask tables) const {
    return entry(tables).value;
}

const CardinalityAssignment::Entry& CardinalityAssignment::entry(TableMask tables) const {
    auto it = entries_.find(tables);
    if (it == entries_.end())
        throw DataError("assignment has no cardinality for subplan " + mask_to_string(tables));
    return it->second;
}

PlanTree PlanTree::leaf(const JoinGraph& graph, TableId table) {
    PlanTree tree;
    tree.set_root(tree.add_leaf(graph.subplan(mask_of(table))));
    return tree;
}

int PlanTree::add_leaf(const Subplan& sp) {
    nodes_.push_back({sp, -1, -1});
    return static_cast<int>(nodes_.size()) - 1;
}

int PlanTree::add_join(int left, int right, const Subplan& sp) {
    nodes_.push_back({sp, left, right});
    return static_cast<int>(nodes_.size()) - 1;
}

std::string PlanTree::to_string() const {
    std::function<std::string(int)> rec = [&](int i) -> std::string {
        const Node& n = nodes_[i];
        if (n.left < 0) return std::to_string(mask_to_tables(n.subplan.tables)[0]);
        return "(" + rec(n.left) + "*" + rec(n.right) + ")";
    };
    return root_ >= 0 ? rec(root_) : "<empty>";
}

double cost_plan(const PlanTree& plan, const CardinalityAssignment& cards) {
    double total = 0.0;
    for (std::size_t i = 0; i < plan.node_count(); ++i) {
        const auto& n = plan.node(static_cast<int>(i));
        if (n.left < 0) continue;
        total += cards.at(n.subplan.tables);
    }
    return total;
}

namespace {

/// true iff the sorted table-id sequence of `a` precedes that of `b`
bool lex_less(TableMask a, TableMask b) {
    while (a && b) {
        int ta = __builtin_ctzll(a);
        int tb = __builtin_ctzll(b);
        if (ta != tb) return ta < tb;
        a &= a - 1;
        b &= b - 1;
    }
    return a == 0 && b != 0;
}

}  // namespace

PlanTree optimize(const JoinGraph& graph, const CardinalityAssignment& cards,
                  PlanShape shape) {
    int T = static_cast<int>(graph.tables.size());
    if (T > 20) throw ConfigError("dynamic programming supports at most 20 tables per query");
    PlanTree tree;
    if (T == 1) {
        tree.set_root(tree.add_leaf(graph.subplan(mask_of(graph.tables[0]))));
        return tree;
    }

    auto to_global = [&](std::uint32_t local) {
        TableMask m = 0;
        for (int i = 0; i < T; ++i)
            if (local & (1u << i)) m |= mask_of(graph.tables[i]);
        return m;
    };

    std::uint32_t full = (T == 32) ? 0xffffffffu : ((1u << T) - 1);
    std::vector<char> conn(full + 1, 0);
    std::vector<double> best(full + 1, 0.0);
    std::vector<std::uint32_t> best_left(full + 1, 0);
    std::vector<char> solved(full + 1, 0);

    for (std::uint32_t s = 1; s <= full; ++s) conn[s] = graph.connected(to_global(s));

    for (std::uint32_t s = 1; s <= full; ++s) {
        if (!conn[s]) continue;
        if (__builtin_popcount(s) == 1) {
            best[s] = 0.0;
            solved[s] = 1;
            continue;
        }
        double card = cards.at(to_global(s));
        bool found = false;
        // iterate proper nonempty subsets of s
        for (std::uint32_t left = (s - 1) & s; left != 0; left = (left - 1) & s) {
            std::uint32_t right = s ^ left;
            if (!conn[left] || !conn[right]) continue;
            if (shape == PlanShape::LeftDeep && __builtin_popcount(right) != 1) continue;
            double c = best[left] + best[right] + card;
            bool better = !found || c < best[s] ||
                          (c == best[s] && lex_less(to_global(left), to_global(best_left[s])));
            if (better) {
                best[s] = c;
                best_left[s] = left;
                found = true;
            }
        }
        if (!found)
            throw DataError("no connected split for subset " + mask_to_string(to_global(s)));
        solved[s] = 1;
    }
    if (!solved[full])
        throw DataError("optimizer could not cover the full table set");

    std::function<int(std::uint32_t)> build = [&](std::uint32_t s) -> int {
        if (__builtin_popcount(s) == 1)
            return tree.add_leaf(graph.subplan(to_global(s)));
        int l = build(best_left[s]);
        int r = build(s ^ best_left[s]);
        return tree.add_join(l, r, graph.subplan(to_global(s)));
    };
    tree.set_root(build(full));
    return tree;
}

double p_error(const JoinGraph& graph, const CardinalityAssignment& est,
               const CardinalityAssignment& truth, PlanShape shape) {
    PlanTree chosen = optimize(graph, est, shape);
    PlanTree opt = optimize(graph, truth, shape);
    double num = cost_plan(chosen, truth);
    double den = cost_plan(opt, truth);
    if (den == 0.0 && num == 0.0) return 1.0;
    if (den == 0.0)
        throw DataError("optimal plan cost is zero but the chosen plan costs " +
                        std::to_string(num));
    return num / den;
}

PlanLabel label_from_p_error(double p, const SubOptConfig& cfg) {
    if (cfg.c < 1.0) throw ConfigError("sub-optimality threshold c must be >= 1");
    return p > cfg.c * (1.0 + cfg.epsilon) ? PlanLabel::SubOptimal : PlanLabel::Optimal;
}

PlanLabel label_plan(const JoinGraph& graph, const CardinalityAssignment& est,
                     const CardinalityAssignment& truth, const SubOptConfig& cfg,
                     PlanShape shape) {
    return label_from_p_error(p_error(graph, est, truth, shape), cfg);
}

}  // namespace plansieve
