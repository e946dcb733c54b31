#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "plansieve/common.hpp"
#include "plansieve/query.hpp"

namespace plansieve {

class Catalog;

/// Join graph after closing column equalities under transitivity. Two tables
/// are adjacent iff they hold columns of the same equivalence class.
class JoinGraph {
public:
    std::string query_id;
    std::vector<TableId> tables;           // sorted
    std::vector<Selection> selections;     // canonical order
    std::vector<std::vector<ColumnRef>> classes;  // each sorted, size >= 2

    TableMask all_mask() const;
    bool adjacent(TableId a, TableId b) const;
    bool connected(TableMask subset) const;

    /// Induced subplan for a table subset: chain joins per equivalence class
    /// plus the selections restricted to the subset.
    Subplan subplan(TableMask subset) const;
};

/// Closes the query's join predicates under transitivity. Throws
/// ValidationError if the closed graph does not connect all tables
/// (cross products are unsupported).
JoinGraph infer_join_closure(const Query& query);

/// All connected table subsets of size 2..T, grouped by join size, each in
/// canonical (lexicographic table-id) order.
std::map<int, std::vector<Subplan>> enumerate_subplans(const JoinGraph& graph);

enum class Provenance { True, Surrogate, Estimated };

/// Per-query map from canonical subplan (table set) to a cardinality value.
class CardinalityAssignment {
public:
    struct Entry {
        double value = 0.0;
        Provenance provenance = Provenance::Estimated;
    };

    void set(TableMask tables, double value, Provenance prov);
    bool contains(TableMask tables) const;
    double at(TableMask tables) const;  // throws DataError naming the subplan
    const Entry& entry(TableMask tables) const;
    const std::map<TableMask, Entry>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }

private:
    std::map<TableMask, Entry> entries_;
};

/// Binary join tree. Nodes carry their full subplan so the tree can be
/// executed or costed without the originating graph.
class PlanTree {
public:
    struct Node {
        Subplan subplan;
        int left = -1;   // -1: leaf
        int right = -1;
    };

    static PlanTree leaf(const JoinGraph& graph, TableId table);

    int add_leaf(const Subplan& sp);
    int add_join(int left, int right, const Subplan& sp);
    void set_root(int node) { root_ = node; }

    int root() const { return root_; }
    const Node& node(int i) const { return nodes_[i]; }
    std::size_t node_count() const { return nodes_.size(); }
    bool is_leaf(int i) const { return nodes_[i].left < 0; }

    const Subplan& root_subplan() const { return nodes_[root_].subplan; }

    /// Text form like ((A⋈B)⋈C) using table ids.
    std::string to_string() const;

private:
    std::vector<Node> nodes_;
    int root_ = -1;
};

enum class PlanShape { Bushy, LeftDeep };

/// Sum of the cardinalities of all internal join nodes (leaves cost zero).
double cost_plan(const PlanTree& plan, const CardinalityAssignment& cards);

/// Exact minimum-cost plan by dynamic programming over connected subsets.
/// Deterministic tie-break: the lexicographically smallest left table set.
PlanTree optimize(const JoinGraph& graph, const CardinalityAssignment& cards,
                  PlanShape shape = PlanShape::Bushy);

/// Cost ratio of the plan chosen under `est` to the plan chosen under
/// `truth`, both evaluated with true cardinalities. Always >= 1.
double p_error(const JoinGraph& graph, const CardinalityAssignment& est,
               const CardinalityAssignment& truth, PlanShape shape = PlanShape::Bushy);

struct SubOptConfig {
    double c = 1.0;        // ratio threshold, >= 1
    double epsilon = 1e-9; // relative tolerance on the threshold
};

enum class PlanLabel { Optimal, SubOptimal };

PlanLabel label_plan(const JoinGraph& graph, const CardinalityAssignment& est,
                     const CardinalityAssignment& truth, const SubOptConfig& cfg,
                     PlanShape shape = PlanShape::Bushy);

PlanLabel label_from_p_error(double p, const SubOptConfig& cfg);

}  // namespace plansieve
