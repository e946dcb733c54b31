#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "plansieve/common.hpp"
#include "plansieve/query.hpp"

namespace plansieve {

enum class ColumnKind { Key, ForeignKey, Attribute };

struct ColumnSpec {
    std::string name;
    ColumnKind kind = ColumnKind::Attribute;
    std::string target_table;   // ForeignKey only
    std::string target_column;  // ForeignKey only
    std::int64_t lo = 0;        // Attribute only
    std::int64_t hi = 0;        // Attribute only
};

struct TableSpec {
    std::string name;
    std::uint64_t rows = 0;
    std::vector<ColumnSpec> columns;
};

/// Declarative synthetic schema. Together with the seed it fully determines
/// the generated data.
struct SchemaSpec {
    std::vector<TableSpec> tables;
    std::uint64_t seed = 0;
    double fk_skew = 1.1;  // Zipf exponent for foreign-key value draws

    void validate() const;

    static SchemaSpec load(const std::string& path);
    static SchemaSpec from_json_text(const std::string& text);
    std::string to_json_text() const;
};

/// One executed plan's observed cardinalities, node by node.
struct ExecutionLog {
    std::string query_id;
    struct Entry {
        Subplan subplan;
        std::uint64_t true_cardinality = 0;
    };
    std::vector<Entry> entries;
};

/// Materialized synthetic data plus exact statistics. Immutable after
/// generation; all readers may run concurrently.
class Catalog {
public:
    static Catalog generate(const SchemaSpec& spec);

    const SchemaSpec& spec() const { return spec_; }

    int table_count() const { return static_cast<int>(spec_.tables.size()); }
    TableId table_id(const std::string& name) const;
    const std::string& table_name(TableId t) const;
    bool has_table(const std::string& name) const { return table_ids_.count(name) > 0; }
    std::uint64_t row_count(TableId t) const;

    int column_index(TableId t, const std::string& column) const;
    bool has_column(TableId t, const std::string& column) const;
    const std::vector<std::int64_t>& column(TableId t, int col) const;
    const std::vector<std::int64_t>& sorted_column(TableId t, int col) const;

    std::uint64_t distinct_count(TableId t, int col) const;
    std::int64_t column_min(TableId t, int col) const;
    std::int64_t column_max(TableId t, int col) const;

    std::uint64_t max_row_count() const;

    /// Rows of `t` satisfying `pred` (exact count).
    std::uint64_t selection_count(const Selection& pred) const;

private:
    SchemaSpec spec_;
    std::map<std::string, TableId> table_ids_;
    // columns_[t][c] is the value vector of column c of table t
    std::vector<std::vector<std::vector<std::int64_t>>> columns_;
    std::vector<std::vector<std::vector<std::int64_t>>> sorted_columns_;
    std::vector<std::vector<std::uint64_t>> distinct_;
};

/// Exact cardinality of the join described by `subplan`, evaluated against
/// the materialized data. Pure; this is the ground-truth oracle.
std::uint64_t true_cardinality(const Catalog& catalog, const Subplan& subplan);

/// Rows of `subplan.tables`'s single table matching its selections when k=1;
/// general entry used by true_cardinality for leaves.
std::uint64_t filtered_row_count(const Catalog& catalog, TableId t,
                                 const std::vector<Selection>& selections);

class PlanTree;  // planspace.hpp

/// Runs a plan against the catalog and records the true cardinality of every
/// node, leaves included. Entries are ordered by (k, table set).
ExecutionLog execute_query(const Catalog& catalog, const PlanTree& plan,
                           const std::string& query_id = "");

}  // namespace plansieve
