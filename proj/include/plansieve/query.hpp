#pragma once

#include <string>
#include <tuple>
#include <vector>

#include "plansieve/common.hpp"

namespace plansieve {

enum class CmpOp { Eq, Lt, Gt, Le, Ge };

const char* cmp_op_name(CmpOp op);
CmpOp cmp_op_from_name(const std::string& s);
bool cmp_eval(std::int64_t lhs, CmpOp op, std::int64_t rhs);

/// Single-column predicate `table.column op value`.
struct Selection {
    TableId table = -1;
    std::string column;
    CmpOp op = CmpOp::Eq;
    std::int64_t value = 0;

    friend bool operator==(const Selection&, const Selection&) = default;
    friend auto operator<=>(const Selection& a, const Selection& b) {
        return std::tie(a.table, a.column, a.op, a.value) <=>
               std::tie(b.table, b.column, b.op, b.value);
    }
};

/// Column equality `t1.c1 = t2.c2`.
struct JoinEdge {
    TableId t1 = -1;
    std::string c1;
    TableId t2 = -1;
    std::string c2;

    friend bool operator==(const JoinEdge&, const JoinEdge&) = default;
};

struct ColumnRef {
    TableId table = -1;
    std::string column;

    friend bool operator==(const ColumnRef&, const ColumnRef&) = default;
    friend auto operator<=>(const ColumnRef& a, const ColumnRef& b) {
        return std::tie(a.table, a.column) <=> std::tie(b.table, b.column);
    }
};

struct Query {
    std::string id;
    std::vector<TableId> tables;
    std::vector<JoinEdge> joins;
    std::vector<Selection> selections;
};

/// A connected subset of a query's tables, with the join predicates and
/// selections induced on it. Canonical: the table set alone identifies it
/// within one query; joins/selections are carried so the subplan can be
/// evaluated without further context.
struct Subplan {
    TableMask tables = 0;
    std::vector<JoinEdge> joins;
    std::vector<Selection> selections;

    int k() const { return popcount(tables); }
};

}  // namespace plansieve
