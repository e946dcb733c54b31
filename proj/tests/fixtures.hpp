// Shared schemas and query builders for the test suites.
#pragma once

#include <string>
#include <vector>

#include "plansieve/catalog.hpp"
#include "plansieve/planspace.hpp"

namespace plansieve::testing {

/// Three-table star: A(100) with key id and attribute x, B(300) and C(200)
/// each holding a foreign key into A.
inline SchemaSpec s3_schema(std::uint64_t seed = 42) {
    SchemaSpec spec;
    spec.seed = seed;
    spec.tables.push_back({"A",
                           100,
                           {{"id", ColumnKind::Key, "", "", 0, 0},
                            {"x", ColumnKind::Attribute, "", "", 1, 50}}});
    spec.tables.push_back({"B",
                           300,
                           {{"id", ColumnKind::Key, "", "", 0, 0},
                            {"aid", ColumnKind::ForeignKey, "A", "id", 0, 0},
                            {"y", ColumnKind::Attribute, "", "", 1, 30}}});
    spec.tables.push_back({"C",
                           200,
                           {{"id", ColumnKind::Key, "", "", 0, 0},
                            {"aid", ColumnKind::ForeignKey, "A", "id", 0, 0},
                            {"z", ColumnKind::Attribute, "", "", 1, 20}}});
    return spec;
}

inline Query s3_query(const std::string& id = "s3",
                      std::vector<Selection> selections = {}) {
    Query q;
    q.id = id;
    q.tables = {0, 1, 2};
    q.joins = {{1, "aid", 0, "id"}, {2, "aid", 0, "id"}};
    q.selections = std::move(selections);
    return q;
}

}  // namespace plansieve::testing
