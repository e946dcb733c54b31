#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "plansieve/planspace.hpp"
#include "plansieve/query.hpp"

namespace plansieve {

/// The two orderings of one join-size group: rho[i] is the 1-based rank of
/// subplans[i] when sorted ascending by true-like cardinality, rho_hat[i]
/// the rank under estimated cardinality. Ties break on the canonical
/// subplan key in both sorts.
struct PositionVectorPair {
    int k = 0;
    std::vector<Subplan> subplans;  // canonical order (ascending table set)
    std::vector<int> rho;
    std::vector<int> rho_hat;
};

PositionVectorPair position_vectors(const std::vector<Subplan>& subplans_k,
                                    const CardinalityAssignment& truth_like,
                                    const CardinalityAssignment& est);

/// Sum of absolute rank displacements for one join size.
std::uint64_t l1_error_k(const PositionVectorPair& pair);

struct L1Weights {
    double decay = 0.5;  // w_k = decay^(k-2); w_2 = 1
    double weight(int k) const;
};

struct L1Report {
    std::map<int, std::uint64_t> per_k;
    std::map<int, double> weights;
    double aggregate = 0.0;
};

/// Weighted aggregation across join sizes; keys must be contiguous from the
/// query's smallest join size (>= 2).
L1Report aggregate_l1(const std::map<int, std::uint64_t>& per_k,
                      const L1Weights& weights = {});

L1Report l1_report(const std::vector<PositionVectorPair>& pairs,
                   const L1Weights& weights = {});

/// Largest aggregate attainable for the given group sizes: the reversal
/// permutation reaches floor(N_k^2 / 2) in every group.
double l1_max_aggregate(const std::map<int, std::size_t>& group_sizes,
                        const L1Weights& weights = {});

}  // namespace plansieve
