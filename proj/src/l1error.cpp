#include "plansieve/l1error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace plansieve {

PositionVectorPair position_vectors(const std::vector<Subplan>& subplans_k,
                                    const CardinalityAssignment& truth_like,
                                    const CardinalityAssignment& est) {
    PositionVectorPair pair;
    pair.subplans = subplans_k;
    std::sort(pair.subplans.begin(), pair.subplans.end(),
              [](const Subplan& a, const Subplan& b) { return a.tables < b.tables; });
    pair.k = pair.subplans.empty() ? 0 : pair.subplans.front().k();
    for (const Subplan& sp : pair.subplans) {
        truth_like.at(sp.tables);  // both assignments must cover the group
        est.at(sp.tables);
    }

    std::size_t n = pair.subplans.size();
    auto ranks = [&](const CardinalityAssignment& cards) {
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            double ca = cards.at(pair.subplans[a].tables);
            double cb = cards.at(pair.subplans[b].tables);
            if (ca != cb) return ca < cb;
            return pair.subplans[a].tables < pair.subplans[b].tables;
        });
        std::vector<int> rank(n);
        for (std::size_t pos = 0; pos < n; ++pos)
            rank[order[pos]] = static_cast<int>(pos) + 1;
        return rank;
    };
    pair.rho = ranks(truth_like);
    pair.rho_hat = ranks(est);
    return pair;
}

std::uint64_t l1_error_k(const PositionVectorPair& pair) {
    std::uint64_t total = 0;
    for (std::size_t i = 0; i < pair.rho.size(); ++i)
        total += static_cast<std::uint64_t>(std::abs(pair.rho[i] - pair.rho_hat[i]));
    return total;
}

double L1Weights::weight(int k) const {
    return std::pow(decay, k - 2);
}

L1Report aggregate_l1(const std::map<int, std::uint64_t>& per_k, const L1Weights& weights) {
    L1Report report;
    int expected = -1;
    for (const auto& [k, l1] : per_k) {
        if (k < 2) throw DataError("join size " + std::to_string(k) + " below 2 in L1 input");
        if (expected >= 0 && k != expected)
            throw DataError("join sizes must be contiguous, missing k=" +
                            std::to_string(expected));
        expected = k + 1;
        double w = weights.weight(k);
        report.per_k[k] = l1;
        report.weights[k] = w;
        report.aggregate += w * static_cast<double>(l1);
    }
    return report;
}

L1Report l1_report(const std::vector<PositionVectorPair>& pairs, const L1Weights& weights) {
    std::map<int, std::uint64_t> per_k;
    for (const auto& p : pairs)
        if (!p.subplans.empty()) per_k[p.k] = l1_error_k(p);
    return aggregate_l1(per_k, weights);
}

double l1_max_aggregate(const std::map<int, std::size_t>& group_sizes,
                        const L1Weights& weights) {
    double total = 0.0;
    for (const auto& [k, n] : group_sizes)
        total += weights.weight(k) * static_cast<double>(n * n / 2);
    return total;
}

}  // namespace plansieve
