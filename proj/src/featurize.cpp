#include "plansieve/featurize.hpp"

#include <algorithm>

namespace plansieve {

Vocabulary Vocabulary::build(int table_count, const std::vector<TableMask>& observed_subsets) {
    if (table_count < 2) throw ConfigError("vocabulary needs at least 2 tables");
    if (table_count > kMaxTables)
        throw ConfigError("unsupported schema: " + std::to_string(table_count) +
                          " tables exceeds the limit of " + std::to_string(kMaxTables));
    Vocabulary v;
    v.table_count_ = table_count;
    v.full_ = table_count <= kFullEnumerationLimit;
    if (!v.full_) {
        v.unknown_id_ = 4;
        std::vector<TableMask> sorted = observed_subsets;
        std::sort(sorted.begin(), sorted.end());
        sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
        int next = 5;
        for (TableMask m : sorted) {
            if (m == 0 || (m >> table_count) != 0)
                throw ConfigError("observed subset " + mask_to_string(m) +
                                  " is outside the schema");
            v.subset_ids_[m] = next++;
            v.id_subsets_.push_back(m);
        }
    }
    return v;
}

int Vocabulary::token_for(TableMask subset) const {
    if (subset == 0 || (subset >> table_count_) != 0)
        throw ReferenceError("subset " + mask_to_string(subset) + " is outside the schema");
    if (full_) return static_cast<int>(subset) + 4;
    auto it = subset_ids_.find(subset);
    return it == subset_ids_.end() ? unknown_id_ : it->second;
}

std::optional<TableMask> Vocabulary::subset_for(int token) const {
    if (token < 4) return std::nullopt;
    if (full_) {
        TableMask m = static_cast<TableMask>(token) - 4;
        if (m == 0 || (m >> table_count_) != 0) return std::nullopt;
        return m;
    }
    if (token == unknown_id_) return std::nullopt;
    std::size_t idx = static_cast<std::size_t>(token) - 5;
    if (idx >= id_subsets_.size()) return std::nullopt;
    return id_subsets_[idx];
}

std::size_t Vocabulary::size() const {
    if (full_) return 4 + ((std::size_t{1} << table_count_) - 1);
    return 4 + 1 + subset_ids_.size();
}

int Vocabulary::id_bound() const {
    if (full_) return static_cast<int>((std::size_t{1} << table_count_)) + 4;
    return 5 + static_cast<int>(subset_ids_.size());
}

std::vector<int> one_hot(const Subplan& subplan, const Vocabulary& vocab) {
    if (subplan.tables == 0 || (subplan.tables >> vocab.table_count()) != 0)
        throw ReferenceError("subplan " + mask_to_string(subplan.tables) +
                             " references tables outside the schema");
    std::vector<int> bits(vocab.table_count(), 0);
    for (TableId t : mask_to_tables(subplan.tables)) bits[t] = 1;
    return bits;
}

TokenSequence encode_sequence(const std::vector<PositionVectorPair>& pairs,
                              const Vocabulary& vocab, int max_len) {
    std::size_t n = 0;
    for (const auto& p : pairs) n += p.subplans.size();
    int needed = static_cast<int>(2 * n + 3);
    if (needed > max_len)
        throw DataError("sequence needs " + std::to_string(needed) +
                        " tokens but max_len is " + std::to_string(max_len));

    // pairs sorted by k; within a side, subplans appear in rank order
    std::vector<const PositionVectorPair*> ordered;
    for (const auto& p : pairs) ordered.push_back(&p);
    std::sort(ordered.begin(), ordered.end(),
              [](const PositionVectorPair* a, const PositionVectorPair* b) {
                  return a->k < b->k;
              });

    TokenSequence seq;
    seq.tokens.reserve(max_len);
    seq.tokens.push_back(Vocabulary::kBos);
    auto emit_side = [&](bool estimated) {
        for (const PositionVectorPair* p : ordered) {
            const std::vector<int>& ranks = estimated ? p->rho_hat : p->rho;
            std::vector<std::size_t> by_rank(ranks.size());
            for (std::size_t i = 0; i < ranks.size(); ++i)
                by_rank[static_cast<std::size_t>(ranks[i]) - 1] = i;
            for (std::size_t idx : by_rank)
                seq.tokens.push_back(vocab.token_for(p->subplans[idx].tables));
        }
    };
    emit_side(false);
    seq.tokens.push_back(Vocabulary::kSep);
    emit_side(true);
    seq.tokens.push_back(Vocabulary::kEos);
    seq.true_length = static_cast<int>(seq.tokens.size());
    seq.tokens.resize(max_len, Vocabulary::kPad);
    seq.attention_mask.assign(max_len, 0);
    for (int i = 0; i < seq.true_length; ++i) seq.attention_mask[i] = 1;
    return seq;
}

}  // namespace plansieve
