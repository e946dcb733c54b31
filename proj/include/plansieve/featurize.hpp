#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "plansieve/l1error.hpp"
#include "plansieve/query.hpp"

namespace plansieve {

/// Token ids for subplan table sets plus the four specials. For T <= 12 every
/// nonempty subset gets the id `bitmask + 4` (id 4 is the impossible empty
/// set and stays unused); for larger schemas only observed subsets are
/// registered, after a reserved unknown-subset token.
class Vocabulary {
public:
    static constexpr int kBos = 0;
    static constexpr int kSep = 1;
    static constexpr int kEos = 2;
    static constexpr int kPad = 3;
    static constexpr int kFullEnumerationLimit = 12;
    static constexpr int kMaxTables = 30;

    static Vocabulary build(int table_count,
                            const std::vector<TableMask>& observed_subsets = {});

    int table_count() const { return table_count_; }
    bool full() const { return full_; }

    int token_for(TableMask subset) const;
    std::optional<TableMask> subset_for(int token) const;

    /// Number of assigned token ids (specials + subsets [+ unknown]).
    std::size_t size() const;
    /// One past the largest id; the embedding row count.
    int id_bound() const;

private:
    int table_count_ = 0;
    bool full_ = true;
    int unknown_id_ = -1;
    std::map<TableMask, int> subset_ids_;  // sparse mode only
    std::vector<TableMask> id_subsets_;    // sparse mode reverse map
};

/// Bit vector of length T with bit i set iff table i participates.
std::vector<int> one_hot(const Subplan& subplan, const Vocabulary& vocab);

struct TokenSequence {
    std::vector<int> tokens;          // length = max_len
    std::vector<std::uint8_t> attention_mask;  // 1 iff position < true_length
    int true_length = 0;
};

/// [bos] rho-side subplans (k ascending, rank ascending) [sep] rho_hat-side
/// [eos] padding. Throws DataError with the required length when 2N+3
/// exceeds max_len.
TokenSequence encode_sequence(const std::vector<PositionVectorPair>& pairs,
                              const Vocabulary& vocab, int max_len);

}  // namespace plansieve
