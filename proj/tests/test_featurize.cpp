#include "doctest.h"
#include "plansieve/featurize.hpp"

using namespace plansieve;

namespace {

Subplan of_mask(TableMask m) {
    Subplan sp;
    sp.tables = m;
    return sp;
}

PositionVectorPair pair_of(std::vector<TableMask> masks, std::vector<int> rho,
                           std::vector<int> rho_hat) {
    PositionVectorPair p;
    for (TableMask m : masks) p.subplans.push_back(of_mask(m));
    p.k = p.subplans.front().k();
    p.rho = std::move(rho);
    p.rho_hat = std::move(rho_hat);
    return p;
}

}  // namespace

TEST_CASE("one-hot bits follow the table indices") {
    Vocabulary v6 = Vocabulary::build(6);
    CHECK(one_hot(of_mask(mask_of(1)), v6) == std::vector<int>{0, 1, 0, 0, 0, 0});
    CHECK(one_hot(of_mask(mask_of(1) | mask_of(2)), v6) ==
          std::vector<int>{0, 1, 1, 0, 0, 0});

    std::vector<int> four = one_hot(of_mask(0b011110), v6);
    int pop = 0;
    for (int b : four) pop += b;
    CHECK(pop == 4);

    CHECK_THROWS_AS(one_hot(of_mask(mask_of(7)), v6), ReferenceError);
}

TEST_CASE("vocabulary sizes and ids") {
    Vocabulary v6 = Vocabulary::build(6);
    CHECK(v6.size() == 67);   // 63 subsets + 4 specials
    CHECK(v6.id_bound() == 68);

    Vocabulary v3 = Vocabulary::build(3);
    CHECK(v3.size() == 11);

    CHECK(v6.token_for(0b000001) == 5);
    CHECK(v6.token_for(0b111111) == 67);
    CHECK_THROWS_AS(v6.token_for(0), ReferenceError);
    CHECK_THROWS_AS(Vocabulary::build(31), ConfigError);
    CHECK_THROWS_AS(Vocabulary::build(1), ConfigError);
}

TEST_CASE("sparse vocabulary for wide schemas") {
    std::vector<TableMask> observed;
    for (TableMask m = 1; m <= 40; ++m) observed.push_back(m);
    Vocabulary v13 = Vocabulary::build(13, observed);
    CHECK_FALSE(v13.full());
    CHECK(v13.size() == 45);  // 40 observed + unknown + 4 specials

    CHECK(v13.token_for(3) >= 5);
    // unobserved subsets map to the reserved unknown token
    CHECK(v13.token_for(TableMask{1} << 12) == 4);
    CHECK_FALSE(v13.subset_for(4).has_value());
}

TEST_CASE("token round trip is the identity on every subset") {
    Vocabulary v6 = Vocabulary::build(6);
    for (TableMask m = 1; m < 64; ++m) {
        int token = v6.token_for(m);
        auto back = v6.subset_for(token);
        REQUIRE(back.has_value());
        CHECK(*back == m);
    }
    CHECK_FALSE(v6.subset_for(Vocabulary::kBos).has_value());
    CHECK_FALSE(v6.subset_for(Vocabulary::kPad).has_value());

    // equal table sets share a token, different ones never do
    CHECK(v6.token_for(0b011) == v6.token_for(0b011));
    CHECK(v6.token_for(0b011) != v6.token_for(0b101));
}

TEST_CASE("sequence layout: bos, rho side, sep, rho_hat side, eos, pads") {
    Vocabulary v3 = Vocabulary::build(3);
    // three 2-way subplans and the 3-way one
    PositionVectorPair k2 = pair_of({0b011, 0b101, 0b110}, {2, 3, 1}, {2, 1, 3});
    PositionVectorPair k3 = pair_of({0b111}, {1}, {1});
    TokenSequence seq = encode_sequence({k3, k2}, v3, 16);  // order of pairs is irrelevant

    CHECK(seq.true_length == 11);  // 2*4 + 3
    REQUIRE(seq.tokens.size() == 16);
    CHECK(seq.tokens[0] == Vocabulary::kBos);
    // rho side, ascending k then rank: BC(rank1), AB(2), AC(3), then ABC
    CHECK(seq.tokens[1] == v3.token_for(0b110));
    CHECK(seq.tokens[2] == v3.token_for(0b011));
    CHECK(seq.tokens[3] == v3.token_for(0b101));
    CHECK(seq.tokens[4] == v3.token_for(0b111));
    CHECK(seq.tokens[5] == Vocabulary::kSep);
    // rho_hat side: AC(1), AB(2), BC(3), ABC
    CHECK(seq.tokens[6] == v3.token_for(0b101));
    CHECK(seq.tokens[7] == v3.token_for(0b011));
    CHECK(seq.tokens[8] == v3.token_for(0b110));
    CHECK(seq.tokens[9] == v3.token_for(0b111));
    CHECK(seq.tokens[10] == Vocabulary::kEos);
    for (int i = 11; i < 16; ++i) CHECK(seq.tokens[i] == Vocabulary::kPad);
    for (int i = 0; i < 16; ++i) CHECK(seq.attention_mask[i] == (i < 11 ? 1 : 0));
}

TEST_CASE("exact-length sequences have an all-ones mask") {
    Vocabulary v3 = Vocabulary::build(3);
    PositionVectorPair k2 = pair_of({0b011, 0b101}, {1, 2}, {2, 1});
    TokenSequence seq = encode_sequence({k2}, v3, 7);
    CHECK(seq.true_length == 7);
    for (std::uint8_t m : seq.attention_mask) CHECK(m == 1);
}

TEST_CASE("over-capacity sequences report the required length") {
    Vocabulary v3 = Vocabulary::build(3);
    PositionVectorPair k2 = pair_of({0b011, 0b101, 0b110}, {1, 2, 3}, {1, 2, 3});
    CHECK_THROWS_WITH_AS(encode_sequence({k2}, v3, 8),
                         doctest::Contains("needs 9 tokens"), DataError);
}

TEST_CASE("different orderings encode to different sequences") {
    Vocabulary v3 = Vocabulary::build(3);
    PositionVectorPair a = pair_of({0b011, 0b101, 0b110}, {1, 2, 3}, {1, 2, 3});
    PositionVectorPair b = pair_of({0b011, 0b101, 0b110}, {1, 2, 3}, {2, 1, 3});
    CHECK(encode_sequence({a}, v3, 12).tokens != encode_sequence({b}, v3, 12).tokens);
}

TEST_CASE("mask and pad invariants hold on random inputs") {
    Rng rng(9'000'000);
    Vocabulary v6 = Vocabulary::build(6);
    for (int iter = 0; iter < 300; ++iter) {
        int n2 = 1 + static_cast<int>(rng.below(6));
        std::vector<TableMask> masks;
        for (TableMask m = 3; masks.size() < static_cast<std::size_t>(n2) && m < 64; ++m)
            if (popcount(m) == 2) masks.push_back(m);
        std::vector<int> rho(masks.size()), rho_hat(masks.size());
        for (std::size_t i = 0; i < masks.size(); ++i) rho[i] = static_cast<int>(i) + 1;
        rho_hat = rho;
        rng.shuffle(rho_hat);
        PositionVectorPair p = pair_of(masks, rho, rho_hat);
        int max_len = static_cast<int>(2 * masks.size() + 3 + rng.below(8));
        TokenSequence seq = encode_sequence({p}, v6, max_len);

        REQUIRE(seq.true_length == static_cast<int>(2 * masks.size() + 3));
        CHECK(seq.tokens[0] == Vocabulary::kBos);
        CHECK(seq.tokens[seq.true_length - 1] == Vocabulary::kEos);
        int seps = 0;
        for (int i = 0; i < seq.true_length; ++i)
            if (seq.tokens[i] == Vocabulary::kSep) ++seps;
        CHECK(seps == 1);
        for (int i = 0; i < max_len; ++i) {
            CHECK(seq.attention_mask[i] == (i < seq.true_length ? 1 : 0));
            if (i >= seq.true_length) CHECK(seq.tokens[i] == Vocabulary::kPad);
        }
    }
}
