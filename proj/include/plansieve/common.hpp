#pragma once

#include <cstdint>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace plansieve {

using TableId = int;
using TableMask = std::uint64_t;

inline int popcount(TableMask m) { return __builtin_popcountll(m); }

inline TableMask mask_of(TableId t) { return TableMask{1} << t; }

inline std::vector<TableId> mask_to_tables(TableMask m) {
    std::vector<TableId> out;
    while (m) {
        int t = __builtin_ctzll(m);
        out.push_back(t);
        m &= m - 1;
    }
    return out;
}

std::string mask_to_string(TableMask m);

/// Input failed a structural or domain check (bad schema, dangling reference, ...).
struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

/// A name or id does not resolve against the catalog or query.
struct ReferenceError : std::runtime_error {
    explicit ReferenceError(const std::string& what) : std::runtime_error(what) {}
};

/// Inconsistent configuration (shapes, thresholds, missing fields).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Runtime data problem: incomplete assignment, capacity overflow, missing context.
struct DataError : std::runtime_error {
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// splitmix64. Fixed algorithm so streams are identical on every platform,
/// unlike the distributions in <random>.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, bound). bound must be > 0.
    std::uint64_t below(std::uint64_t bound) {
        // rejection sampling keeps the distribution exactly uniform
        std::uint64_t threshold = -bound % bound;
        for (;;) {
            std::uint64_t r = next();
            if (r >= threshold) return r % bound;
        }
    }

    /// Uniform in [lo, hi] inclusive.
    std::int64_t range(std::int64_t lo, std::int64_t hi) {
        return lo + static_cast<std::int64_t>(below(static_cast<std::uint64_t>(hi - lo) + 1));
    }

    /// Uniform double in [0, 1).
    double real() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    /// Standard normal via Box-Muller.
    double normal() {
        double u1 = real();
        double u2 = real();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t state_;
};

/// Order-independent seed derivation: combine a base seed with key material.
std::uint64_t derive_seed(std::uint64_t base, const std::string& key, std::uint64_t extra = 0);

}  // namespace plansieve
