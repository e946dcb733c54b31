#include "plansieve/common.hpp"

#include <sstream>

namespace plansieve {

std::string mask_to_string(TableMask m) {
    std::ostringstream os;
    os << '{';
    bool first = true;
    for (TableId t : mask_to_tables(m)) {
        if (!first) os << ',';
        os << t;
        first = false;
    }
    os << '}';
    return os.str();
}

std::uint64_t derive_seed(std::uint64_t base, const std::string& key, std::uint64_t extra) {
    // FNV-1a over the key, then mixed with base and extra through splitmix
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : key) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    Rng mix(base ^ (h + 0x9e3779b97f4a7c15ULL) ^ (extra * 0xff51afd7ed558ccdULL));
    return mix.next();
}

}  // namespace plansieve
