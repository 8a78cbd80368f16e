#pragma once

#include <cstdint>
#include <string_view>

namespace shopseq {

// SplitMix64 (Steele/Lea/Flood). Small, fast, and fully specified, so seeded
// runs produce identical streams on every platform. Consecutive seeds give
// independent-looking streams, which is what the seed ^ run_index splitting
// rule relies on.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform integer in [0, n). Rejection sampling, no modulo bias.
    std::uint64_t bounded(std::uint64_t n) {
        // threshold = 2^64 mod n; values below it would be over-represented
        std::uint64_t threshold = (0 - n) % n;
        std::uint64_t r = next();
        while (r < threshold) r = next();
        return r % n;
    }

    // Uniform double in [0, 1), 53 bits of precision.
    double next_double() {
        return static_cast<double>(next() >> 11) * 0x1.0p-53;
    }

    // Uniform double in (0, 1); safe to pass to log().
    double next_double_open() {
        double u = next_double();
        return u > 0.0 ? u : 0x1.0p-53;
    }

private:
    std::uint64_t state_;
};

// FNV-1a, used to salt per-account RNG streams with the account id.
inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Stream for Monte Carlo run `run_index` of a simulation seeded with `seed`.
// Run index 0 is reserved for setup draws (account sampling); transform runs
// are numbered from 1.
inline SplitMix64 run_stream(std::uint64_t seed, std::uint64_t run_index) {
    return SplitMix64(seed ^ run_index);
}

// Per-account stream inside one run: the run seed salted with the account id.
inline SplitMix64 account_stream(std::uint64_t seed, std::uint64_t run_index,
                                 std::string_view account_id) {
    return SplitMix64((seed ^ run_index) ^ fnv1a64(account_id));
}

}  // namespace shopseq
