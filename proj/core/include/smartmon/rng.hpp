#pragma once

#include <cstdint>
#include <random>

namespace smartmon {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// Derives an independent stream key from a parent key and an index.
inline std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index) {
    std::uint64_t s = parent ^ (0xD1B54A32D192ED03ULL * (index + 1));
    splitmix64(s);
    return splitmix64(s);
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed) {
    std::uint64_t s = seed;
    std::seed_seq seq{static_cast<std::uint32_t>(splitmix64(s)), static_cast<std::uint32_t>(splitmix64(s)),
                      static_cast<std::uint32_t>(splitmix64(s)), static_cast<std::uint32_t>(splitmix64(s))};
    return Rng(seq);
}

// experiment seed -> replication -> patient
inline Rng patient_rng(std::uint64_t seed, std::uint64_t rep, std::uint64_t patient) {
    return make_rng(derive_seed(derive_seed(seed, rep), patient));
}

}  // namespace smartmon
