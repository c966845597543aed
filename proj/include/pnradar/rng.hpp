#pragma once

#include <cstdint>
#include <random>

namespace pnradar {

using Rng = std::mt19937_64;

/// Independent RNG stream tags. Hashed together with the master seed and
/// trial indices so that the Monte Carlo cross product (same PN draw against
/// every noise draw) never requires storing realizations.
enum class StreamTag : std::uint64_t {
    symbols = 1,
    phase_noise = 2,
    awgn = 3,
    generic = 4,
};

inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b,
                                 StreamTag tag) {
    std::uint64_t s = master;
    std::uint64_t h = splitmix64(s);
    s ^= a + 0x632be59bd9b4e019ull;
    h ^= splitmix64(s);
    s ^= b + 0xd6e8feb86659fd93ull;
    h ^= splitmix64(s);
    s ^= static_cast<std::uint64_t>(tag) * 0xff51afd7ed558ccdull;
    h ^= splitmix64(s);
    return h;
}

inline Rng make_stream(std::uint64_t master, std::uint64_t a, std::uint64_t b, StreamTag tag) {
    return Rng(derive_seed(master, a, b, tag));
}

}  // namespace pnradar
