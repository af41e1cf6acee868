#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace mulora {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

// Independent sub-stream seed for (base, index...) tuples.
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> path) {
    std::uint64_t s = splitmix64(base);
    for (auto v : path) s = splitmix64(s ^ splitmix64(v + 0x632BE59BD9B4E019ull));
    return s;
}

enum class Stream : std::uint64_t { topology = 1, channel = 2, noise = 3, symbols = 4 };

inline std::uint64_t stream_seed(std::uint64_t base, Stream s, std::uint64_t index = 0) {
    return derive_seed(base, {static_cast<std::uint64_t>(s), index});
}

}  // namespace mulora
