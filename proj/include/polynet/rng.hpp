#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace polynet {

using Rng = std::mt19937_64;

constexpr std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Named substream of a root seed, further split by integer coordinates
/// (epoch, instance, sample, ...). Streams never depend on worker count.
inline std::uint64_t derive_seed(std::uint64_t root, std::string_view stream,
                                 std::initializer_list<std::uint64_t> path = {})
{
    std::uint64_t h = splitmix64(root ^ fnv1a(stream));
    for (std::uint64_t p : path) h = splitmix64(h ^ splitmix64(p + 0x632be59bd9b4e019ULL));
    return h;
}

inline Rng make_rng(std::uint64_t root, std::string_view stream, std::initializer_list<std::uint64_t> path = {})
{
    return Rng(derive_seed(root, stream, path));
}

/// Uniform double in [0, 1) with 53 random bits.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace polynet
