#pragma once

#include <cstdint>
#include <random>

namespace evspd {

// splitmix64: cheap stateless mixer used to derive independent sub-seeds
// from one root seed. Per-channel streams must not depend on the order in
// which channels are processed, so every stream gets its own mt19937_64
// seeded through this.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Derive a sub-seed from a root seed and up to two stream tags
// (e.g. channel index, stage id).
inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t a, std::uint64_t b = 0) {
    return splitmix64(splitmix64(splitmix64(root) ^ a) ^ b);
}

inline std::mt19937_64 make_rng(std::uint64_t root, std::uint64_t a, std::uint64_t b = 0) {
    return std::mt19937_64(derive_seed(root, a, b));
}

} // namespace evspd
