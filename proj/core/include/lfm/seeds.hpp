#pragma once

#include <cstdint>
#include <string_view>

namespace lfm {

// splitmix64 step: advances `state` and returns the next 64-bit value.
// Used as the single source of derived seeds so that every pipeline stage
// gets an independent, reproducible stream from one master seed.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// FNV-1a hash of a tag string; folded into the master seed below.
inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Deterministic per-stage seed: mixes the master seed with a stage tag
// (e.g. "split", "gen", "train") plus an optional index for per-item
// streams.  Changing any input changes the output; equal inputs always
// produce equal outputs.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view tag,
                                 std::uint64_t index = 0) {
    std::uint64_t state = master ^ fnv1a(tag) ^ (index * 0x9e3779b97f4a7c15ULL);
    return splitmix64(state);
}

} // namespace lfm
