#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace cobo {

// splitmix64 finalizer, used to mix stream-key components.
constexpr std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t stream_key(std::uint64_t seed, std::string_view label,
                         std::uint64_t a = 0, std::uint64_t b = 0, std::uint64_t c = 0);

// Counter-keyed substream: identical (seed, label, a, b, c) yields an identical
// generator regardless of what any other stream consumed. All randomness in the
// library flows through these; there is no global RNG state.
std::mt19937_64 substream(std::uint64_t seed, std::string_view label,
                          std::uint64_t a = 0, std::uint64_t b = 0, std::uint64_t c = 0);

}  // namespace cobo
