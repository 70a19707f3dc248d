#include "cobo/rng.hpp"

namespace cobo {

std::uint64_t stream_key(std::uint64_t seed, std::string_view label, std::uint64_t a,
                         std::uint64_t b, std::uint64_t c) {
    // FNV-1a over the label, then splitmix rounds over the numeric components.
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : label) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    std::uint64_t k = mix64(seed ^ h);
    k = mix64(k ^ a);
    k = mix64(k ^ b);
    k = mix64(k ^ c);
    return k;
}

std::mt19937_64 substream(std::uint64_t seed, std::string_view label, std::uint64_t a,
                          std::uint64_t b, std::uint64_t c) {
    return std::mt19937_64(stream_key(seed, label, a, b, c));
}

}  // namespace cobo
