#pragma once

#include <cstdint>
#include <cstring>
#include <vector>

namespace gmeasure {

inline std::uint64_t fnv1a64_bytes(const unsigned char* data, std::size_t size) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < size; ++i) {
        h ^= data[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Content key for an example; noise and solver streams are keyed on this so
// duplicating or reordering a dataset cannot change per-example results.
inline std::uint64_t example_key(const std::vector<float>& x) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (float v : x) {
        std::uint32_t bits;
        std::memcpy(&bits, &v, 4);
        for (int b = 0; b < 4; ++b) {
            h ^= (bits >> (8 * b)) & 0xff;
            h *= 0x100000001b3ULL;
        }
    }
    return h;
}

}  // namespace gmeasure
