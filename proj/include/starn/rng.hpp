#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace starn::rng {

std::uint64_t splitmix64(std::uint64_t x) noexcept;

// Seed for a named substream ("split", "init", "dropout", "shuffle", ...)
// derived from the run's root seed. Extra words select sub-substreams.
std::uint64_t substream(std::uint64_t root, std::string_view name,
                        std::uint64_t a = 0, std::uint64_t b = 0) noexcept;

inline std::mt19937_64 engine(std::uint64_t root, std::string_view name,
                              std::uint64_t a = 0, std::uint64_t b = 0) {
    return std::mt19937_64(substream(root, name, a, b));
}

// Counter-based uniform in [0,1): a pure function of (key, counter).
inline double uniform01(std::uint64_t key, std::uint64_t counter) noexcept {
    return static_cast<double>(splitmix64(key ^ splitmix64(counter + 0x632be59bd9b4e019ULL)) >> 11) *
           0x1.0p-53;
}

}  // namespace starn::rng
