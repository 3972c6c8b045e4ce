#include "starn/rng.hpp"

namespace starn::rng {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t substream(std::uint64_t root, std::string_view name,
                        std::uint64_t a, std::uint64_t b) noexcept {
    // FNV-1a over the stream name
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : name) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    std::uint64_t s = splitmix64(root ^ h);
    s = splitmix64(s ^ a);
    return splitmix64(s ^ (b * 0x9e3779b97f4a7c15ULL));
}

}  // namespace starn::rng
