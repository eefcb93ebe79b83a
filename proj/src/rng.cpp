#include "capgan/rng.hpp"

namespace capgan {

std::uint64_t derive_seed(std::uint64_t master_seed, const std::string& stage) {
    std::uint64_t h = 1469598103934665603ull;  // FNV-1a offset basis
    auto mix = [&h](unsigned char b) {
        h ^= b;
        h *= 1099511628211ull;
    };
    for (int i = 0; i < 8; ++i) mix((master_seed >> (8 * i)) & 0xff);
    for (unsigned char c : stage) mix(c);
    return h;
}

}  // namespace capgan
