#pragma once

#include <cstdint>
#include <random>

namespace solstab {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Counted splittable seed source: every consumer draws its own stream.
class SeedStream {
public:
    explicit SeedStream(std::uint64_t seed) : seed_(seed) {}

    std::mt19937_64 split() { return std::mt19937_64(splitmix64(seed_ ^ splitmix64(++count_))); }
    std::uint64_t seed() const { return seed_; }
    std::uint64_t count() const { return count_; }

private:
    std::uint64_t seed_;
    std::uint64_t count_ = 0;
};

} // namespace solstab
