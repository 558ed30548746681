#pragma once

#include <cmath>
#include <cstdint>

namespace trsoc {

// SplitMix64 step; also used to mix stream keys.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Derives an independent stream key from a seed and up to three indices
// (e.g. outer iteration and trajectory index). Pure function of its inputs,
// so parallel simulation stays deterministic regardless of scheduling.
inline std::uint64_t derive_stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0,
                                   std::uint64_t c = 0) {
    std::uint64_t s = seed;
    s ^= splitmix64(a) + 0x632be59bd9b4e019ULL;
    std::uint64_t k = splitmix64(s);
    s ^= splitmix64(b) + 0x9e6c63d0876a9a47ULL + (k << 6);
    k = splitmix64(s);
    s ^= splitmix64(c) + 0xd1b54a32d192ed03ULL + (k >> 2);
    return splitmix64(s);
}

// Counter-based uniform/normal stream. Normals use Box-Muller so the output
// is identical across platforms (std::normal_distribution is not portable).
class RandomStream {
public:
    explicit RandomStream(std::uint64_t key) : state_(key) {}
    RandomStream(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0)
        : state_(derive_stream(seed, a, b, c)) {}

    std::uint64_t next_u64() { return splitmix64(state_); }

    // Uniform in (0,1]; never returns 0 so log() is safe.
    double uniform() {
        return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace trsoc
