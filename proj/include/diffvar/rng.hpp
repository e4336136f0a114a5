#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

#include "diffvar/stats.hpp"

namespace diffvar {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Counter-based seed derivation: child streams depend only on the root seed
// and the path of indices, never on evaluation order or thread schedule.
inline std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
    for (std::uint64_t v : path) seed = splitmix64(seed ^ splitmix64(v + 0x632be59bd9b4e019ULL));
    return seed;
}

// mt19937_64 has a standardized output sequence; the variate transforms
// below are ours, so draws are identical across compilers and platforms.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform on the open interval (0, 1).
    double uniform() {
        return (static_cast<double>(engine_() >> 11) + 0.5) * (1.0 / 9007199254740992.0);
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Inverse-CDF sampling keeps the stream portable.
    double normal(double mean = 0.0, double sd = 1.0) {
        return mean + sd * normal_quantile(uniform());
    }

    int bernoulli(double p) { return uniform() < p ? 1 : 0; }

    // Uniform integer in [0, n).
    std::size_t index(std::size_t n) {
        return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
    }

  private:
    std::mt19937_64 engine_;
};

} // namespace diffvar
