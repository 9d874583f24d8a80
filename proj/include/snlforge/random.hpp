#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace snlforge {

// mt19937_64 is fully specified by the standard; the distributions are not,
// so uniform values are derived from raw draws to stay platform-independent.
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed) : engine_(seed) {}

    double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }
    std::uint64_t next() { return engine_(); }
    // Uniform in [0, n) by rejection.
    std::uint64_t below(std::uint64_t n);

private:
    std::mt19937_64 engine_;
};

inline std::uint64_t SeededRng::below(std::uint64_t n) {
    if (n <= 1) return 0;
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t v;
    do {
        v = engine_();
    } while (v >= limit);
    return v % n;
}

inline std::vector<double> seeded_vector(std::size_t n, std::uint64_t seed, double lo = -1.0,
                                         double hi = 1.0) {
    SeededRng rng(seed);
    std::vector<double> out(n);
    for (auto& v : out) v = rng.uniform(lo, hi);
    return out;
}

}  // namespace snlforge
