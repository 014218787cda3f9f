#ifndef LSNN_RNG_HPP
#define LSNN_RNG_HPP

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace lsnn {

// SplitMix64 (Steele, Lea, Flood 2014). Fixed as the project-wide generator so
// that shuffles, masks and weight init are bit-reproducible across
// implementations and platforms.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1) from the high 53 bits.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    bool bernoulli(double p) { return uniform() < p; }

    // Box-Muller; std::normal_distribution is implementation-defined so it is
    // not usable where reproducibility is part of the contract.
    double gaussian() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) *
               std::cos(2.0 * std::numbers::pi * u2);
    }

    // Derive an independent stream; distinct tags give distinct streams.
    SplitMix64 fork(std::uint64_t tag) {
        return SplitMix64(next() ^ (tag * 0x9E3779B97F4A7C15ULL));
    }

private:
    std::uint64_t state_;
};

// Fisher-Yates with "u64 mod (i+1)" index selection. The modulo bias is
// negligible at the sizes used here and the two-line rule is trivial to
// replicate in another language.
template <typename T>
void fisher_yates(std::vector<T>& v, SplitMix64& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(rng.next() % i);
        std::swap(v[i - 1], v[j]);
    }
}

inline std::vector<std::uint32_t> random_permutation(std::size_t n,
                                                     std::uint64_t seed) {
    std::vector<std::uint32_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = static_cast<std::uint32_t>(i);
    SplitMix64 rng(seed);
    fisher_yates(perm, rng);
    return perm;
}

}  // namespace lsnn

#endif
