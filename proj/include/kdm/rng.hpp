#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace kdm {

namespace detail {
inline uint64_t splitmix64(uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}
}  // namespace detail

// Deterministic counter-based generator (splitmix64 core). Identical seed and
// call sequence give an identical stream on every platform. Value semantics:
// copying an Rng forks the stream at its current position.
class Rng {
public:
    explicit Rng(uint64_t seed = 0)
        : seed_(seed), state_(detail::splitmix64(seed ^ 0x6A09E667F3BCC908ULL)) {}

    uint64_t seed() const { return seed_; }
    uint64_t counter() const { return counter_; }

    uint64_t next_u64() {
        ++counter_;
        state_ += 0x9E3779B97F4A7C15ULL;
        uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // (0, 1]; safe as a log argument.
    double uniform_open() {
        return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Unbiased integer in [0, n) by rejection.
    uint64_t uniform_int(uint64_t n) {
        const uint64_t threshold = (0ULL - n) % n;  // 2^64 mod n
        for (;;) {
            uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    // Standard normal, Box-Muller with one cached spare.
    double gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double r = std::sqrt(-2.0 * std::log(uniform_open()));
        const double a = 2.0 * std::numbers::pi * uniform();
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    double gaussian(double mean, double stddev) { return mean + stddev * gaussian(); }

    std::vector<double> gaussian_vec(size_t n, double stddev = 1.0) {
        std::vector<double> out(n);
        for (auto& x : out) x = stddev * gaussian();
        return out;
    }

    // Independent stream derived from (seed, index). Serial and parallel
    // consumers that split work by index draw identical values.
    Rng substream(uint64_t index) const {
        return Rng(detail::splitmix64(seed_ ^ detail::splitmix64(index + 0x51AFD1EDULL)));
    }

    // Fisher-Yates.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(uniform_int(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // Sattolo's cycle: a uniformly random cyclic permutation, hence a
    // derangement for n >= 2.
    std::vector<size_t> derangement(size_t n) {
        std::vector<size_t> p(n);
        for (size_t i = 0; i < n; ++i) p[i] = i;
        for (size_t i = n; i > 1; --i) {
            size_t j = static_cast<size_t>(uniform_int(i - 1));
            std::swap(p[i - 1], p[j]);
        }
        return p;
    }

private:
    uint64_t seed_ = 0;
    uint64_t state_ = 0;
    uint64_t counter_ = 0;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace kdm
