#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace mqf {

/// Seedable, splittable pseudo-random generator (xoshiro256++ core,
/// splitmix64 seeding). Every stochastic operation in the library takes
/// one of these explicitly, either by reference or as a derived stream.
///
/// `split(stream)` derives an independent child generator from the seed
/// this generator was constructed with, so the child sequence does not
/// depend on how many values the parent has already produced. Parallel
/// work derives one stream per task and never shares a generator.
class SplitRng {
public:
    explicit SplitRng(std::uint64_t seed) : seed_(seed) {
        std::uint64_t z = seed;
        for (auto& word : state_) word = splitmix64(z);
    }

    /// Independent child stream, a pure function of (seed, stream).
    SplitRng split(std::uint64_t stream) const {
        std::uint64_t z = seed_ ^ (0x632be59bd9b4e019ULL + stream * 0xbf58476d1ce4e5b9ULL);
        const std::uint64_t first = splitmix64(z);
        const std::uint64_t second = splitmix64(z);
        return SplitRng(first ^ (second << 1));
    }

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    /// Uniform double in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform double in [lo, hi]; degenerate interval returns lo.
    double uniform(double lo, double hi) {
        if (!(hi >= lo)) throw std::invalid_argument("uniform: invalid interval");
        return lo + (hi - lo) * uniform();
    }

    /// Standard normal deviate (Box-Muller, second value cached).
    double gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = 1.0 - uniform();  // (0, 1]
        const double u2 = uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 6.283185307179586476925286766559 * u2;
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

    /// Gamma(shape, 1) deviate, Marsaglia-Tsang squeeze method.
    double gamma(double shape) {
        if (!(shape > 0.0)) throw std::invalid_argument("gamma: shape must be positive");
        if (shape < 1.0) {
            const double boost = std::pow(1.0 - uniform(), 1.0 / shape);
            return gamma(shape + 1.0) * boost;
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x = gaussian();
            double v = 1.0 + c * x;
            if (v <= 0.0) continue;
            v = v * v * v;
            const double u = 1.0 - uniform();  // (0, 1], keeps log finite
            const double x2 = x * x;
            if (u < 1.0 - 0.0331 * x2 * x2) return d * v;
            if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v;
        }
    }

    /// Chi-squared deviate with `dof` degrees of freedom.
    double chi_squared(double dof) { return 2.0 * gamma(0.5 * dof); }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    static std::uint64_t splitmix64(std::uint64_t& z) {
        z += 0x9e3779b97f4a7c15ULL;
        std::uint64_t x = z;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

    std::uint64_t seed_;
    std::uint64_t state_[4];
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace mqf
