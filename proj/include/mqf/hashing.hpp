#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>

#include "mqf/core.hpp"
#include "mqf/rng.hpp"

namespace mqf {

/// One binary hash: bit(x) = [w . x > a]. The plane normal w keeps its
/// Gaussian coordinates as drawn and is deliberately not normalised.
/// a = 0 gives the sign hash for cosine similarity; a uniform offset over
/// the projections of a point set gives the family used for tree splits.
struct HyperplaneHash {
    Vector w;
    double a = 0.0;
};

/// Concatenation of m independent binary hashes; collision means the full
/// m-bit code strings are equal.
struct CompoundHash {
    std::vector<HyperplaneHash> bits;
};

/// Plane normal with d independent standard-normal coordinates.
inline Vector sample_hyperplane(std::size_t dim, SplitRng& rng) {
    if (dim < 2) throw std::invalid_argument("dimension must be >= 2");
    Vector w(dim);
    for (double& x : w) x = rng.gaussian();
    return w;
}

/// Uniform offset bounded by the extreme heights of the given projections.
inline double sample_offset(std::span<const double> projections, SplitRng& rng) {
    if (projections.empty()) throw std::invalid_argument("empty projections");
    double lo = projections[0];
    double hi = projections[0];
    for (double p : projections) {
        lo = std::min(lo, p);
        hi = std::max(hi, p);
    }
    return rng.uniform(lo, hi);
}

/// Strict inequality; a tie (w . x == a) hashes to 0.
inline bool hash_bit(const HyperplaneHash& h, std::span<const double> x) {
    return dot(h.w, x) > h.a;
}

inline bool hash_bit(const HyperplaneHash& h, std::span<const float> x) {
    return dot(x, std::span<const double>(h.w)) > h.a;
}

inline std::string compound_code(const CompoundHash& c, std::span<const double> x) {
    if (c.bits.empty()) throw std::invalid_argument("compound hash has no bits");
    std::string code;
    code.reserve(c.bits.size());
    for (const HyperplaneHash& h : c.bits) code.push_back(hash_bit(h, x) ? '1' : '0');
    return code;
}

/// Closed-form collision probability of the zero-offset hyperplane hash for
/// two unit vectors at the given Euclidean distance:
/// p = 1 - theta / pi with cos(theta) = 1 - dist^2 / 2.
inline double charikar_collision_probability(double dist) {
    if (!(dist >= 0.0 && dist <= 2.0)) throw std::invalid_argument("distance must lie in [0, 2]");
    const double cos_theta = 1.0 - 0.5 * dist * dist;
    const double theta = std::acos(std::min(1.0, std::max(-1.0, cos_theta)));
    return 1.0 - theta / 3.14159265358979323846;
}

}  // namespace mqf
