#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mqf {

using Vector = std::vector<double>;

/// Absolute tolerance on the l2-norm of vectors accepted as unit vectors.
inline constexpr double kUnitNormTolerance = 1e-6;

inline void check_same_dim(std::size_t a, std::size_t b) {
    if (a != b) throw std::invalid_argument("dimension mismatch");
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    check_same_dim(a.size(), b.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

/// 32-bit stored coordinates are promoted to double before arithmetic.
inline double dot(std::span<const float> a, std::span<const double> b) {
    check_same_dim(a.size(), b.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += static_cast<double>(a[i]) * b[i];
    return acc;
}

inline double dot(std::span<const double> a, std::span<const float> b) { return dot(b, a); }

inline double squared_norm(std::span<const double> v) {
    double acc = 0.0;
    for (double x : v) acc += x * x;
    return acc;
}

inline double norm(std::span<const double> v) { return std::sqrt(squared_norm(v)); }

inline double euclidean_distance(std::span<const double> x, std::span<const double> y) {
    check_same_dim(x.size(), y.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double diff = x[i] - y[i];
        acc += diff * diff;
    }
    return std::sqrt(acc);
}

inline double euclidean_distance(std::span<const double> x, std::span<const float> y) {
    check_same_dim(x.size(), y.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double diff = x[i] - static_cast<double>(y[i]);
        acc += diff * diff;
    }
    return std::sqrt(acc);
}

inline bool all_finite(std::span<const double> v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

/// An l2-normalised point. The invariant |norm - 1| <= 1e-6 is checked on
/// construction; use `l2_normalize` to build one from an arbitrary vector.
class UnitVector {
public:
    explicit UnitVector(Vector coords) : coords_(std::move(coords)) {
        if (coords_.size() < 2) throw std::invalid_argument("unit vector needs dimension >= 2");
        if (!all_finite(coords_)) throw std::invalid_argument("non-finite coordinate");
        if (std::abs(norm(coords_) - 1.0) > kUnitNormTolerance)
            throw std::invalid_argument("vector is not unit norm");
    }

    const Vector& coords() const { return coords_; }
    std::span<const double> span() const { return coords_; }
    std::size_t dim() const { return coords_.size(); }
    double operator[](std::size_t i) const { return coords_[i]; }

private:
    Vector coords_;
};

/// Scale a vector to unit norm, preserving direction.
inline UnitVector l2_normalize(const Vector& v) {
    const double n = norm(v);
    if (!(n > 0.0) || !std::isfinite(n)) throw std::invalid_argument("degenerate vector");
    Vector scaled(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) scaled[i] = v[i] / n;
    return UnitVector(std::move(scaled));
}

/// Coordinate-wise arithmetic mean.
inline Vector centroid(std::span<const Vector> points) {
    if (points.empty()) throw std::invalid_argument("centroid of empty point set");
    const std::size_t d = points.front().size();
    Vector sum(d, 0.0);
    for (const Vector& p : points) {
        check_same_dim(p.size(), d);
        for (std::size_t i = 0; i < d; ++i) sum[i] += p[i];
    }
    for (double& x : sum) x /= static_cast<double>(points.size());
    return sum;
}

/// Centroid scaled to unit norm. The rank-ordering of distances from the
/// result to any point set matches that of the unscaled centroid.
inline UnitVector normalized_centroid(std::span<const Vector> points) {
    const Vector c = centroid(points);
    if (!(norm(c) > 0.0)) throw std::invalid_argument("antipodal degenerate set");
    return l2_normalize(c);
}

/// Row-major dataset of unit vectors. Row i is point id i; ids are stable.
/// Storage is 32-bit float, promoted to double on arithmetic. Rows whose
/// norm is outside the unit tolerance are re-normalised on ingest and
/// counted rather than rejected.
class DataMatrix {
public:
    explicit DataMatrix(std::size_t dim) : dim_(dim) {
        if (dim < 2) throw std::invalid_argument("dimension must be >= 2");
    }

    static DataMatrix from_rows(const std::vector<Vector>& rows) {
        if (rows.empty()) throw std::invalid_argument("empty dataset");
        DataMatrix m(rows.front().size());
        m.reserve(rows.size());
        for (const Vector& r : rows) m.add_row(r);
        return m;
    }

    void reserve(std::size_t n) { data_.reserve(n * dim_); }

    void add_row(std::span<const double> row) {
        check_same_dim(row.size(), dim_);
        if (!all_finite(row)) throw std::invalid_argument("non-finite coordinate");
        const double n = norm(row);
        if (!(n > 0.0)) throw std::invalid_argument("degenerate vector");
        const bool renorm = std::abs(n - 1.0) > kUnitNormTolerance;
        if (renorm) ++renormalized_;
        for (double x : row) data_.push_back(static_cast<float>(renorm ? x / n : x));
        ++count_;
    }

    std::size_t dim() const { return dim_; }
    std::size_t size() const { return count_; }
    std::size_t renormalized_count() const { return renormalized_; }

    std::span<const float> row(std::uint32_t i) const {
        return {data_.data() + static_cast<std::size_t>(i) * dim_, dim_};
    }

    Vector row_vector(std::uint32_t i) const {
        const auto r = row(i);
        return Vector(r.begin(), r.end());
    }

    UnitVector row_unit(std::uint32_t i) const { return UnitVector(row_vector(i)); }

    std::vector<Vector> gather(std::span<const std::uint32_t> ids) const {
        std::vector<Vector> out;
        out.reserve(ids.size());
        for (std::uint32_t id : ids) out.push_back(row_vector(id));
        return out;
    }

    std::vector<UnitVector> gather_units(std::span<const std::uint32_t> ids) const {
        std::vector<UnitVector> out;
        out.reserve(ids.size());
        for (std::uint32_t id : ids) out.push_back(row_unit(id));
        return out;
    }

private:
    std::size_t dim_;
    std::size_t count_ = 0;
    std::size_t renormalized_ = 0;
    std::vector<float> data_;
};

inline Vector centroid(const DataMatrix& data, std::span<const std::uint32_t> ids) {
    if (ids.empty()) throw std::invalid_argument("centroid of empty point set");
    Vector sum(data.dim(), 0.0);
    for (std::uint32_t id : ids) {
        const auto r = data.row(id);
        for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += static_cast<double>(r[i]);
    }
    for (double& x : sum) x /= static_cast<double>(ids.size());
    return sum;
}

inline UnitVector normalized_centroid(const DataMatrix& data, std::span<const std::uint32_t> ids) {
    const Vector c = centroid(data, ids);
    if (!(norm(c) > 0.0)) throw std::invalid_argument("antipodal degenerate set");
    return l2_normalize(c);
}

/// Small dense row-major matrix used by the statistical machinery.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

}  // namespace mqf
