#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "mqf/core.hpp"
#include "mqf/data_io.hpp"
#include "mqf/hashing.hpp"
#include "mqf/rng.hpp"
#include "mqf/special_functions.hpp"

namespace mqf {

// ---------------------------------------------------------------------------
// Conditional hyperplane model. Conditioning a standard-Gaussian plane
// normal w on a fixed height u . w = b of a unit vector u makes the
// neighbour heights A w jointly Gaussian with
//   mean_i  = b (u . x_i)
//   cov_ij  = x_i . x_j - (x_i . u)(x_j . u)
// ---------------------------------------------------------------------------

struct CollisionMoments {
    Vector mean;  // length k
    Matrix cov;   // k x k, symmetric
};

inline CollisionMoments conditional_plane_moments(const std::vector<UnitVector>& neighbours,
                                                  const UnitVector& u, double b) {
    if (neighbours.empty()) throw std::invalid_argument("empty neighbour set");
    const std::size_t k = neighbours.size();
    std::vector<double> height(k);
    for (std::size_t i = 0; i < k; ++i) {
        check_same_dim(neighbours[i].dim(), u.dim());
        height[i] = dot(neighbours[i].span(), u.span());
    }
    CollisionMoments m;
    m.mean.resize(k);
    m.cov = Matrix(k, k);
    for (std::size_t i = 0; i < k; ++i) {
        m.mean[i] = b * height[i];
        for (std::size_t j = i; j < k; ++j) {
            const double value =
                dot(neighbours[i].span(), neighbours[j].span()) - height[i] * height[j];
            m.cov.at(i, j) = value;
            m.cov.at(j, i) = value;
        }
    }
    return m;
}

/// Exact draw from the plane-normal distribution conditioned on u . w = b:
/// w = b u + (I - u u^T) g with g standard normal.
inline Vector sample_conditioned_plane(const UnitVector& u, double b, SplitRng& rng) {
    const std::size_t d = u.dim();
    Vector w(d);
    for (double& x : w) x = rng.gaussian();
    const double along = dot(w, u.span());
    for (std::size_t i = 0; i < d; ++i) w[i] += (b - along) * u[i];
    return w;
}

// ---------------------------------------------------------------------------
// Average collision probability.
// ---------------------------------------------------------------------------

/// Closed-form ACP under the zero-offset hyperplane family:
/// mean of the pairwise collision probabilities to each neighbour.
inline double acp_closed_form(const UnitVector& u, const std::vector<UnitVector>& knn) {
    if (knn.empty()) throw std::invalid_argument("empty neighbour set");
    double sum = 0.0;
    for (const UnitVector& x : knn) {
        const double dist = std::min(2.0, euclidean_distance(u.span(), x.span()));
        sum += charikar_collision_probability(dist);
    }
    return sum / static_cast<double>(knn.size());
}

enum class HashFamily {
    zero_offset,    // sign hash through the origin
    uniform_offset  // offset drawn between the extreme dataset projections
};

/// Heights of the furthest dataset points above and below a plane normal.
/// Diagnostic companion to the uniform-offset family: the offset model
/// treats these as roughly symmetric, which is not asserted anywhere.
inline std::pair<double, double> projection_extremes(const DataMatrix& data,
                                                     std::span<const double> w) {
    if (data.size() == 0) throw std::invalid_argument("empty dataset");
    double lo = dot(data.row(0), w);
    double hi = lo;
    for (std::uint32_t i = 1; i < data.size(); ++i) {
        const double p = dot(data.row(i), w);
        lo = std::min(lo, p);
        hi = std::max(hi, p);
    }
    return {lo, hi};
}

struct AcpEstimate {
    double probability = 0.0;
    double std_error = 0.0;
};

/// Empirical ACP over sampled hash functions. The uniform-offset family
/// draws each offset against the projections of the whole dataset, which
/// must be supplied.
inline AcpEstimate acp_monte_carlo(std::span<const double> u, const std::vector<UnitVector>& knn,
                                   HashFamily family, std::size_t trials,
                                   const DataMatrix* dataset, SplitRng& rng) {
    if (knn.empty()) throw std::invalid_argument("empty neighbour set");
    if (trials < 1) throw std::invalid_argument("need at least one trial");
    if (family == HashFamily::uniform_offset && dataset == nullptr)
        throw std::invalid_argument("uniform-offset family needs the dataset");
    const std::size_t d = u.size();
    for (const UnitVector& x : knn) check_same_dim(x.dim(), d);

    double sum = 0.0;
    double sum_sq = 0.0;
    for (std::size_t t = 0; t < trials; ++t) {
        const Vector w = sample_hyperplane(d, rng);
        double a = 0.0;
        if (family == HashFamily::uniform_offset) {
            const auto [lo, hi] = projection_extremes(*dataset, w);
            a = rng.uniform(lo, hi);
        }
        const bool input_bit = dot(w, u) > a;
        std::size_t collisions = 0;
        for (const UnitVector& x : knn)
            collisions += (dot(w, x.span()) > a) == input_bit;
        const double fraction = static_cast<double>(collisions) / static_cast<double>(knn.size());
        sum += fraction;
        sum_sq += fraction * fraction;
    }
    AcpEstimate est;
    est.probability = sum / static_cast<double>(trials);
    if (trials > 1) {
        const double var =
            (sum_sq - sum * sum / static_cast<double>(trials)) / static_cast<double>(trials - 1);
        est.std_error = std::sqrt(std::max(0.0, var) / static_cast<double>(trials));
    }
    return est;
}

// ---------------------------------------------------------------------------
// Centroid optimality.
// ---------------------------------------------------------------------------

/// Per-candidate summary of the conditional model: the sum of neighbour
/// height means and the covariance trace. Candidates are scaled to the
/// unit sphere before evaluation, since the conditional model (and any
/// hash input in this space) is defined for unit vectors; the centroid of
/// the neighbour set attains the maximal mean sum for b > 0 (minimal for
/// b < 0) and the minimal trace.
struct OptimalityReport {
    std::vector<double> mean_sums;
    std::vector<double> traces;
    std::size_t best_mean_sum = 0;  // extremal mean sum under the sign of b
    std::size_t best_trace = 0;     // minimal trace
};

inline OptimalityReport centroid_optimality_check(const std::vector<UnitVector>& knn,
                                                  const std::vector<Vector>& candidates,
                                                  double b) {
    if (knn.empty()) throw std::invalid_argument("empty neighbour set");
    if (candidates.empty()) throw std::invalid_argument("no candidates");

    OptimalityReport report;
    report.mean_sums.reserve(candidates.size());
    report.traces.reserve(candidates.size());
    for (const Vector& candidate : candidates) {
        const UnitVector unit = l2_normalize(candidate);
        const CollisionMoments m = conditional_plane_moments(knn, unit, b);
        double mean_sum = 0.0;
        double trace = 0.0;
        for (std::size_t i = 0; i < m.mean.size(); ++i) {
            mean_sum += m.mean[i];
            trace += m.cov.at(i, i);
        }
        report.mean_sums.push_back(mean_sum);
        report.traces.push_back(trace);
    }

    auto arg_extreme = [&](const std::vector<double>& v, bool maximise) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < v.size(); ++i)
            if (maximise ? v[i] > v[best] : v[i] < v[best]) best = i;
        return best;
    };
    report.best_mean_sum = arg_extreme(report.mean_sums, b > 0.0);
    report.best_trace = arg_extreme(report.traces, false);
    return report;
}

/// Both routes to the off-diagonal height-product sum: the direct pair
/// loop and its Newton-identity rewrite (square of the sum minus the sum
/// of squares). They agree to 1e-9 on any input.
inline std::pair<double, double> offdiag_identity(const std::vector<UnitVector>& knn,
                                                  const UnitVector& u) {
    std::vector<double> height(knn.size());
    for (std::size_t i = 0; i < knn.size(); ++i) height[i] = dot(knn[i].span(), u.span());

    double lhs = 0.0;
    for (std::size_t i = 0; i < height.size(); ++i)
        for (std::size_t j = 0; j < height.size(); ++j)
            if (i != j) lhs += height[i] * height[j];

    double sum = 0.0, sum_sq = 0.0;
    for (double h : height) {
        sum += h;
        sum_sq += h * h;
    }
    return {lhs, sum * sum - sum_sq};
}

// ---------------------------------------------------------------------------
// Empirical covariance of neighbour heights over near-zero-height planes.
// ---------------------------------------------------------------------------

struct HashCovariance {
    Matrix cov;                         // k x k column covariance of heights
    double offdiag_mean = 0.0;          // mean over all i != j entries
    std::vector<double> offdiag_values; // flattened i != j entries
};

/// Rejection-sample `num_planes` Gaussian plane normals with |u . w| below
/// `b_tol`, record each neighbour's height above every accepted plane and
/// return the column covariance of that height matrix. The height of u is
/// drawn first and rejected on its own, so only accepted planes pay for a
/// full d-dimensional draw; the accepted distribution is exactly the naive
/// rejection one. Total height draws are capped at 1e7.
inline HashCovariance empirical_hash_covariance(const std::vector<UnitVector>& knn,
                                                const UnitVector& u, std::size_t num_planes,
                                                double b_tol, SplitRng& rng) {
    if (knn.empty()) throw std::invalid_argument("empty neighbour set");
    if (num_planes < 2) throw std::invalid_argument("need at least two planes");
    if (!(b_tol > 0.0)) throw std::invalid_argument("height tolerance must be positive");

    const std::size_t k = knn.size();
    const std::size_t d = u.dim();
    for (const UnitVector& x : knn) check_same_dim(x.dim(), d);

    constexpr std::uint64_t kDrawBudget = 10'000'000;
    std::uint64_t draws = 0;

    Matrix heights(num_planes, k);
    Vector w(d);
    for (std::size_t p = 0; p < num_planes; ++p) {
        double height_u = 0.0;
        for (;;) {
            if (++draws > kDrawBudget) throw std::runtime_error("sampling budget exceeded");
            height_u = rng.gaussian();
            if (std::abs(height_u) < b_tol) break;
        }
        for (double& x : w) x = rng.gaussian();
        const double along = dot(w, u.span());
        for (std::size_t i = 0; i < d; ++i) w[i] += (height_u - along) * u[i];
        for (std::size_t i = 0; i < k; ++i) heights.at(p, i) = dot(w, knn[i].span());
    }

    Vector mean(k, 0.0);
    for (std::size_t p = 0; p < num_planes; ++p)
        for (std::size_t i = 0; i < k; ++i) mean[i] += heights.at(p, i);
    for (double& m : mean) m /= static_cast<double>(num_planes);

    HashCovariance out;
    out.cov = Matrix(k, k);
    for (std::size_t p = 0; p < num_planes; ++p)
        for (std::size_t i = 0; i < k; ++i) {
            const double di = heights.at(p, i) - mean[i];
            for (std::size_t j = i; j < k; ++j)
                out.cov.at(i, j) += di * (heights.at(p, j) - mean[j]);
        }
    const double scale = 1.0 / static_cast<double>(num_planes - 1);
    double offdiag_sum = 0.0;
    out.offdiag_values.reserve(k * (k - 1));
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = i; j < k; ++j) {
            const double value = out.cov.at(i, j) * scale;
            out.cov.at(i, j) = value;
            out.cov.at(j, i) = value;
        }
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j)
            if (i != j) {
                out.offdiag_values.push_back(out.cov.at(i, j));
                offdiag_sum += out.cov.at(i, j);
            }
    out.offdiag_mean = offdiag_sum / static_cast<double>(out.offdiag_values.size());
    return out;
}

// ---------------------------------------------------------------------------
// Kolmogorov-Smirnov tests (two-sided, asymptotic p-values).
// ---------------------------------------------------------------------------

struct KsResult {
    double statistic = 0.0;
    double p_value = 0.0;
};

namespace detail {

inline double ks_p_value(double statistic, double effective_n) {
    const double sqrt_n = std::sqrt(effective_n);
    return kolmogorov_q((sqrt_n + 0.12 + 0.11 / sqrt_n) * statistic);
}

}  // namespace detail

/// One-sample KS test of `samples` against a continuous CDF.
template <typename Cdf>
KsResult ks_test(std::vector<double> samples, Cdf&& cdf) {
    if (samples.size() < 2) throw std::invalid_argument("need at least two samples");
    std::sort(samples.begin(), samples.end());
    const double n = static_cast<double>(samples.size());
    double statistic = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double f = cdf(samples[i]);
        statistic = std::max(statistic, std::abs(f - static_cast<double>(i) / n));
        statistic = std::max(statistic, std::abs(static_cast<double>(i + 1) / n - f));
    }
    return {statistic, detail::ks_p_value(statistic, n)};
}

inline KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
    if (a.size() < 2 || b.size() < 2) throw std::invalid_argument("need at least two samples");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    double statistic = 0.0;
    std::size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        const double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= x) ++i;
        while (j < b.size() && b[j] <= x) ++j;
        const double fa = static_cast<double>(i) / static_cast<double>(a.size());
        const double fb = static_cast<double>(j) / static_cast<double>(b.size());
        statistic = std::max(statistic, std::abs(fa - fb));
    }
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    return {statistic, detail::ks_p_value(statistic, na * nb / (na + nb))};
}

// ---------------------------------------------------------------------------
// Distance-distribution model.
// ---------------------------------------------------------------------------

struct ChiFit {
    double sigma_hat = 0.0;
    double ks_statistic = 0.0;
    double p_value = 0.0;
};

/// Fit sigma * chi_m to positive distance samples by moment matching
/// (sample mean over the analytic chi mean), then KS-test the fit.
inline ChiFit chi_fit(std::vector<double> distances, unsigned dof) {
    if (dof < 1) throw std::invalid_argument("degrees of freedom must be >= 1");
    if (distances.size() < 30) throw std::invalid_argument("need at least 30 samples");
    double sum = 0.0;
    for (double x : distances) {
        if (!(x > 0.0)) throw std::invalid_argument("non-positive sample");
        sum += x;
    }
    ChiFit fit;
    fit.sigma_hat = sum / static_cast<double>(distances.size()) / chi_mean(dof);
    const double sigma = fit.sigma_hat;
    const KsResult ks =
        ks_test(std::move(distances), [dof, sigma](double x) { return chi_cdf(x, dof, sigma); });
    fit.ks_statistic = ks.statistic;
    fit.p_value = ks.p_value;
    return fit;
}

/// Probability that a centroid estimated from a capped-radius sample lands
/// farther from the true neighbourhood centroid than the query does,
/// under the local model with intrinsic dimension m and radius ratio
/// r1/r2: 1 - I_{1/(2 - r1/r2)}(m/2, m/2).
struct SuperiorityParams {
    unsigned m = 1;
    double r_ratio = 0.5;  // r1 / r2 in (0, 1)
};

inline double superiority_probability(const SuperiorityParams& params) {
    if (params.m < 1) throw std::invalid_argument("intrinsic dimension must be >= 1");
    if (!(params.r_ratio > 0.0 && params.r_ratio < 1.0))
        throw std::invalid_argument("radius ratio must lie in (0, 1)");
    const double x = 1.0 / (2.0 - params.r_ratio);
    const double half_m = 0.5 * static_cast<double>(params.m);
    return 1.0 - regularized_incomplete_beta(x, half_m, half_m);
}

/// Estimate quality ratio: distance from the normalised centroid to its
/// estimate, over the distance from the normalised centroid to the query.
/// 0 means a perfect estimate; below 1 beats the raw query.
inline double kappa(const UnitVector& q, const UnitVector& c_norm, const UnitVector& c_hat_norm) {
    const double denominator = euclidean_distance(c_norm.span(), q.span());
    if (denominator == 0.0) throw std::invalid_argument("degenerate query");
    return euclidean_distance(c_norm.span(), c_hat_norm.span()) / denominator;
}

// ---------------------------------------------------------------------------
// Coordinate-level verification of the centroid-estimator model.
// ---------------------------------------------------------------------------

struct CltReport {
    // Coordinate 0 of the per-query shifted centroids.
    std::vector<double> c_minus_mu;
    std::vector<double> chat_minus_mu;
    std::vector<double> chat_minus_c;
    std::vector<double> scaled_c_minus_mu;  // (r2/r1) * (c - mu), coordinate 0
    double var_c_minus_mu = 0.0;
    double var_chat_minus_c = 0.0;
    KsResult ratio_scaling;  // scaled (c - mu) vs (chat - mu)
    std::size_t violations = 0;  // queries with ||chat - c|| > ||c - mu||
};

/// For every query: shift the dataset onto the query, take the centroid of
/// its k nearest neighbours and the centroid of k points sampled uniformly
/// from its r nearest neighbours, and record coordinate 0 of each shifted
/// centroid. Aggregates the variance comparison, the ratio-scaling KS test
/// and the count of estimator-farther-than-query violations.
inline CltReport clt_coordinate_experiment(const DataMatrix& data, const DataMatrix& queries,
                                           std::uint32_t k, std::uint32_t r, SplitRng& rng) {
    if (r <= k) throw std::invalid_argument("sample radius rank must exceed k");
    if (r > data.size()) throw std::invalid_argument("not enough data for the requested rank");
    if (queries.size() < 2) throw std::invalid_argument("need at least two queries");

    const GroundTruth nn = brute_force_knn(data, queries, r);
    const std::size_t d = data.dim();

    CltReport report;
    report.c_minus_mu.reserve(queries.size());
    report.chat_minus_mu.reserve(queries.size());
    report.chat_minus_c.reserve(queries.size());
    report.scaled_c_minus_mu.reserve(queries.size());

    std::vector<std::uint32_t> ranks(r);
    for (std::size_t qi = 0; qi < queries.size(); ++qi) {
        const auto& neigh = nn.entries[qi];
        const Vector mu = queries.row_vector(static_cast<std::uint32_t>(qi));

        Vector c(d, 0.0);
        for (std::uint32_t i = 0; i < k; ++i) {
            const auto row = data.row(neigh[i].first);
            for (std::size_t c_i = 0; c_i < d; ++c_i) c[c_i] += static_cast<double>(row[c_i]);
        }
        for (std::size_t c_i = 0; c_i < d; ++c_i) c[c_i] = c[c_i] / k - mu[c_i];

        // k distinct ranks sampled uniformly from the r-neighbourhood.
        SplitRng sample_rng = rng.split(qi);
        std::iota(ranks.begin(), ranks.end(), 0);
        for (std::uint32_t i = 0; i < k; ++i) {
            const std::size_t j = i + detail::bounded_u64(sample_rng, r - i);
            std::swap(ranks[i], ranks[j]);
        }
        Vector chat(d, 0.0);
        double r2 = 0.0;
        for (std::uint32_t i = 0; i < k; ++i) {
            const auto& [id, dist] = neigh[ranks[i]];
            r2 = std::max(r2, dist);
            const auto row = data.row(id);
            for (std::size_t c_i = 0; c_i < d; ++c_i) chat[c_i] += static_cast<double>(row[c_i]);
        }
        for (std::size_t c_i = 0; c_i < d; ++c_i) chat[c_i] = chat[c_i] / k - mu[c_i];

        const double r1 = neigh[k - 1].second;
        if (!(r1 > 0.0)) throw std::runtime_error("degenerate neighbourhood radius");

        Vector chat_minus_c(d);
        for (std::size_t c_i = 0; c_i < d; ++c_i) chat_minus_c[c_i] = chat[c_i] - c[c_i];
        if (norm(chat_minus_c) > norm(c)) ++report.violations;

        report.c_minus_mu.push_back(c[0]);
        report.chat_minus_mu.push_back(chat[0]);
        report.chat_minus_c.push_back(chat_minus_c[0]);
        report.scaled_c_minus_mu.push_back((r2 / r1) * c[0]);
    }

    auto sample_variance = [](const std::vector<double>& v) {
        double mean = 0.0;
        for (double x : v) mean += x;
        mean /= static_cast<double>(v.size());
        double acc = 0.0;
        for (double x : v) acc += (x - mean) * (x - mean);
        return acc / static_cast<double>(v.size() - 1);
    };
    report.var_c_minus_mu = sample_variance(report.c_minus_mu);
    report.var_chat_minus_c = sample_variance(report.chat_minus_c);
    report.ratio_scaling = ks_two_sample(report.scaled_c_minus_mu, report.chat_minus_mu);
    return report;
}

}  // namespace mqf
