#include <algorithm>
#include <cmath>

#include "catch_amalgamated.hpp"
#include "mqf/data_io.hpp"
#include "mqf/stats.hpp"
#include "test_util.hpp"

using namespace mqf;
using Catch::Approx;

TEST_CASE("conditional moments for degenerate neighbour sets", "[stats]") {
    SplitRng rng(1);
    const UnitVector u = test::random_unit(8, rng);

    // A = {u}: zero variance, mean b.
    const CollisionMoments self = conditional_plane_moments({u}, u, 0.7);
    CHECK(self.mean[0] == Approx(0.7).margin(1e-9));
    CHECK(self.cov.at(0, 0) == Approx(0.0).margin(1e-9));

    // Single row orthogonal to u: mean 0, variance 1.
    Vector perp(8, 0.0);
    perp[0] = -u[1];
    perp[1] = u[0];
    const UnitVector x = l2_normalize(perp);
    REQUIRE(dot(x.span(), u.span()) == Approx(0.0).margin(1e-12));
    const CollisionMoments ortho = conditional_plane_moments({x}, u, 0.3);
    CHECK(ortho.mean[0] == Approx(0.0).margin(1e-12));
    CHECK(ortho.cov.at(0, 0) == Approx(1.0).margin(1e-9));
}

TEST_CASE("conditional covariance diagonal lies in [0, 1]", "[stats]") {
    SplitRng rng(2);
    const auto knn = test::random_units(30, 16, rng);
    const UnitVector u = test::random_unit(16, rng);
    const CollisionMoments m = conditional_plane_moments(knn, u, -0.4);
    for (std::size_t i = 0; i < knn.size(); ++i) {
        const double v = m.cov.at(i, i);
        CHECK(v >= -1e-12);
        CHECK(v <= 1.0 + 1e-12);
        CHECK(v == Approx(1.0 - std::pow(dot(knn[i].span(), u.span()), 2)).margin(1e-9));
    }
}

TEST_CASE("conditional covariance is positive semi-definite", "[stats]") {
    // Cholesky of cov + 1e-8 I succeeds iff the smallest eigenvalue is
    // above -1e-8.
    SplitRng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const auto knn = test::random_units(12, 24, rng);
        const UnitVector u = test::random_unit(24, rng);
        Matrix a = conditional_plane_moments(knn, u, 0.2).cov;
        const std::size_t n = a.rows;
        for (std::size_t i = 0; i < n; ++i) a.at(i, i) += 1e-8;
        bool ok = true;
        for (std::size_t i = 0; i < n && ok; ++i) {
            for (std::size_t j = 0; j <= i; ++j) {
                double sum = a.at(i, j);
                for (std::size_t k = 0; k < j; ++k) sum -= a.at(i, k) * a.at(j, k);
                if (i == j) {
                    if (sum <= 0.0) {
                        ok = false;
                        break;
                    }
                    a.at(i, i) = std::sqrt(sum);
                } else {
                    a.at(i, j) = sum / a.at(j, j);
                }
            }
        }
        CHECK(ok);
    }
}

TEST_CASE("conditioned plane sampler hits the constraint exactly", "[stats]") {
    SplitRng rng(4);
    const UnitVector u = test::random_unit(32, rng);
    const double b = -0.85;
    Vector mean_residual(32, 0.0);
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const Vector w = sample_conditioned_plane(u, b, rng);
        REQUIRE(dot(w, u.span()) == Approx(b).margin(1e-12));
        for (std::size_t c = 0; c < 32; ++c) mean_residual[c] += w[c] - b * u[c];
    }
    for (std::size_t c = 0; c < 32; ++c)
        CHECK(mean_residual[c] / n == Approx(0.0).margin(0.03));
}

TEST_CASE("Monte-Carlo moments match the conditional model", "[stats]") {
    // Conditioned-Gaussian sampler oracle at k = 20, checked entrywise
    // against the closed form within 3 standard errors (loose sanity at
    // unit-test scale; the acceptance suite runs the full protocol).
    SplitRng rng(5);
    const std::size_t k = 20, d = 64;
    const auto knn = test::random_units(k, d, rng);
    const UnitVector u = test::random_unit(d, rng);
    const double b = 0.6;
    const CollisionMoments model = conditional_plane_moments(knn, u, b);

    const int draws = 20000;
    Vector sum(k, 0.0);
    Matrix cross(k, k);
    for (int t = 0; t < draws; ++t) {
        const Vector w = sample_conditioned_plane(u, b, rng);
        Vector h(k);
        for (std::size_t i = 0; i < k; ++i) h[i] = dot(w, knn[i].span());
        for (std::size_t i = 0; i < k; ++i) {
            sum[i] += h[i];
            for (std::size_t j = i; j < k; ++j) cross.at(i, j) += h[i] * h[j];
        }
    }
    std::size_t outliers = 0;
    for (std::size_t i = 0; i < k; ++i) {
        const double mean_i = sum[i] / draws;
        const double se = std::sqrt(model.cov.at(i, i) / draws) + 1e-12;
        if (std::abs(mean_i - model.mean[i]) > 3.0 * se) ++outliers;
        for (std::size_t j = i; j < k; ++j) {
            const double cov_ij = cross.at(i, j) / draws - mean_i * (sum[j] / draws);
            const double se_cov = std::sqrt((model.cov.at(i, i) * model.cov.at(j, j) +
                                             std::pow(model.cov.at(i, j), 2)) /
                                            draws) +
                                  1e-12;
            if (std::abs(cov_ij - model.cov.at(i, j)) > 3.0 * se_cov) ++outliers;
        }
    }
    // 230 correlated comparisons at the 3-sigma level: allow a handful.
    CHECK(outliers <= 5);
}

TEST_CASE("closed-form ACP basics", "[stats]") {
    SplitRng rng(6);
    const UnitVector u = test::random_unit(8, rng);
    CHECK(acp_closed_form(u, {u}) == Approx(1.0).margin(1e-12));

    // The arccos singularity at distance 2 limits precision to ~1e-8.
    Vector neg(u.coords());
    for (double& x : neg) x = -x;
    CHECK(acp_closed_form(u, {UnitVector(neg)}) == Approx(0.0).margin(1e-6));

    const auto [x, y] = test::unit_pair_at_distance(8, 0.33);
    CHECK(acp_closed_form(x, {y}) == Approx(0.89).margin(0.005));

    CHECK_THROWS_AS(acp_closed_form(u, {}), std::invalid_argument);
}

TEST_CASE("Monte-Carlo ACP converges to the closed form", "[stats]") {
    SplitRng rng(7);
    const auto knn = test::random_units(10, 12, rng);
    const UnitVector u = test::random_unit(12, rng);
    const double exact = acp_closed_form(u, knn);

    SplitRng mc_rng = rng.split(1);
    const AcpEstimate low = acp_monte_carlo(u.span(), knn, HashFamily::zero_offset, 2000,
                                            nullptr, mc_rng);
    CHECK(low.probability == Approx(exact).margin(3.0 * low.std_error));

    SplitRng mc_rng2 = rng.split(2);
    const AcpEstimate high = acp_monte_carlo(u.span(), knn, HashFamily::zero_offset, 32000,
                                             nullptr, mc_rng2);
    CHECK(high.probability == Approx(exact).margin(3.0 * high.std_error));
    // O(1 / sqrt(trials)) convergence: the reported error shrinks by ~4x.
    CHECK(high.std_error < 0.5 * low.std_error);

    const AcpEstimate self = acp_monte_carlo(u.span(), {u}, HashFamily::zero_offset, 500,
                                             nullptr, mc_rng);
    CHECK(self.probability == 1.0);

    CHECK_THROWS_AS(
        acp_monte_carlo(u.span(), knn, HashFamily::uniform_offset, 10, nullptr, mc_rng),
        std::invalid_argument);
}

TEST_CASE("uniform-offset ACP uses dataset-wide bounds", "[stats]") {
    const auto ds = gen_clustered_sphere(2000, 16, 4, 0.05, 8);
    SplitRng rng(9);
    const UnitVector q = ds.points.row_unit(0);
    std::vector<std::uint32_t> ids;
    for (std::uint32_t i = 4; i < 44; i += 4) ids.push_back(i);  // same cluster as row 0
    const auto knn = ds.points.gather_units(ids);
    const AcpEstimate est =
        acp_monte_carlo(q.span(), knn, HashFamily::uniform_offset, 2000, &ds.points, rng);
    CHECK(est.probability > 0.5);  // near neighbours collide more often than not
    CHECK(est.probability <= 1.0);
}

TEST_CASE("diagnostic: extreme projections above and below sampled planes", "[stats]") {
    // The uniform-offset model treats max(X.w) and -min(X.w) as roughly
    // equal; print both so the assumption can be eyeballed, assert nothing
    // beyond well-formedness.
    const auto ds = gen_clustered_sphere(20000, 32, kDefaultClusters, kDefaultSpread, 77);
    SplitRng rng(78);
    double mean_hi = 0.0, mean_lo = 0.0;
    for (int i = 0; i < 20; ++i) {
        const Vector w = sample_hyperplane(32, rng);
        const auto [lo, hi] = projection_extremes(ds.points, w);
        REQUIRE(lo < hi);
        mean_lo += lo;
        mean_hi += hi;
    }
    WARN("mean extreme projections over 20 sampled planes: max above = "
         << mean_hi / 20.0 << ", max below = " << mean_lo / 20.0);
}

TEST_CASE("the centroid beats the query on average collision probability", "[stats]") {
    // Paired comparison with a shared hash-function stream on clustered
    // neighbourhoods.
    const auto ds = gen_clustered_sphere(20000, 32, 10, 0.05, 10);
    SplitRng qrng(11);
    auto split = draw_and_exclude_queries(ds.points, 100, qrng);
    const GroundTruth gt = brute_force_knn(split.data, split.queries, 50);

    std::size_t centroid_wins = 0;
    for (std::uint32_t qi = 0; qi < split.queries.size(); ++qi) {
        std::vector<std::uint32_t> ids;
        for (const auto& [id, dist] : gt.entries[qi]) ids.push_back(id);
        const auto knn = split.data.gather_units(ids);
        const UnitVector q = split.queries.row_unit(qi);
        const UnitVector c = normalized_centroid(split.data, ids);

        SplitRng paired_a = qrng.split(qi);
        SplitRng paired_b = qrng.split(qi);
        const double acp_c =
            acp_monte_carlo(c.span(), knn, HashFamily::zero_offset, 1500, nullptr, paired_a)
                .probability;
        const double acp_q =
            acp_monte_carlo(q.span(), knn, HashFamily::zero_offset, 1500, nullptr, paired_b)
                .probability;
        centroid_wins += acp_c >= acp_q;
    }
    CHECK(centroid_wins >= 99);
}

TEST_CASE("centroid optimality: degenerate and sign-flip cases", "[stats]") {
    SplitRng rng(12);
    const auto knn = test::random_units(20, 16, rng);
    std::vector<Vector> pts;
    for (const auto& x : knn) pts.push_back(x.coords());
    const Vector c = centroid(pts);

    const OptimalityReport only_c = centroid_optimality_check(knn, {c}, 0.5);
    CHECK(only_c.best_mean_sum == 0);
    CHECK(only_c.best_trace == 0);

    // Candidates: c first, then perturbations. For b > 0 the centroid
    // attains the maximal mean sum; for b < 0 the minimal one.
    std::vector<Vector> candidates{c};
    for (int i = 0; i < 20; ++i) {
        Vector perturbed(c);
        const Vector dir = sample_hyperplane(16, rng);
        const double scale = 0.25 * norm(c) / norm(dir);
        for (std::size_t j = 0; j < perturbed.size(); ++j) perturbed[j] += scale * dir[j];
        candidates.push_back(std::move(perturbed));
    }
    const OptimalityReport pos = centroid_optimality_check(knn, candidates, 0.8);
    CHECK(pos.best_mean_sum == 0);
    const OptimalityReport neg = centroid_optimality_check(knn, candidates, -0.8);
    CHECK(neg.best_mean_sum == 0);
    CHECK(neg.mean_sums[0] == Approx(-pos.mean_sums[0]).margin(1e-12));
    CHECK(*std::min_element(neg.mean_sums.begin(), neg.mean_sums.end()) == neg.mean_sums[0]);
}

TEST_CASE("Newton identity for the off-diagonal sum", "[stats]") {
    SplitRng rng(13);
    // k = 1: no pairs.
    const auto single = test::random_units(1, 8, rng);
    const UnitVector u1 = test::random_unit(8, rng);
    const auto [lhs1, rhs1] = offdiag_identity(single, u1);
    CHECK(lhs1 == 0.0);
    CHECK(rhs1 == Approx(0.0).margin(1e-15));

    // k = 2 with equal heights t: both sides are 2 t^2.
    const auto [x, y] = test::unit_pair_at_distance(8, 0.4);
    Vector bisector(8, 0.0);
    for (std::size_t i = 0; i < 8; ++i) bisector[i] = x[i] + y[i];
    const UnitVector mid = l2_normalize(bisector);
    const auto [lhs2, rhs2] = offdiag_identity({x, y}, mid);
    const double t = dot(x.span(), mid.span());
    CHECK(lhs2 == Approx(2.0 * t * t).margin(1e-12));
    CHECK(rhs2 == Approx(lhs2).margin(1e-12));

    // Random instances up to k = 100.
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t k = 2 + rng.next_u64() % 99;
        const auto knn = test::random_units(k, 12, rng);
        const UnitVector u = test::random_unit(12, rng);
        const auto [lhs, rhs] = offdiag_identity(knn, u);
        CHECK(lhs == Approx(rhs).margin(1e-9));
    }
}

TEST_CASE("empirical hash covariance of identical columns is 1", "[stats]") {
    SplitRng rng(14);
    const UnitVector x = test::random_unit(16, rng);
    const std::vector<UnitVector> knn{x, x, x};
    const UnitVector u = test::random_unit(16, rng);
    const HashCovariance hc = empirical_hash_covariance(knn, u, 200, 0.01, rng);
    // Identical rows give identical height columns: every off-diagonal
    // covariance equals the (positive) common variance.
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j)
            CHECK(hc.cov.at(i, j) == Approx(hc.cov.at(0, 0)).margin(1e-9));
    CHECK(hc.cov.at(0, 0) > 0.0);
    CHECK(hc.offdiag_values.size() == 6);
}

TEST_CASE("empirical hash covariance approaches the conditional model", "[stats]") {
    SplitRng rng(15);
    const auto knn = test::random_units(8, 24, rng);
    const UnitVector u = test::random_unit(24, rng);
    const HashCovariance hc = empirical_hash_covariance(knn, u, 4000, 0.01, rng);
    const CollisionMoments model = conditional_plane_moments(knn, u, 0.0);
    for (std::size_t i = 0; i < 8; ++i)
        for (std::size_t j = 0; j < 8; ++j)
            CHECK(hc.cov.at(i, j) == Approx(model.cov.at(i, j)).margin(0.08));
}

TEST_CASE("hash covariance sampling budget is enforced", "[stats]") {
    SplitRng rng(16);
    const auto knn = test::random_units(4, 8, rng);
    const UnitVector u = test::random_unit(8, rng);
    // Acceptance probability ~2e-9 per draw makes the 1e7 cap certain.
    CHECK_THROWS_AS(empirical_hash_covariance(knn, u, 10, 1e-9, rng), std::runtime_error);
}

TEST_CASE("chi_fit recovers a known sigma and rejects degenerate data", "[stats]") {
    SplitRng rng(17);
    std::vector<double> samples;
    samples.reserve(10000);
    for (int i = 0; i < 10000; ++i) samples.push_back(0.1 * std::sqrt(rng.chi_squared(20)));
    const ChiFit fit = chi_fit(samples, 20);
    CHECK(fit.sigma_hat == Approx(0.1).epsilon(0.02));
    CHECK(fit.p_value > 0.01);

    const std::vector<double> constant(100, 0.7);
    const ChiFit degenerate = chi_fit(constant, 20);
    CHECK(degenerate.p_value < 1e-6);

    CHECK_THROWS_AS(chi_fit(std::vector<double>(10, 1.0), 5), std::invalid_argument);
    CHECK_THROWS_AS(chi_fit(std::vector<double>(50, -1.0), 5), std::invalid_argument);

    // dof = 1 reduces to the half-normal fit.
    std::vector<double> half_normal;
    for (int i = 0; i < 5000; ++i) half_normal.push_back(std::abs(0.4 * rng.gaussian()));
    const ChiFit hn = chi_fit(half_normal, 1);
    CHECK(hn.sigma_hat == Approx(0.4).epsilon(0.05));
    CHECK(hn.p_value > 0.01);
}

TEST_CASE("superiority probability golden value and limits", "[stats]") {
    CHECK(superiority_probability({20, 0.8}) == Approx(0.00035).margin(1e-4));
    // r_ratio -> 0 limit is 1/2 by beta symmetry.
    CHECK(superiority_probability({20, 1e-12}) == Approx(0.5).margin(1e-9));
    CHECK_THROWS_AS(superiority_probability({20, 0.0}), std::invalid_argument);
    CHECK_THROWS_AS(superiority_probability({20, 1.0}), std::invalid_argument);
    CHECK_THROWS_AS(superiority_probability({0, 0.5}), std::invalid_argument);
}

TEST_CASE("superiority probability is monotone", "[stats]") {
    // Decreasing in m at fixed ratio and decreasing in the ratio at fixed
    // m (a better-matched sample radius makes violations rarer).
    double prev = 1.0;
    for (unsigned m : {1u, 2u, 5u, 10u, 20u, 50u, 100u}) {
        const double p = superiority_probability({m, 0.8});
        CHECK(p < prev);
        prev = p;
    }
    prev = 1.0;
    for (double ratio : {0.05, 0.2, 0.4, 0.6, 0.8, 0.95}) {
        const double p = superiority_probability({10, ratio});
        CHECK(p < prev);
        prev = p;
    }
}

TEST_CASE("superiority probability matches an F-distribution sampler", "[stats]") {
    // Oracle: Pr(sqrt((1 - ratio) F_{m,m}) > 1) by direct simulation.
    SplitRng rng(18);
    const double ratio = 0.8;
    const unsigned m = 20;
    const int draws = 2000000;
    int exceed = 0;
    for (int i = 0; i < draws; ++i) {
        const double f = rng.chi_squared(m) / rng.chi_squared(m);
        exceed += std::sqrt((1.0 - ratio) * f) > 1.0;
    }
    const double mc = static_cast<double>(exceed) / draws;
    const double exact = superiority_probability({m, ratio});
    const double se = std::sqrt(exact * (1.0 - exact) / draws);
    CHECK(mc == Approx(exact).margin(3.0 * se));
}

TEST_CASE("kappa quality ratio", "[stats]") {
    SplitRng rng(19);
    const UnitVector q = test::random_unit(8, rng);
    const UnitVector c = test::random_unit(8, rng);
    CHECK(kappa(q, c, c) == 0.0);
    CHECK(kappa(q, c, q) == Approx(1.0).margin(1e-12));
    CHECK_THROWS_AS(kappa(q, q, c), std::invalid_argument);
}

TEST_CASE("two-sample KS test separates distinct distributions", "[stats]") {
    SplitRng rng(20);
    std::vector<double> a, b, c;
    for (int i = 0; i < 2000; ++i) {
        a.push_back(rng.gaussian());
        b.push_back(rng.gaussian());
        c.push_back(2.0 * rng.gaussian());
    }
    const KsResult same = ks_two_sample(a, b);
    CHECK(same.p_value > 0.01);
    const KsResult diff = ks_two_sample(a, c);
    CHECK(diff.p_value < 1e-6);
    CHECK(diff.statistic > same.statistic);
}

TEST_CASE("coordinate experiment confirms the estimator model", "[stats]") {
    const auto ds = gen_clustered_sphere(30000, 32, 8, 0.05, 21);
    SplitRng qrng(22);
    auto split = draw_and_exclude_queries(ds.points, 300, qrng);
    SplitRng crng(23);
    const CltReport report = clt_coordinate_experiment(split.data, split.queries, 50, 150, crng);

    CHECK(report.violations == 0);
    CHECK(report.var_chat_minus_c < report.var_c_minus_mu);
    CHECK(report.ratio_scaling.p_value > 0.01);
    CHECK(report.c_minus_mu.size() == 300);

    CHECK_THROWS_AS(clt_coordinate_experiment(split.data, split.queries, 50, 50, crng),
                    std::invalid_argument);
}
