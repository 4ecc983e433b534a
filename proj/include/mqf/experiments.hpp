#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mqf/csv.hpp"
#include "mqf/data_io.hpp"
#include "mqf/forest.hpp"
#include "mqf/parallel.hpp"
#include "mqf/stats.hpp"

namespace mqf {

enum class BenchMode { rp, mq, both };

/// Shared configuration for the benchmark experiments. Every experiment is
/// a pure function of (dataset, config): re-running one produces
/// byte-identical CSV.
struct ExperimentConfig {
    std::size_t num_queries = 250;
    std::uint32_t k = 100;
    std::vector<std::uint32_t> tree_counts = {8, 16, 32, 48, 64, 96};
    std::uint32_t leaf_capacity = 500;
    std::uint32_t warmup_trees = 8;
    std::uint64_t seed = 1;
    BenchMode mode = BenchMode::both;

    std::size_t num_functions = 1000;                            // hash-failure
    std::vector<std::uint32_t> m_values = {100, 200, 500, 1000,  // kappa
                                           2000, 5000};
    std::uint32_t delta_trees = 19;   // delta-knn
    std::size_t num_planes = 1000;    // covariance
    double b_tol = 0.005;             // covariance height tolerance
    std::uint32_t sample_rank = 300;  // clt: r

    void validate(std::size_t data_size) const {
        if (num_queries < 1) throw std::invalid_argument("need at least one query");
        if (num_queries >= data_size) throw std::invalid_argument("query count must be below N");
        if (k < 1) throw std::invalid_argument("k must be >= 1");
        if (k > data_size - num_queries)
            throw std::invalid_argument("k must be at most N minus the query count");
        if (tree_counts.empty()) throw std::invalid_argument("need at least one tree count");
        for (std::uint32_t t : tree_counts)
            if (t < 1) throw std::invalid_argument("tree counts must be positive");
        if (leaf_capacity < 1) throw std::invalid_argument("leaf capacity must be >= 1");
        if (warmup_trees < 1) throw std::invalid_argument("warm-up tree count must be >= 1");
        if (delta_trees < 1) throw std::invalid_argument("tree count must be >= 1");
        if (num_functions < 1) throw std::invalid_argument("need at least one hash function");
        if (num_planes < 2) throw std::invalid_argument("need at least two planes");
        if (!(b_tol > 0.0)) throw std::invalid_argument("height tolerance must be positive");
        if (sample_rank <= k) throw std::invalid_argument("sample rank must exceed k");
    }
};

/// Named CSV payloads produced by one experiment run.
struct ExperimentOutput {
    std::vector<std::pair<std::string, std::string>> files;
};

namespace streams {
inline constexpr std::uint64_t queries = 1;
inline constexpr std::uint64_t functions = 2;
inline constexpr std::uint64_t sampling = 3;
inline constexpr std::uint64_t planes = 4;
inline constexpr std::uint64_t coordinates = 5;
}  // namespace streams

/// Recall and distance computations per tree count, both query modes on
/// identical trees. Per tree-count forests share tree prefixes because
/// each tree derives its stream from the same base seed.
inline ExperimentOutput run_recall_experiment(const ExperimentConfig& cfg, const DataMatrix& data) {
    cfg.validate(data.size());
    SplitRng root(cfg.seed);
    SplitRng query_rng = root.split(streams::queries);
    const QuerySplit split = draw_and_exclude_queries(data, cfg.num_queries, query_rng);
    const GroundTruth gt = brute_force_knn(split.data, split.queries, cfg.k);

    CsvWriter csv;
    csv.header("tree_count", "mode", "mean_recall", "mean_distance_computations");

    for (std::uint32_t num_trees : cfg.tree_counts) {
        const std::uint32_t warmup = std::min(cfg.warmup_trees, num_trees);
        const Forest forest = Forest::build(split.data, num_trees, cfg.leaf_capacity, cfg.seed);

        struct PerQuery {
            double recall_rp = 0.0, recall_mq = 0.0;
            std::uint64_t comps_rp = 0, comps_mq = 0;
        };
        std::vector<PerQuery> rows(split.queries.size());
        const bool want_rp = cfg.mode != BenchMode::mq;
        const bool want_mq = cfg.mode != BenchMode::rp;
        parallel_for(split.queries.size(), [&](std::size_t qi) {
            const UnitVector q = split.queries.row_unit(static_cast<std::uint32_t>(qi));
            if (want_rp) {
                const QueryResult res = forest.query_rp(q, cfg.k);
                rows[qi].recall_rp = recall(res.neighbours, gt.entries[qi], cfg.k);
                rows[qi].comps_rp = res.distance_computations;
            }
            if (want_mq) {
                const QueryResult res = forest.query_mq(q, cfg.k, warmup);
                rows[qi].recall_mq = recall(res.neighbours, gt.entries[qi], cfg.k);
                rows[qi].comps_mq = res.distance_computations;
            }
        });

        const double n = static_cast<double>(rows.size());
        auto emit = [&](const char* mode, auto recall_of, auto comps_of) {
            double recall_sum = 0.0, comps_sum = 0.0;
            for (const PerQuery& r : rows) {
                recall_sum += recall_of(r);
                comps_sum += static_cast<double>(comps_of(r));
            }
            csv.row(num_trees, mode, recall_sum / n, comps_sum / n);
        };
        if (want_rp)
            emit("rp", [](const PerQuery& r) { return r.recall_rp; },
                 [](const PerQuery& r) { return r.comps_rp; });
        if (want_mq)
            emit("mq", [](const PerQuery& r) { return r.recall_mq; },
                 [](const PerQuery& r) { return r.comps_mq; });
    }

    return {{{"recall.csv", csv.str()}}};
}

/// Per-(hash function, query) fraction of the k nearest neighbours whose
/// hash bit matches the input's bit, for the raw query and the normalised
/// neighbourhood centroid on an identical function set. Offsets are drawn
/// against the projections of the whole dataset.
inline ExperimentOutput run_hash_failure_experiment(const ExperimentConfig& cfg,
                                                    const DataMatrix& data) {
    cfg.validate(data.size());
    SplitRng root(cfg.seed);
    SplitRng query_rng = root.split(streams::queries);
    const QuerySplit split = draw_and_exclude_queries(data, cfg.num_queries, query_rng);
    const GroundTruth gt = brute_force_knn(split.data, split.queries, cfg.k);

    const std::size_t nq = split.queries.size();
    std::vector<Vector> query_vecs(nq);
    std::vector<Vector> centroid_vecs(nq);
    std::vector<std::vector<std::uint32_t>> knn_ids(nq);
    for (std::size_t qi = 0; qi < nq; ++qi) {
        query_vecs[qi] = split.queries.row_vector(static_cast<std::uint32_t>(qi));
        knn_ids[qi].reserve(cfg.k);
        for (const auto& [id, dist] : gt.entries[qi]) knn_ids[qi].push_back(id);
        centroid_vecs[qi] = normalized_centroid(split.data, knn_ids[qi]).coords();
    }

    struct Cell {
        double recall_q = 0.0;
        double recall_c = 0.0;
    };
    std::vector<Cell> cells(cfg.num_functions * nq);
    const SplitRng function_root = root.split(streams::functions);
    parallel_for(cfg.num_functions, [&](std::size_t f) {
        SplitRng rng = function_root.split(f);
        const Vector w = sample_hyperplane(split.data.dim(), rng);
        std::vector<double> proj(split.data.size());
        double lo = 0.0, hi = 0.0;
        for (std::uint32_t i = 0; i < split.data.size(); ++i) {
            proj[i] = dot(split.data.row(i), std::span<const double>(w));
            if (i == 0) {
                lo = hi = proj[0];
            } else {
                lo = std::min(lo, proj[i]);
                hi = std::max(hi, proj[i]);
            }
        }
        const double a = rng.uniform(lo, hi);
        for (std::size_t qi = 0; qi < nq; ++qi) {
            const bool bit_q = dot(w, query_vecs[qi]) > a;
            const bool bit_c = dot(w, centroid_vecs[qi]) > a;
            std::uint32_t match_q = 0, match_c = 0;
            for (std::uint32_t id : knn_ids[qi]) {
                const bool bit = proj[id] > a;
                match_q += bit == bit_q;
                match_c += bit == bit_c;
            }
            Cell& cell = cells[f * nq + qi];
            cell.recall_q = static_cast<double>(match_q) / cfg.k;
            cell.recall_c = static_cast<double>(match_c) / cfg.k;
        }
    });

    CsvWriter csv;
    csv.header("function_index", "query_index", "recall_q", "recall_c");
    for (std::size_t f = 0; f < cfg.num_functions; ++f)
        for (std::size_t qi = 0; qi < nq; ++qi) {
            const Cell& cell = cells[f * nq + qi];
            csv.row(f, qi, cell.recall_q, cell.recall_c);
        }
    return {{{"hash_failure.csv", csv.str()}}};
}

/// Mean estimate-quality ratio when the centroid is estimated from k
/// points sampled uniformly out of the m nearest neighbours, per m.
inline ExperimentOutput run_kappa_experiment(const ExperimentConfig& cfg, const DataMatrix& data) {
    cfg.validate(data.size());
    if (cfg.m_values.empty()) throw std::invalid_argument("need at least one m value");
    for (std::uint32_t m : cfg.m_values)
        if (m < cfg.k) throw std::invalid_argument("m must be at least k");
    const std::uint32_t m_max = *std::max_element(cfg.m_values.begin(), cfg.m_values.end());
    if (m_max > data.size() - cfg.num_queries)
        throw std::invalid_argument("m exceeds the indexable dataset size");

    SplitRng root(cfg.seed);
    SplitRng query_rng = root.split(streams::queries);
    const QuerySplit split = draw_and_exclude_queries(data, cfg.num_queries, query_rng);
    const GroundTruth gt = brute_force_knn(split.data, split.queries, m_max);

    const std::size_t nq = split.queries.size();
    const SplitRng sample_root = root.split(streams::sampling);
    Matrix kappa_by_query(nq, cfg.m_values.size());
    parallel_for(nq, [&](std::size_t qi) {
        const UnitVector q = split.queries.row_unit(static_cast<std::uint32_t>(qi));
        const auto& neigh = gt.entries[qi];
        std::vector<std::uint32_t> knn(cfg.k);
        for (std::uint32_t i = 0; i < cfg.k; ++i) knn[i] = neigh[i].first;
        const UnitVector c_norm = normalized_centroid(split.data, knn);

        std::vector<std::uint32_t> ranks(m_max);
        std::vector<std::uint32_t> sampled(cfg.k);
        for (std::size_t mi = 0; mi < cfg.m_values.size(); ++mi) {
            const std::uint32_t m = cfg.m_values[mi];
            SplitRng rng = sample_root.split(qi * 1024 + mi);
            std::iota(ranks.begin(), ranks.begin() + m, 0);
            for (std::uint32_t i = 0; i < cfg.k; ++i) {
                const std::size_t j = i + detail::bounded_u64(rng, m - i);
                std::swap(ranks[i], ranks[j]);
                sampled[i] = neigh[ranks[i]].first;
            }
            const UnitVector c_hat = normalized_centroid(split.data, sampled);
            kappa_by_query.at(qi, mi) = kappa(q, c_norm, c_hat);
        }
    });

    CsvWriter csv;
    csv.header("m", "mean_kappa");
    for (std::size_t mi = 0; mi < cfg.m_values.size(); ++mi) {
        double sum = 0.0;
        for (std::size_t qi = 0; qi < nq; ++qi) sum += kappa_by_query.at(qi, mi);
        csv.row(cfg.m_values[mi], sum / static_cast<double>(nq));
    }
    return {{{"kappa.csv", csv.str()}}};
}

/// Mean candidate-queue insertions per tree index over the baseline mode.
inline ExperimentOutput run_delta_knn_experiment(const ExperimentConfig& cfg,
                                                 const DataMatrix& data) {
    cfg.validate(data.size());
    SplitRng root(cfg.seed);
    SplitRng query_rng = root.split(streams::queries);
    const QuerySplit split = draw_and_exclude_queries(data, cfg.num_queries, query_rng);
    const Forest forest = Forest::build(split.data, cfg.delta_trees, cfg.leaf_capacity, cfg.seed);

    Matrix insertions(split.queries.size(), cfg.delta_trees);
    parallel_for(split.queries.size(), [&](std::size_t qi) {
        const UnitVector q = split.queries.row_unit(static_cast<std::uint32_t>(qi));
        const QueryResult res = forest.query_rp(q, cfg.k);
        for (std::uint32_t t = 0; t < cfg.delta_trees; ++t)
            insertions.at(qi, t) = res.per_tree_delta_knn[t];
    });

    CsvWriter csv;
    csv.header("tree_index", "mean_insertions");
    for (std::uint32_t t = 0; t < cfg.delta_trees; ++t) {
        double sum = 0.0;
        for (std::size_t qi = 0; qi < split.queries.size(); ++qi) sum += insertions.at(qi, t);
        csv.row(t + 1, sum / static_cast<double>(split.queries.size()));
    }
    return {{{"delta_knn.csv", csv.str()}}};
}

/// Off-diagonal covariance of neighbour heights over near-zero-height
/// planes, aggregated over queries for the raw query and the normalised
/// neighbourhood centroid: a histogram per input and a summary of means.
inline ExperimentOutput run_covariance_experiment(const ExperimentConfig& cfg,
                                                  const DataMatrix& data) {
    cfg.validate(data.size());
    SplitRng root(cfg.seed);
    SplitRng query_rng = root.split(streams::queries);
    const QuerySplit split = draw_and_exclude_queries(data, cfg.num_queries, query_rng);
    const GroundTruth gt = brute_force_knn(split.data, split.queries, cfg.k);

    const std::size_t nq = split.queries.size();
    struct PerQuery {
        double sum_q = 0.0, sum_c = 0.0;
        std::size_t count = 0;
        std::vector<std::uint32_t> hist_q, hist_c;
    };
    constexpr std::size_t kBins = 80;  // [-1, 1] in steps of 0.025
    auto bin_of = [](double v) {
        const double clamped = std::min(1.0, std::max(-1.0, v));
        return std::min<std::size_t>(kBins - 1,
                                     static_cast<std::size_t>((clamped + 1.0) / 2.0 * kBins));
    };

    std::vector<PerQuery> rows(nq);
    const SplitRng plane_root = root.split(streams::planes);
    parallel_for(nq, [&](std::size_t qi) {
        std::vector<std::uint32_t> knn(cfg.k);
        for (std::uint32_t i = 0; i < cfg.k; ++i) knn[i] = gt.entries[qi][i].first;
        const std::vector<UnitVector> neighbours = split.data.gather_units(knn);
        const UnitVector q = split.queries.row_unit(static_cast<std::uint32_t>(qi));
        const UnitVector c_norm = normalized_centroid(split.data, knn);

        PerQuery& row = rows[qi];
        row.hist_q.assign(kBins, 0);
        row.hist_c.assign(kBins, 0);
        SplitRng rng_q = plane_root.split(2 * qi);
        SplitRng rng_c = plane_root.split(2 * qi + 1);
        const HashCovariance cov_q =
            empirical_hash_covariance(neighbours, q, cfg.num_planes, cfg.b_tol, rng_q);
        const HashCovariance cov_c =
            empirical_hash_covariance(neighbours, c_norm, cfg.num_planes, cfg.b_tol, rng_c);
        row.count = cov_q.offdiag_values.size();
        for (double v : cov_q.offdiag_values) {
            row.sum_q += v;
            ++row.hist_q[bin_of(v)];
        }
        for (double v : cov_c.offdiag_values) {
            row.sum_c += v;
            ++row.hist_c[bin_of(v)];
        }
    });

    double sum_q = 0.0, sum_c = 0.0;
    std::size_t count = 0;
    std::vector<std::uint64_t> hist_q(kBins, 0), hist_c(kBins, 0);
    for (const PerQuery& row : rows) {
        sum_q += row.sum_q;
        sum_c += row.sum_c;
        count += row.count;
        for (std::size_t b = 0; b < kBins; ++b) {
            hist_q[b] += row.hist_q[b];
            hist_c[b] += row.hist_c[b];
        }
    }

    CsvWriter hist;
    hist.header("input", "bin_lo", "bin_hi", "count");
    for (std::size_t b = 0; b < kBins; ++b)
        hist.row("q", -1.0 + 2.0 * b / kBins, -1.0 + 2.0 * (b + 1) / kBins, hist_q[b]);
    for (std::size_t b = 0; b < kBins; ++b)
        hist.row("centroid", -1.0 + 2.0 * b / kBins, -1.0 + 2.0 * (b + 1) / kBins, hist_c[b]);

    CsvWriter summary;
    summary.header("input", "mean_offdiag_covariance", "num_values");
    summary.row("q", sum_q / static_cast<double>(count), count);
    summary.row("centroid", sum_c / static_cast<double>(count), count);

    return {{{"covariance_histogram.csv", hist.str()}, {"covariance_summary.csv", summary.str()}}};
}

/// Coordinate-level centroid-estimator verification; emits the per-query
/// coordinate samples and a summary with the variance comparison, the
/// ratio-scaling KS test and the violation count.
inline ExperimentOutput run_clt_experiment(const ExperimentConfig& cfg, const DataMatrix& data) {
    cfg.validate(data.size());
    SplitRng root(cfg.seed);
    SplitRng query_rng = root.split(streams::queries);
    const QuerySplit split = draw_and_exclude_queries(data, cfg.num_queries, query_rng);

    SplitRng coord_rng = root.split(streams::coordinates);
    const CltReport report =
        clt_coordinate_experiment(split.data, split.queries, cfg.k, cfg.sample_rank, coord_rng);

    CsvWriter coords;
    coords.header("query_index", "c_minus_q", "chat_minus_q", "chat_minus_c", "scaled_c_minus_q");
    for (std::size_t qi = 0; qi < report.c_minus_mu.size(); ++qi)
        coords.row(qi, report.c_minus_mu[qi], report.chat_minus_mu[qi], report.chat_minus_c[qi],
                   report.scaled_c_minus_mu[qi]);

    CsvWriter summary;
    summary.header("var_c_minus_q", "var_chat_minus_c", "ks_statistic", "ks_p_value", "violations",
                   "num_queries");
    summary.row(report.var_c_minus_mu, report.var_chat_minus_c, report.ratio_scaling.statistic,
                report.ratio_scaling.p_value, report.violations, report.c_minus_mu.size());

    return {{{"clt_coordinates.csv", coords.str()}, {"clt_summary.csv", summary.str()}}};
}

}  // namespace mqf
