#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "mqf/core.hpp"
#include "mqf/parallel.hpp"
#include "mqf/rng.hpp"

namespace mqf {

/// Desk-scale generator defaults. The clustered values are calibrated so
/// query neighbourhoods match the tightness of typical embedding datasets
/// (mean query-to-normalised-centroid distance around 0.3).
inline constexpr std::size_t kDefaultUniformDim = 200;
inline constexpr std::size_t kDefaultClusteredDim = 64;
inline constexpr std::size_t kDefaultClusters = 20;
inline constexpr double kDefaultSpread = 0.05;

namespace detail {

inline std::uint64_t bounded_u64(SplitRng& rng, std::uint64_t bound) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(rng.next_u64()) * bound) >> 64);
}

inline Vector gaussian_unit(std::size_t dim, SplitRng& rng) {
    Vector v(dim);
    for (;;) {
        for (double& x : v) x = rng.gaussian();
        const double n = norm(v);
        if (n > 0.0) {
            for (double& x : v) x /= n;
            return v;
        }
    }
}

}  // namespace detail

/// n points uniform on the unit sphere S^{d-1}: normalised standard
/// Gaussian draws, which are rotation invariant.
inline DataMatrix gen_uniform_sphere(std::size_t n, std::size_t d, std::uint64_t seed) {
    if (n < 1) throw std::invalid_argument("need at least one point");
    if (d < 2) throw std::invalid_argument("dimension must be >= 2");
    DataMatrix data(d);
    data.reserve(n);
    const SplitRng root(seed);
    for (std::size_t i = 0; i < n; ++i) {
        SplitRng row_rng = root.split(i + 1);
        data.add_row(detail::gaussian_unit(d, row_rng));
    }
    return data;
}

struct ClusteredDataset {
    DataMatrix points;
    std::vector<std::uint32_t> labels;  // cluster assignment per row
};

/// Points normalise(center_j + spread * gaussian) around `num_clusters`
/// centers drawn uniformly on the sphere; row i belongs to cluster
/// i mod num_clusters.
inline ClusteredDataset gen_clustered_sphere(std::size_t n, std::size_t d,
                                             std::size_t num_clusters, double spread,
                                             std::uint64_t seed) {
    if (n < 1) throw std::invalid_argument("need at least one point");
    if (d < 2) throw std::invalid_argument("dimension must be >= 2");
    if (num_clusters < 1) throw std::invalid_argument("need at least one cluster");
    if (!(spread > 0.0)) throw std::invalid_argument("spread must be positive");

    const SplitRng root(seed);
    SplitRng center_rng = root.split(0);
    std::vector<Vector> centers;
    centers.reserve(num_clusters);
    for (std::size_t j = 0; j < num_clusters; ++j)
        centers.push_back(detail::gaussian_unit(d, center_rng));

    ClusteredDataset out{DataMatrix(d), {}};
    out.points.reserve(n);
    out.labels.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint32_t label = static_cast<std::uint32_t>(i % num_clusters);
        SplitRng row_rng = root.split(i + 1);
        Vector v(d);
        for (;;) {
            for (std::size_t c = 0; c < d; ++c)
                v[c] = centers[label][c] + spread * row_rng.gaussian();
            const double nrm = norm(v);
            if (nrm > 0.0) {
                for (double& x : v) x /= nrm;
                break;
            }
        }
        out.points.add_row(v);
        out.labels.push_back(label);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Vector files: per record a little-endian int32 dimension followed by that
// many little-endian float32 coordinates (the conventional fvecs layout).
// ---------------------------------------------------------------------------

inline void save_vectors(const DataMatrix& data, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    const std::int32_t dim = static_cast<std::int32_t>(data.dim());
    for (std::uint32_t i = 0; i < data.size(); ++i) {
        out.write(reinterpret_cast<const char*>(&dim), sizeof dim);
        const auto row = data.row(i);
        out.write(reinterpret_cast<const char*>(row.data()),
                  static_cast<std::streamsize>(row.size() * sizeof(float)));
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

inline DataMatrix load_vectors(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path);

    std::size_t offset = 0;
    std::size_t record = 0;
    std::int32_t dim = 0;
    DataMatrix data(2);
    std::vector<float> row;
    Vector promoted;

    for (;;) {
        std::int32_t rec_dim = 0;
        in.read(reinterpret_cast<char*>(&rec_dim), sizeof rec_dim);
        if (in.gcount() == 0 && in.eof()) break;
        if (in.gcount() != sizeof rec_dim)
            throw std::runtime_error("truncated vector file at byte " + std::to_string(offset) +
                                     ": " + path);
        offset += sizeof rec_dim;
        if (rec_dim < 2)
            throw std::runtime_error("invalid dimension " + std::to_string(rec_dim) +
                                     " at record " + std::to_string(record) + ": " + path);
        if (record == 0) {
            dim = rec_dim;
            data = DataMatrix(static_cast<std::size_t>(dim));
            row.resize(static_cast<std::size_t>(dim));
            promoted.resize(static_cast<std::size_t>(dim));
        } else if (rec_dim != dim) {
            throw std::runtime_error("inconsistent dimension at record " + std::to_string(record) +
                                     " (byte " + std::to_string(offset - sizeof rec_dim) +
                                     "): " + path);
        }
        const std::streamsize payload = static_cast<std::streamsize>(row.size() * sizeof(float));
        in.read(reinterpret_cast<char*>(row.data()), payload);
        if (in.gcount() != payload)
            throw std::runtime_error("truncated vector file at byte " +
                                     std::to_string(offset + static_cast<std::size_t>(in.gcount())) +
                                     ": " + path);
        offset += static_cast<std::size_t>(payload);
        for (std::size_t i = 0; i < row.size(); ++i) promoted[i] = static_cast<double>(row[i]);
        data.add_row(promoted);
        ++record;
    }
    if (record == 0) throw std::runtime_error("empty vector file: " + path);
    return data;
}

// ---------------------------------------------------------------------------
// Exact nearest neighbours.
// ---------------------------------------------------------------------------

/// Exact k-nearest-neighbour lists, one per query, ascending by distance
/// with ties broken by ascending id.
struct GroundTruth {
    std::uint32_t k = 0;
    std::vector<std::vector<std::pair<std::uint32_t, double>>> entries;
};

inline GroundTruth brute_force_knn(const DataMatrix& data, const DataMatrix& queries,
                                   std::uint32_t k) {
    if (k < 1) throw std::invalid_argument("k must be >= 1");
    if (k > data.size()) throw std::invalid_argument("k exceeds dataset size");
    check_same_dim(data.dim(), queries.dim());

    GroundTruth gt;
    gt.k = k;
    gt.entries.resize(queries.size());
    parallel_for(queries.size(), [&](std::size_t qi) {
        const Vector q = queries.row_vector(static_cast<std::uint32_t>(qi));
        // Bounded worst-on-top heap over (distance, id).
        auto worse = [](const std::pair<double, std::uint32_t>& a,
                        const std::pair<double, std::uint32_t>& b) { return a < b; };
        std::vector<std::pair<double, std::uint32_t>> heap;
        heap.reserve(k);
        for (std::uint32_t id = 0; id < data.size(); ++id) {
            const double dist = euclidean_distance(q, data.row(id));
            if (heap.size() < k) {
                heap.emplace_back(dist, id);
                std::push_heap(heap.begin(), heap.end(), worse);
            } else if (std::make_pair(dist, id) < heap.front()) {
                std::pop_heap(heap.begin(), heap.end(), worse);
                heap.back() = {dist, id};
                std::push_heap(heap.begin(), heap.end(), worse);
            }
        }
        std::sort(heap.begin(), heap.end());
        auto& out = gt.entries[qi];
        out.reserve(k);
        for (const auto& [dist, id] : heap) out.emplace_back(id, dist);
    });
    return gt;
}

/// Fraction of the true k nearest neighbours present in `result`.
inline double recall(std::span<const std::pair<std::uint32_t, double>> result,
                     const std::vector<std::pair<std::uint32_t, double>>& truth,
                     std::uint32_t k) {
    if (k < 1 || k > truth.size()) throw std::invalid_argument("invalid recall depth");
    std::unordered_set<std::uint32_t> got;
    got.reserve(result.size());
    for (const auto& [id, dist] : result) got.insert(id);
    std::size_t hits = 0;
    for (std::uint32_t i = 0; i < k; ++i) hits += got.count(truth[i].first);
    return static_cast<double>(hits) / static_cast<double>(k);
}

/// Ground truth persists as two files with identical record framing:
/// ids as int32 records, distances as float32 records.
inline void save_ground_truth(const GroundTruth& gt, const std::string& ids_path,
                              const std::string& dists_path) {
    std::ofstream ids(ids_path, std::ios::binary);
    std::ofstream dists(dists_path, std::ios::binary);
    if (!ids) throw std::runtime_error("cannot open for writing: " + ids_path);
    if (!dists) throw std::runtime_error("cannot open for writing: " + dists_path);
    const std::int32_t k = static_cast<std::int32_t>(gt.k);
    for (const auto& entry : gt.entries) {
        ids.write(reinterpret_cast<const char*>(&k), sizeof k);
        dists.write(reinterpret_cast<const char*>(&k), sizeof k);
        for (const auto& [id, dist] : entry) {
            const std::int32_t id32 = static_cast<std::int32_t>(id);
            const float d32 = static_cast<float>(dist);
            ids.write(reinterpret_cast<const char*>(&id32), sizeof id32);
            dists.write(reinterpret_cast<const char*>(&d32), sizeof d32);
        }
    }
    if (!ids || !dists) throw std::runtime_error("ground truth write failed");
}

inline GroundTruth load_ground_truth(const std::string& ids_path, const std::string& dists_path) {
    std::ifstream ids(ids_path, std::ios::binary);
    std::ifstream dists(dists_path, std::ios::binary);
    if (!ids) throw std::runtime_error("cannot open: " + ids_path);
    if (!dists) throw std::runtime_error("cannot open: " + dists_path);

    GroundTruth gt;
    for (;;) {
        std::int32_t k_ids = 0, k_dists = 0;
        ids.read(reinterpret_cast<char*>(&k_ids), sizeof k_ids);
        if (ids.gcount() == 0 && ids.eof()) break;
        dists.read(reinterpret_cast<char*>(&k_dists), sizeof k_dists);
        if (ids.gcount() != sizeof k_ids || dists.gcount() != sizeof k_dists || k_ids != k_dists ||
            k_ids < 1)
            throw std::runtime_error("corrupt ground truth files");
        if (gt.k == 0) gt.k = static_cast<std::uint32_t>(k_ids);
        if (gt.k != static_cast<std::uint32_t>(k_ids))
            throw std::runtime_error("inconsistent ground truth record length");
        std::vector<std::pair<std::uint32_t, double>> entry;
        entry.reserve(gt.k);
        for (std::uint32_t i = 0; i < gt.k; ++i) {
            std::int32_t id = 0;
            float dist = 0;
            ids.read(reinterpret_cast<char*>(&id), sizeof id);
            dists.read(reinterpret_cast<char*>(&dist), sizeof dist);
            if (!ids || !dists) throw std::runtime_error("truncated ground truth files");
            entry.emplace_back(static_cast<std::uint32_t>(id), static_cast<double>(dist));
        }
        gt.entries.push_back(std::move(entry));
    }
    if (gt.entries.empty()) throw std::runtime_error("empty ground truth file: " + ids_path);
    return gt;
}

/// Draw `num_queries` rows as queries (without replacement) and exclude
/// them from the returned dataset. Remaining rows are re-indexed densely
/// in their original order; `query_source_ids` maps back to source rows.
struct QuerySplit {
    DataMatrix data;
    DataMatrix queries;
    std::vector<std::uint32_t> query_source_ids;
};

inline QuerySplit draw_and_exclude_queries(const DataMatrix& src, std::size_t num_queries,
                                           SplitRng& rng) {
    if (num_queries < 1 || num_queries >= src.size())
        throw std::invalid_argument("query count must lie in [1, N)");

    std::vector<std::uint32_t> ids(src.size());
    std::iota(ids.begin(), ids.end(), 0);
    for (std::size_t i = 0; i < num_queries; ++i) {
        const std::size_t j = i + detail::bounded_u64(rng, src.size() - i);
        std::swap(ids[i], ids[j]);
    }

    QuerySplit split{DataMatrix(src.dim()), DataMatrix(src.dim()), {}};
    split.query_source_ids.assign(ids.begin(), ids.begin() + num_queries);
    std::vector<std::uint8_t> is_query(src.size(), 0);
    for (std::uint32_t id : split.query_source_ids) is_query[id] = 1;

    split.queries.reserve(num_queries);
    Vector buffer(src.dim());
    auto promote = [&](std::uint32_t id) -> const Vector& {
        const auto row = src.row(id);
        for (std::size_t i = 0; i < buffer.size(); ++i) buffer[i] = static_cast<double>(row[i]);
        return buffer;
    };
    for (std::uint32_t id : split.query_source_ids) split.queries.add_row(promote(id));
    split.data.reserve(src.size() - num_queries);
    for (std::uint32_t id = 0; id < src.size(); ++id)
        if (!is_query[id]) split.data.add_row(promote(id));
    return split;
}

}  // namespace mqf
