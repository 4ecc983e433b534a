#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mqf/candidate_set.hpp"
#include "mqf/core.hpp"
#include "mqf/parallel.hpp"
#include "mqf/rp_tree.hpp"

namespace mqf {

enum class QueryMode { rp, mq };

struct QueryResult {
    /// At most k (id, distance) pairs, ascending by distance then id.
    std::vector<std::pair<std::uint32_t, double>> neighbours;
    /// Re-rank distances for unique candidates plus running-sum vector ops.
    std::uint64_t distance_computations = 0;
    /// Candidate-queue insertions contributed by each tree, in search order.
    std::vector<std::uint32_t> per_tree_delta_knn;
    /// Unique candidates examined across all trees.
    std::uint64_t visited = 0;
};

/// Ensemble of independently built RP-Trees over one dataset. The same
/// forest serves both query modes:
///
///  - query_rp routes the query through every tree, deduplicates leaf ids
///    against a per-query seen set and re-ranks by true distance.
///  - query_mq routes the first `warmup_trees` trees with the query, then
///    switches the routing vector to the queue's normalised running-sum
///    centroid, recomputed after every tree. Re-ranking distances are
///    always measured to the original query.
///
/// Trees build in parallel on independent RNG streams derived per tree
/// index, so a forest is bit-identical for a given (data, seed) regardless
/// of thread count. Built forests are immutable; queries are independent
/// and may run concurrently.
class Forest {
public:
    static Forest build(const DataMatrix& data, std::uint32_t num_trees,
                        std::uint32_t leaf_capacity, std::uint64_t seed) {
        if (num_trees < 1) throw std::invalid_argument("need at least one tree");
        if (data.size() == 0) throw std::invalid_argument("empty dataset");
        Forest forest;
        forest.data_ = &data;
        forest.leaf_capacity_ = leaf_capacity;
        forest.seed_ = seed;
        forest.trees_.resize(num_trees);
        const SplitRng root_rng(seed);
        std::vector<std::uint32_t> all_ids(data.size());
        std::iota(all_ids.begin(), all_ids.end(), 0);
        parallel_for(num_trees, [&](std::size_t t) {
            forest.trees_[t] =
                RPTree::build(data, all_ids, leaf_capacity, root_rng.split(t));
        });
        return forest;
    }

    QueryResult query_rp(const UnitVector& q, std::uint32_t k) const {
        return run_query(q, k, QueryMode::rp, static_cast<std::uint32_t>(trees_.size()), nullptr);
    }

    /// `estimate_log`, when given, receives the routing estimate after each
    /// tree's merge (diagnostics only).
    QueryResult query_mq(const UnitVector& q, std::uint32_t k, std::uint32_t warmup_trees,
                         std::vector<Vector>* estimate_log = nullptr) const {
        if (warmup_trees < 1 || warmup_trees > trees_.size())
            throw std::invalid_argument("warm-up tree count must lie in [1, T]");
        return run_query(q, k, QueryMode::mq, warmup_trees, estimate_log);
    }

    std::size_t num_trees() const { return trees_.size(); }
    std::uint32_t leaf_capacity() const { return leaf_capacity_; }
    std::uint64_t seed() const { return seed_; }
    const DataMatrix& data() const { return *data_; }
    const RPTree& tree(std::size_t i) const { return trees_[i]; }

    void save(std::ostream& out) const {
        static_assert(std::endian::native == std::endian::little,
                      "serialisation assumes a little-endian host");
        out.write(kMagic, 4);
        write_u32(out, static_cast<std::uint32_t>(data_->dim()));
        write_u64(out, data_->size());
        write_u32(out, static_cast<std::uint32_t>(trees_.size()));
        write_u32(out, leaf_capacity_);
        write_u64(out, seed_);
        for (const RPTree& tree : trees_) save_node(out, tree.root());
        if (!out) throw std::runtime_error("forest write failed");
    }

    void save(const std::string& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw std::runtime_error("cannot open for writing: " + path);
        save(out);
    }

    std::string save_to_bytes() const {
        std::ostringstream out(std::ios::binary);
        save(out);
        return out.str();
    }

    static Forest load(std::istream& in, const DataMatrix& data) {
        char magic[4];
        in.read(magic, 4);
        if (!in || std::memcmp(magic, kMagic, 4) != 0)
            throw std::runtime_error("not a forest file (bad magic)");
        const std::uint32_t dim = read_u32(in);
        const std::uint64_t count = read_u64(in);
        const std::uint32_t num_trees = read_u32(in);
        const std::uint32_t leaf_capacity = read_u32(in);
        const std::uint64_t seed = read_u64(in);
        if (dim != data.dim() || count != data.size())
            throw std::runtime_error("forest does not match dataset shape");

        Forest forest;
        forest.data_ = &data;
        forest.leaf_capacity_ = leaf_capacity;
        forest.seed_ = seed;
        forest.trees_.reserve(num_trees);
        for (std::uint32_t t = 0; t < num_trees; ++t)
            forest.trees_.push_back(RPTree::from_stream(in, dim, leaf_capacity));
        if (!in) throw std::runtime_error("truncated forest file");
        return forest;
    }

    static Forest load(const std::string& path, const DataMatrix& data) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw std::runtime_error("cannot open: " + path);
        return load(in, data);
    }

private:
    static constexpr char kMagic[5] = "MQF1";

    QueryResult run_query(const UnitVector& q, std::uint32_t k, QueryMode mode,
                          std::uint32_t warmup_trees, std::vector<Vector>* estimate_log) const {
        check_same_dim(q.dim(), data_->dim());
        if (k < 1) throw std::invalid_argument("k must be >= 1");

        CandidateQueue queue(q, k);
        std::vector<std::uint8_t> seen(data_->size(), 0);
        std::vector<std::uint32_t> fresh;
        QueryResult result;
        result.per_tree_delta_knn.reserve(trees_.size());

        Vector routing(q.coords());
        for (std::size_t t = 0; t < trees_.size(); ++t) {
            const std::vector<std::uint32_t>& leaf = trees_[t].route_to_leaf(routing);
            fresh.clear();
            for (std::uint32_t id : leaf) {
                if (!seen[id]) {
                    seen[id] = 1;
                    fresh.push_back(id);
                }
            }
            result.visited += fresh.size();
            const MergeStats stats = queue.merge(fresh, *data_);
            result.per_tree_delta_knn.push_back(stats.inserted);

            if (mode == QueryMode::mq && t + 1 >= warmup_trees && !queue.empty())
                routing = queue.current_estimate().coords();
            if (estimate_log && !queue.empty())
                estimate_log->push_back(queue.current_estimate().coords());
        }

        result.neighbours = queue.top_k();
        result.distance_computations = result.visited + queue.ops_count();
        return result;
    }

    static void write_u32(std::ostream& out, std::uint32_t v) {
        out.write(reinterpret_cast<const char*>(&v), sizeof v);
    }
    static void write_u64(std::ostream& out, std::uint64_t v) {
        out.write(reinterpret_cast<const char*>(&v), sizeof v);
    }
    static void write_f64(std::ostream& out, double v) {
        out.write(reinterpret_cast<const char*>(&v), sizeof v);
    }
    static std::uint32_t read_u32(std::istream& in) {
        std::uint32_t v = 0;
        in.read(reinterpret_cast<char*>(&v), sizeof v);
        return v;
    }
    static std::uint64_t read_u64(std::istream& in) {
        std::uint64_t v = 0;
        in.read(reinterpret_cast<char*>(&v), sizeof v);
        return v;
    }
    static double read_f64(std::istream& in) {
        double v = 0;
        in.read(reinterpret_cast<char*>(&v), sizeof v);
        return v;
    }

    // Pre-order node stream: tag byte 0 = internal (d plane coordinates and
    // the offset as 64-bit floats), 1 = leaf (count then 32-bit ids).
    static void save_node(std::ostream& out, const RPTreeNode& node) {
        if (node.is_leaf()) {
            out.put(static_cast<char>(1));
            write_u32(out, static_cast<std::uint32_t>(node.ids.size()));
            for (std::uint32_t id : node.ids) write_u32(out, id);
            return;
        }
        out.put(static_cast<char>(0));
        for (double x : node.split.w) write_f64(out, x);
        write_f64(out, node.split.a);
        save_node(out, *node.left);
        save_node(out, *node.right);
    }

    const DataMatrix* data_ = nullptr;
    std::vector<RPTree> trees_;
    std::uint32_t leaf_capacity_ = 0;
    std::uint64_t seed_ = 0;
};

}  // namespace mqf
