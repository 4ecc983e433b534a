#pragma once

#include <algorithm>
#include <cstdint>
#include <istream>
#include <memory>
#include <span>
#include <stdexcept>
#include <vector>

#include "mqf/core.hpp"
#include "mqf/hashing.hpp"
#include "mqf/rng.hpp"

namespace mqf {

/// Node of a recursive hyperplane partition. Internal nodes hold the split
/// (w, a) and route points by the predicate w . x > a (left when true);
/// leaves hold dataset ids only, so no vector is ever duplicated.
struct RPTreeNode {
    HyperplaneHash split;
    std::unique_ptr<RPTreeNode> left;
    std::unique_ptr<RPTreeNode> right;
    std::vector<std::uint32_t> ids;

    bool is_leaf() const { return left == nullptr; }
};

/// A single random-projection tree: any node holding more than
/// `leaf_capacity` points is subdivided by a fresh random hyperplane whose
/// offset is drawn uniformly between the extreme projections of the node's
/// own points. Duplicated or projection-degenerate point sets stop
/// splitting after a bounded number of re-draws and stay as an oversized
/// ("stuck") leaf, which guarantees termination.
class RPTree {
public:
    static RPTree build(const DataMatrix& data, std::vector<std::uint32_t> ids,
                        std::uint32_t leaf_capacity, SplitRng rng) {
        if (ids.empty()) throw std::invalid_argument("cannot build a tree over zero points");
        if (leaf_capacity < 1) throw std::invalid_argument("leaf capacity must be >= 1");
        RPTree tree;
        tree.dim_ = data.dim();
        tree.leaf_capacity_ = leaf_capacity;
        tree.root_ = build_node(data, std::span<std::uint32_t>(ids), leaf_capacity, rng);
        return tree;
    }

    /// Rebuild a tree from its pre-order node stream (tag byte 0 = internal
    /// followed by d plane coordinates and the offset as 64-bit floats,
    /// 1 = leaf followed by a count and 32-bit ids).
    static RPTree from_stream(std::istream& in, std::size_t dim, std::uint32_t leaf_capacity) {
        RPTree tree;
        tree.dim_ = dim;
        tree.leaf_capacity_ = leaf_capacity;
        tree.root_ = read_node(in, dim);
        if (!in) throw std::runtime_error("truncated tree stream");
        return tree;
    }

    /// Ids of the single leaf the vector routes to. Routing recomputes each
    /// split predicate with the exact arithmetic used at build time, so
    /// every dataset point reaches the leaf that contains it.
    const std::vector<std::uint32_t>& route_to_leaf(std::span<const double> v) const {
        check_same_dim(v.size(), dim_);
        const RPTreeNode* node = root_.get();
        while (!node->is_leaf()) node = hash_bit(node->split, v) ? node->left.get() : node->right.get();
        return node->ids;
    }

    template <typename Fn>
    void visit_leaves(Fn&& fn) const {
        visit(root_.get(), fn);
    }

    template <typename Fn>
    void visit_nodes(Fn&& fn) const {
        visit_all(root_.get(), fn);
    }

    std::uint32_t leaf_capacity() const { return leaf_capacity_; }
    std::size_t dim() const { return dim_; }
    const RPTreeNode& root() const { return *root_; }

private:
    static constexpr int kMaxPlaneRedraws = 3;
    static constexpr int kMaxOffsetRedraws = 64;

    static std::unique_ptr<RPTreeNode> build_node(const DataMatrix& data,
                                                  std::span<std::uint32_t> ids,
                                                  std::uint32_t leaf_capacity, SplitRng& rng) {
        auto node = std::make_unique<RPTreeNode>();
        if (ids.size() <= leaf_capacity) {
            node->ids.assign(ids.begin(), ids.end());
            return node;
        }

        for (int attempt = 0; attempt < kMaxPlaneRedraws; ++attempt) {
            HyperplaneHash split;
            split.w = sample_hyperplane(data.dim(), rng);

            std::vector<double> proj(ids.size());
            double lo = 0.0, hi = 0.0;
            for (std::size_t i = 0; i < ids.size(); ++i) {
                proj[i] = dot(data.row(ids[i]), std::span<const double>(split.w));
                if (i == 0) {
                    lo = hi = proj[0];
                } else {
                    lo = std::min(lo, proj[i]);
                    hi = std::max(hi, proj[i]);
                }
            }
            if (!(hi > lo)) continue;  // all projections identical, redraw w

            // Offsets exactly at an endpoint would leave a child empty.
            double a = lo;
            bool interior = false;
            for (int draw = 0; draw < kMaxOffsetRedraws; ++draw) {
                a = rng.uniform(lo, hi);
                if (a > lo && a < hi) {
                    interior = true;
                    break;
                }
            }
            if (!interior) continue;
            split.a = a;

            // Stable two-pass partition: left = {x : w . x > a}.
            std::vector<std::uint32_t> left_ids, right_ids;
            left_ids.reserve(ids.size());
            right_ids.reserve(ids.size());
            for (std::size_t i = 0; i < ids.size(); ++i)
                (proj[i] > a ? left_ids : right_ids).push_back(ids[i]);
            proj.clear();
            proj.shrink_to_fit();

            std::copy(left_ids.begin(), left_ids.end(), ids.begin());
            std::copy(right_ids.begin(), right_ids.end(), ids.begin() + left_ids.size());
            const std::size_t boundary = left_ids.size();
            left_ids = {};
            right_ids = {};

            node->split = std::move(split);
            node->left = build_node(data, ids.first(boundary), leaf_capacity, rng);
            node->right = build_node(data, ids.subspan(boundary), leaf_capacity, rng);
            return node;
        }

        // Stuck: accept an oversized leaf.
        node->ids.assign(ids.begin(), ids.end());
        return node;
    }

    static std::unique_ptr<RPTreeNode> read_node(std::istream& in, std::size_t dim) {
        auto node = std::make_unique<RPTreeNode>();
        const int tag = in.get();
        if (tag == 1) {
            std::uint32_t count = 0;
            in.read(reinterpret_cast<char*>(&count), sizeof count);
            node->ids.resize(count);
            in.read(reinterpret_cast<char*>(node->ids.data()),
                    static_cast<std::streamsize>(count) * sizeof(std::uint32_t));
            return node;
        }
        if (tag != 0) throw std::runtime_error("corrupt tree stream (bad node tag)");
        node->split.w.resize(dim);
        in.read(reinterpret_cast<char*>(node->split.w.data()),
                static_cast<std::streamsize>(dim) * sizeof(double));
        in.read(reinterpret_cast<char*>(&node->split.a), sizeof(double));
        if (!in) throw std::runtime_error("truncated tree stream");
        node->left = read_node(in, dim);
        node->right = read_node(in, dim);
        return node;
    }

    template <typename Fn>
    static void visit(const RPTreeNode* node, Fn& fn) {
        if (node->is_leaf()) {
            fn(node->ids);
            return;
        }
        visit(node->left.get(), fn);
        visit(node->right.get(), fn);
    }

    template <typename Fn>
    static void visit_all(const RPTreeNode* node, Fn& fn) {
        fn(*node);
        if (!node->is_leaf()) {
            visit_all(node->left.get(), fn);
            visit_all(node->right.get(), fn);
        }
    }

    std::unique_ptr<RPTreeNode> root_;
    std::uint32_t leaf_capacity_ = 0;
    std::size_t dim_ = 0;
};

}  // namespace mqf
