#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <unordered_set>
#include <utility>
#include <vector>

#include "mqf/core.hpp"

namespace mqf {

struct MergeStats {
    std::uint32_t inserted = 0;
    std::uint32_t evicted = 0;
};

/// Capacity-k candidate queue with an incrementally maintained running sum
/// of its member vectors.
///
/// Priorities are always distances to the original query: the heap top is
/// the member furthest from it. Alongside the heap the queue keeps
/// s = sum of member vectors, updated with one vector addition per insert
/// and one subtraction per evict, so the normalised centroid of the
/// current members costs a single scalar division of s by its norm.
/// `ops_count` tallies those vector updates; the benchmark charges each as
/// one distance computation.
///
/// Query-local state: one queue per in-flight query, never shared.
class CandidateQueue {
public:
    CandidateQueue(UnitVector query, std::uint32_t capacity)
        : query_(std::move(query)), capacity_(capacity), sum_(query_.dim(), 0.0) {
        if (capacity == 0) throw std::invalid_argument("capacity must be >= 1");
    }

    /// Merge a batch of candidates not seen before (upstream deduplication
    /// is assumed; re-presenting a current member is an error). Keeps the
    /// k smallest-distance points among old members and the batch, exactly
    /// as a from-scratch rebuild over the same member set would.
    MergeStats merge(std::span<const std::uint32_t> ids, const DataMatrix& data) {
        check_same_dim(data.dim(), query_.dim());
        MergeStats stats;
        if (ids.empty()) return stats;

        std::vector<Entry> batch;
        batch.reserve(ids.size());
        for (std::uint32_t id : ids) {
            if (members_.count(id)) throw std::invalid_argument("duplicate candidate id");
            batch.push_back({euclidean_distance(query_.span(), data.row(id)), id});
        }
        std::sort(batch.begin(), batch.end(), AscendingByDistanceThenId{});
        for (std::size_t i = 1; i < batch.size(); ++i)
            if (batch[i].id == batch[i - 1].id) throw std::invalid_argument("duplicate candidate id");

        for (const Entry& cand : batch) {
            if (heap_.size() < capacity_) {
                push_member(cand, data);
                ++stats.inserted;
            } else if (heap_.front().distance > cand.distance) {
                // Strict comparison: an incumbent at equal distance stays.
                pop_worst(data);
                ++stats.evicted;
                push_member(cand, data);
                ++stats.inserted;
            } else {
                break;  // batch is sorted; nothing further can enter
            }
        }

        ops_count_ += stats.inserted + stats.evicted;
        if (++merge_count_ % kRebuildPeriod == 0) rebuild_sum(data);
        return stats;
    }

    /// Normalised centroid of the current members, s / ||s||.
    UnitVector current_estimate() const {
        if (heap_.empty()) throw std::invalid_argument("estimate of an empty queue");
        const double n = norm(sum_);
        if (!(n > 0.0)) throw std::invalid_argument("degenerate running sum");
        Vector scaled(sum_.size());
        for (std::size_t i = 0; i < sum_.size(); ++i) scaled[i] = sum_[i] / n;
        return UnitVector(std::move(scaled));
    }

    /// Members sorted by ascending distance to the query, ties by id.
    std::vector<std::pair<std::uint32_t, double>> top_k() const {
        std::vector<Entry> sorted(heap_);
        std::sort(sorted.begin(), sorted.end(), AscendingByDistanceThenId{});
        std::vector<std::pair<std::uint32_t, double>> out;
        out.reserve(sorted.size());
        for (const Entry& e : sorted) out.emplace_back(e.id, e.distance);
        return out;
    }

    const UnitVector& query() const { return query_; }
    const Vector& running_sum() const { return sum_; }
    std::uint64_t ops_count() const { return ops_count_; }
    std::uint32_t capacity() const { return capacity_; }
    std::size_t size() const { return heap_.size(); }
    bool empty() const { return heap_.empty(); }
    bool contains(std::uint32_t id) const { return members_.count(id) != 0; }

private:
    struct Entry {
        double distance;
        std::uint32_t id;
    };

    struct AscendingByDistanceThenId {
        bool operator()(const Entry& a, const Entry& b) const {
            if (a.distance != b.distance) return a.distance < b.distance;
            return a.id < b.id;
        }
    };

    // Heap comparator for std::push_heap: top = max by (distance, id).
    struct FurtherFromQuery {
        bool operator()(const Entry& a, const Entry& b) const {
            if (a.distance != b.distance) return a.distance > b.distance;
            return a.id > b.id;
        }
        bool less(const Entry& a, const Entry& b) const { return (*this)(b, a); }
    };

    static constexpr std::uint32_t kRebuildPeriod = 64;

    void push_member(const Entry& e, const DataMatrix& data) {
        heap_.push_back(e);
        std::push_heap(heap_.begin(), heap_.end(),
                       [](const Entry& a, const Entry& b) { return FurtherFromQuery{}.less(a, b); });
        members_.insert(e.id);
        const auto row = data.row(e.id);
        for (std::size_t i = 0; i < sum_.size(); ++i) sum_[i] += static_cast<double>(row[i]);
    }

    void pop_worst(const DataMatrix& data) {
        std::pop_heap(heap_.begin(), heap_.end(),
                      [](const Entry& a, const Entry& b) { return FurtherFromQuery{}.less(a, b); });
        const Entry worst = heap_.back();
        heap_.pop_back();
        members_.erase(worst.id);
        const auto row = data.row(worst.id);
        for (std::size_t i = 0; i < sum_.size(); ++i) sum_[i] -= static_cast<double>(row[i]);
    }

    // Periodic from-scratch recomputation bounds floating-point drift in s.
    // Not counted in ops_count: it is numerical hygiene, not part of the
    // incremental update cost model.
    void rebuild_sum(const DataMatrix& data) {
        std::fill(sum_.begin(), sum_.end(), 0.0);
        for (const Entry& e : heap_) {
            const auto row = data.row(e.id);
            for (std::size_t i = 0; i < sum_.size(); ++i) sum_[i] += static_cast<double>(row[i]);
        }
    }

    UnitVector query_;
    std::uint32_t capacity_;
    Vector sum_;
    std::vector<Entry> heap_;
    std::unordered_set<std::uint32_t> members_;
    std::uint64_t ops_count_ = 0;
    std::uint64_t merge_count_ = 0;
};

}  // namespace mqf
