#pragma once

#include <atomic>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace mqf {

/// Worker-pool width: the MQF_THREADS environment variable when set,
/// otherwise hardware concurrency.
inline unsigned worker_threads() {
    if (const char* env = std::getenv("MQF_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v >= 1) return static_cast<unsigned>(v);
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
}

/// Run fn(i) for i in [0, n). Tasks own slot i exclusively; results must be
/// written by index so the outcome is identical for any pool width.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
    const unsigned threads = static_cast<unsigned>(
        std::min<std::size_t>(worker_threads(), n));
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr error;
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (unsigned t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= n || failed.load()) return;
                try {
                    fn(i);
                } catch (...) {
                    if (!failed.exchange(true)) error = std::current_exception();
                    return;
                }
            }
        });
    }
    for (std::thread& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace mqf
