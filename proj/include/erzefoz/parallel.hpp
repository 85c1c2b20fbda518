#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <mutex>
#include <random>
#include <thread>
#include <vector>

namespace erzefoz {

inline int resolve_workers(int workers) {
    if (workers > 0) return workers;
    unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
}

// Calls fn(i) for i in [0, n). Results must be written by index.
template <class Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
    const int w = std::min<std::size_t>(resolve_workers(workers), std::max<std::size_t>(n, 1));
    if (w <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto body = [&] {
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
                next = n;
            }
        }
    };
    std::vector<std::thread> pool;
    for (int t = 0; t < w; ++t) pool.emplace_back(body);
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

// Independent engine for (master seed, index, stream tag).
inline std::mt19937_64 substream(std::uint64_t master, std::uint64_t index, std::uint64_t tag = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(master), static_cast<std::uint32_t>(master >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                      static_cast<std::uint32_t>(tag), static_cast<std::uint32_t>(tag >> 32)};
    return std::mt19937_64(seq);
}

}  // namespace erzefoz
