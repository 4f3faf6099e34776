#include "driftcal/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <thread>
#include <vector>

namespace driftcal {

unsigned thread_budget() {
    static const unsigned budget = [] {
        unsigned hw = std::thread::hardware_concurrency();
        if (hw == 0) hw = 1;
        if (const char* env = std::getenv("DRIFTCAL_THREADS")) {
            long v = std::strtol(env, nullptr, 10);
            if (v >= 1) return std::min<unsigned>(hw * 4, static_cast<unsigned>(v));
        }
        return hw;
    }();
    return budget;
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    unsigned workers = std::min<std::size_t>(thread_budget(), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            // Chunked work stealing: coarse enough to amortize the atomic,
            // fine enough to balance uneven samples.
            const std::size_t chunk = std::max<std::size_t>(1, n / (workers * 8));
            for (;;) {
                std::size_t begin = next.fetch_add(chunk);
                if (begin >= n) break;
                std::size_t end = std::min(n, begin + chunk);
                for (std::size_t i = begin; i < end; ++i) fn(i);
            }
        });
    }
    for (auto& t : pool) t.join();
}

}  // namespace driftcal
