#pragma once

#include <cstdint>
#include <cstdlib>
#include <thread>
#include <vector>

namespace ua {

/// Worker count for parallel sections. `requested` > 0 asks for a specific
/// degree; 0 means hardware concurrency. The UNLEARN_AUDIT_THREADS
/// environment variable caps the result in both cases.
inline int worker_count(int requested = 0) {
    int n = requested > 0 ? requested : static_cast<int>(std::thread::hardware_concurrency());
    if (n <= 0) n = 1;
    if (const char* env = std::getenv("UNLEARN_AUDIT_THREADS")) {
        const int cap = std::atoi(env);
        if (cap > 0 && cap < n) n = cap;
    }
    return n;
}

/// Runs fn(i) for i in [begin, end) on `threads` workers over contiguous
/// chunks. Callers guarantee disjoint writes; the result must not depend on
/// the chunking, which is how every parallel section here stays
/// deterministic.
template <class Fn>
void parallel_for(std::int64_t begin, std::int64_t end, int threads, Fn&& fn) {
    const std::int64_t count = end - begin;
    if (count <= 0) return;
    if (threads <= 1 || count == 1) {
        for (std::int64_t i = begin; i < end; ++i) fn(i);
        return;
    }
    const int workers = static_cast<int>(std::min<std::int64_t>(threads, count));
    std::vector<std::thread> pool;
    pool.reserve(workers);
    const std::int64_t chunk = (count + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
        const std::int64_t lo = begin + w * chunk;
        const std::int64_t hi = std::min(end, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &fn] {
            for (std::int64_t i = lo; i < hi; ++i) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

} // namespace ua
