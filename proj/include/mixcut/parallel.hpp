#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace mixcut {

// Process-wide thread cap. 0 means "use the hardware count". The CLI sets this
// from --threads; tests set it to 1 when they need serial execution.
inline std::atomic<int>& thread_cap() {
    static std::atomic<int> cap{0};
    return cap;
}

inline void set_thread_cap(int n) { thread_cap().store(n < 0 ? 0 : n); }

inline int effective_threads(std::int64_t work_items) {
    int hw = static_cast<int>(std::thread::hardware_concurrency());
    if (hw <= 0) hw = 1;
    const int cap = thread_cap().load();
    if (cap > 0) hw = std::min(hw, cap);
    if (work_items < hw) hw = static_cast<int>(std::max<std::int64_t>(work_items, 1));
    return hw;
}

// Static block partition of [0, n) across threads. Deterministic given n only:
// each index i is processed exactly once and writers must target disjoint slots,
// so outputs cannot depend on scheduling. The first exception thrown wins and is
// rethrown on the calling thread.
template <typename Body>
void parallel_for(std::int64_t n, Body&& body) {
    if (n <= 0) return;
    const int nthreads = effective_threads(n);
    if (nthreads == 1) {
        for (std::int64_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::vector<std::thread> workers;
    workers.reserve(static_cast<std::size_t>(nthreads));
    std::exception_ptr first_error = nullptr;
    std::mutex error_mutex;
    const std::int64_t chunk = (n + nthreads - 1) / nthreads;
    for (int t = 0; t < nthreads; ++t) {
        const std::int64_t lo = t * chunk;
        const std::int64_t hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        workers.emplace_back([&, lo, hi]() {
            try {
                for (std::int64_t i = lo; i < hi; ++i) body(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        });
    }
    for (auto& w : workers) w.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace mixcut
