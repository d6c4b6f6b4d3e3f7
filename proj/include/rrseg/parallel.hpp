#pragma once

#include <atomic>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace rrseg {

/// Run fn(0..n-1), optionally across `workers` threads. Each index is
/// processed exactly once; callers keep determinism by writing results into
/// index-addressed slots. The first exception thrown by any worker is
/// rethrown after all workers join.
inline void parallel_for(int n, int workers, const std::function<void(int)>& fn) {
    if (n <= 0) {
        return;
    }
    if (workers <= 1 || n == 1) {
        for (int i = 0; i < n; ++i) {
            fn(i);
        }
        return;
    }
    workers = std::min(workers, n);
    std::atomic<int> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> threads;
    threads.reserve(workers);
    for (int w = 0; w < workers; ++w) {
        threads.emplace_back([&] {
            for (;;) {
                const int i = next.fetch_add(1);
                if (i >= n) {
                    return;
                }
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!error) {
                        error = std::current_exception();
                    }
                }
            }
        });
    }
    for (auto& t : threads) {
        t.join();
    }
    if (error) {
        std::rethrow_exception(error);
    }
}

}  // namespace rrseg
