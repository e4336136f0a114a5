#pragma once

#include <atomic>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace diffvar {

// Runs fn(i) for i in [begin, end) on up to `threads` workers. Work items
// must write to disjoint state; the first exception is rethrown after all
// workers join.
inline void parallel_for(int begin, int end, int threads, const std::function<void(int)>& fn) {
    if (end <= begin) return;
    const int span = end - begin;
    if (threads <= 1 || span == 1) {
        for (int i = begin; i < end; ++i) fn(i);
        return;
    }
    threads = std::min(threads, span);
    std::atomic<int> next{begin};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (;;) {
            const int i = next.fetch_add(1);
            if (i >= end) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

} // namespace diffvar
