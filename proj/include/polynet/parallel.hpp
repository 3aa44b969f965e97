#pragma once

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace polynet {

/// Worker count from POLYNET_WORKERS, else 1.
inline int default_workers()
{
    if (const char* s = std::getenv("POLYNET_WORKERS")) {
        try {
            const int w = std::stoi(s);
            if (w > 0) return w;
        } catch (const std::exception&) {
        }
    }
    return 1;
}

inline int resolve_workers(int requested) { return requested > 0 ? requested : default_workers(); }

/// Splits [0, count) into at most `workers` contiguous chunks and calls
/// fn(worker, begin, end) for each. Chunk boundaries depend only on count
/// and workers. The first exception thrown by any worker is rethrown.
template <typename Fn>
void parallel_for(int count, int workers, Fn&& fn)
{
    workers = std::max(1, std::min(workers, count));
    if (workers == 1) {
        if (count > 0) fn(0, 0, count);
        return;
    }
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
    std::vector<std::thread> threads;
    threads.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        const int begin = static_cast<int>(static_cast<long long>(count) * w / workers);
        const int end = static_cast<int>(static_cast<long long>(count) * (w + 1) / workers);
        threads.emplace_back([&, w, begin, end] {
            try {
                fn(w, begin, end);
            } catch (...) {
                errors[static_cast<std::size_t>(w)] = std::current_exception();
            }
        });
    }
    for (auto& t : threads) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace polynet
