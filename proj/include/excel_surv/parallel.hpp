#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace excel_surv {

// Thread cap from EXCEL_SURV_THREADS; unset or invalid means one thread.
inline std::size_t thread_limit()
{
    const char* env = std::getenv("EXCEL_SURV_THREADS");
    if (env == nullptr) {
        return 1;
    }
    try {
        const long value = std::stol(env);
        return value > 0 ? static_cast<std::size_t>(value) : 1;
    } catch (...) {
        return 1;
    }
}

// Runs body(i) for i in [0, count). Results must be written by index so the
// outcome does not depend on scheduling. The first exception is rethrown.
template <typename Body>
void parallel_for(std::size_t count, Body&& body, std::size_t threads = thread_limit())
{
    threads = std::min(threads, count);
    if (threads <= 1) {
        for (std::size_t i = 0; i < count; ++i) {
            body(i);
        }
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < count; i = next++) {
                try {
                    body(i);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) {
                        failure = std::current_exception();
                    }
                }
            }
        });
    }
    for (auto& worker : pool) {
        worker.join();
    }
    if (failure) {
        std::rethrow_exception(failure);
    }
}

} // namespace excel_surv
