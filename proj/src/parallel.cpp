#include "otgeo/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace otgeo {

namespace {
std::atomic<std::size_t> g_limit{0};
thread_local bool t_in_worker = false;
}  // namespace

void set_worker_limit(std::size_t limit) { g_limit = limit; }

std::size_t worker_count()
{
    std::size_t base = std::max<std::size_t>(1, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("OTGEO_THREADS")) {
        try {
            const long v = std::stol(env);
            if (v >= 1) base = static_cast<std::size_t>(v);
        } catch (...) {
        }
    }
    const std::size_t limit = g_limit.load();
    return limit > 0 ? std::min(base, limit) : base;
}

void parallel_for(std::size_t begin, std::size_t end, const std::function<void(std::size_t)>& fn,
                  std::size_t max_workers)
{
    if (end <= begin) return;
    const std::size_t n = end - begin;
    std::size_t workers = worker_count();
    if (max_workers > 0) workers = std::min(workers, max_workers);
    if (t_in_worker) workers = 1;
    workers = std::min(workers, n);
    if (workers <= 1) {
        for (std::size_t i = begin; i < end; ++i) fn(i);
        return;
    }

    std::exception_ptr first_error;
    std::mutex error_mutex;
    std::vector<std::thread> threads;
    threads.reserve(workers);
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t lo = begin + w * chunk;
        const std::size_t hi = std::min(end, lo + chunk);
        if (lo >= hi) break;
        threads.emplace_back([&, lo, hi] {
            t_in_worker = true;
            try {
                for (std::size_t i = lo; i < hi; ++i) fn(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        });
    }
    for (auto& t : threads) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace otgeo
