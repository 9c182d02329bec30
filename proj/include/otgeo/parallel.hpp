#pragma once

#include <cstddef>
#include <functional>

namespace otgeo {

/// Worker count: OTGEO_THREADS when set (>= 1), otherwise hardware concurrency.
std::size_t worker_count();

/// Process-wide cap applied on top of worker_count(); 0 removes it.
void set_worker_limit(std::size_t limit);

/// Runs fn(i) for i in [begin, end) on up to worker_count() threads. Work is
/// split into contiguous chunks; fn must only write to state owned by index i.
/// Calls made from inside a worker run serially.
void parallel_for(std::size_t begin, std::size_t end, const std::function<void(std::size_t)>& fn,
                  std::size_t max_workers = 0);

}  // namespace otgeo
