#pragma once

#include <cstddef>
#include <functional>

namespace plvcsar {

// Runs fn(i) for i in [0, count) on up to n_threads workers (0 = all cores).
// Indices are striped across workers, so fn must be safe to call concurrently
// for distinct i. Results written into slot i by fn are deterministic
// regardless of the worker count. The first exception thrown by any worker is
// rethrown after all workers join.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn,
                  int n_threads = 0);

int default_thread_count();

}  // namespace plvcsar
