#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace netflow {

// Runs fn(i) for i in [0, n) on up to `workers` threads. Indices are handed
// out dynamically; callers write results into slot i so the output does not
// depend on the schedule. The first exception thrown is rethrown on the
// calling thread after all workers have stopped.
template <typename Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
  const std::size_t k = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(workers, 1)));
  if (k <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto body = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1, std::memory_order_relaxed);
      if (i >= n || failed.load(std::memory_order_relaxed)) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        failed = true;
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    pool.reserve(k - 1);
    for (std::size_t w = 0; w + 1 < k; ++w) pool.emplace_back(body);
    body();
  }
  if (error) std::rethrow_exception(error);
}

// Worker count from NETFLOW_WORKERS, or `fallback` when unset or invalid.
inline int default_workers(int fallback = 1) {
  if (const char* env = std::getenv("NETFLOW_WORKERS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  return fallback;
}

}  // namespace netflow
