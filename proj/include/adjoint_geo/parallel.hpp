#pragma once

#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace adjoint_geo {

// Worker cap for embarrassingly parallel loops. ADJOINT_GEO_THREADS overrides
// the hardware default; unparseable values are ignored, values below 1 mean
// sequential execution.
inline int thread_cap() {
  int cap = static_cast<int>(std::thread::hardware_concurrency());
  if (cap < 1) cap = 1;
  if (const char* env = std::getenv("ADJOINT_GEO_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0') cap = v < 1 ? 1 : static_cast<int>(v);
  }
  return cap;
}

// Runs body(0..n-1) on up to thread_cap() workers. Tasks must not share
// mutable state (warm-start caches are cloned per worker by callers). The
// first exception thrown by any task is rethrown after the join.
template <class F>
inline void parallel_for(int n, F&& body) {
  const int workers = std::min(thread_cap(), n);
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace adjoint_geo
