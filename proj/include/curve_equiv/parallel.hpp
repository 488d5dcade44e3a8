#ifndef CURVE_EQUIV_PARALLEL_HPP
#define CURVE_EQUIV_PARALLEL_HPP

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace curve_equiv {

/// Worker count from CURVE_EQUIV_THREADS, else 1.
inline int default_workers() {
  if (const char* env = std::getenv("CURVE_EQUIV_THREADS")) {
    try {
      const int n = std::stoi(env);
      if (n > 0) return n;
    } catch (...) {
    }
  }
  return 1;
}

/// Calls body(i) for i in [0, count) on `workers` threads.  Indices are handed
/// out dynamically; callers write into slot i so the result does not depend on
/// scheduling.  The first exception thrown by any body is rethrown.
template <class Body>
void parallel_for(std::size_t count, int workers, Body&& body) {
  const auto nthreads = static_cast<std::size_t>(std::max(1, workers));
  if (nthreads == 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto run = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        body(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(count);
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < std::min(nthreads, count); ++t) pool.emplace_back(run);
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace curve_equiv

#endif  // CURVE_EQUIV_PARALLEL_HPP
