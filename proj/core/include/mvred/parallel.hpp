#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace mvred {

namespace detail {
inline std::atomic<int>& worker_thread_setting() {
  static std::atomic<int> n{0};  // 0 = use hardware concurrency
  return n;
}
}  // namespace detail

inline void set_worker_threads(int n) { detail::worker_thread_setting() = n; }

inline int worker_threads() {
  int n = detail::worker_thread_setting().load();
  if (n <= 0) n = static_cast<int>(std::thread::hardware_concurrency());
  return n > 0 ? n : 1;
}

// Runs fn(i) for i in [0, n). Work items must write only to disjoint
// per-index slots; callers get schedule-independent results by indexing
// output buffers with i. The first exception thrown by any worker is
// rethrown on the calling thread.
template <typename Fn>
void parallel_for(std::int64_t n, Fn&& fn, int threads = 0) {
  if (n <= 0) return;
  if (threads <= 0) threads = worker_threads();
  if (threads > n) threads = static_cast<int>(n);
  if (threads <= 1) {
    for (std::int64_t i = 0; i < n; ++i) fn(i);
    return;
  }

  std::atomic<std::int64_t> cursor{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  const std::int64_t chunk =
      std::max<std::int64_t>(1, n / (static_cast<std::int64_t>(threads) * 8));

  auto worker = [&] {
    for (;;) {
      const std::int64_t begin = cursor.fetch_add(chunk);
      if (begin >= n || failed.load(std::memory_order_relaxed)) return;
      const std::int64_t end = std::min(begin + chunk, n);
      try {
        for (std::int64_t i = begin; i < end; ++i) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!failed.exchange(true)) error = std::current_exception();
        return;
      }
    }
  };

  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads) - 1);
  for (int t = 0; t < threads - 1; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  if (failed.load()) std::rethrow_exception(error);
}

}  // namespace mvred
