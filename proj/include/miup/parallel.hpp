#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace miup {

// Runs fn(i) for i in [0, n) across up to `workers` threads (0 = hardware
// concurrency). Each index must write only to its own output slot; the
// first exception is rethrown on the calling thread.
inline void parallel_for(int n, const std::function<void(int)>& fn, int workers = 0) {
  if (n <= 0) return;
  unsigned int count = workers > 0 ? static_cast<unsigned int>(workers)
                                   : std::thread::hardware_concurrency();
  if (count == 0) count = 1;
  count = std::min<unsigned int>(count, static_cast<unsigned int>(n));
  if (count <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }

  std::vector<std::thread> threads;
  std::mutex error_mutex;
  std::exception_ptr error;
  std::atomic<int> next{0};
  for (unsigned int t = 0; t < count; ++t) {
    threads.emplace_back([&]() {
      for (;;) {
        const int i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& thread : threads) thread.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace miup
