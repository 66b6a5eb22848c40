#pragma once

#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace curlcurl {

/// Worker count: CURLCURL_THREADS if set and positive, else the hardware concurrency.
inline int worker_count()
{
  if (const char* env = std::getenv("CURLCURL_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0)
      return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : int(hw);
}

/// Runs f(i) for i in [0, n). Each index must write only its own output slot, so results do
/// not depend on scheduling. The first exception thrown by any worker is rethrown.
template <class F>
void parallel_for(int n, F&& f)
{
  const int workers = std::min(worker_count(), n);
  if (workers <= 1) {
    for (int i = 0; i < n; ++i)
      f(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto work = [&] {
    for (int i = next++; i < n; i = next++) {
      try {
        f(i);
      }
      catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error)
          error = std::current_exception();
        next = n;
      }
    }
  };
  std::vector<std::thread> pool;
  for (int t = 1; t < workers; ++t)
    pool.emplace_back(work);
  work();
  for (auto& t : pool)
    t.join();
  if (error)
    std::rethrow_exception(error);
}

} // namespace curlcurl
