#pragma once

#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <utility>
#include <vector>

namespace fastkci {

/// Runs fn(i) for i in [0, count) on up to max_threads workers.
///
/// Workers pull indices from a shared counter; callers must write results
/// into slots indexed by i and fold them in index order afterwards, so the
/// outcome is identical for any thread cap >= 1.
template <class Fn>
void parallel_for(std::size_t count, int max_threads, Fn&& fn) {
  if (count == 0) return;
  std::size_t workers = max_threads < 1 ? 1 : static_cast<std::size_t>(max_threads);
  if (workers > count) workers = count;

  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }

  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::exception_ptr first_error;
  std::mutex error_mutex;

  auto worker = [&] {
    while (!stop.load(std::memory_order_relaxed)) {
      const std::size_t i = next.fetch_add(1, std::memory_order_relaxed);
      if (i >= count) break;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        stop.store(true, std::memory_order_relaxed);
      }
    }
  };

  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();

  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace fastkci
