#pragma once

#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace sde_elbo {

inline unsigned default_threads() {
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

// Runs fn(i) for i in [0, n). Work is split into fixed-size blocks claimed
// dynamically; results must be written to per-index slots so the outcome is
// identical for any thread count. The first worker exception is rethrown on
// the calling thread.
template <typename F>
void parallel_for(std::size_t n, unsigned threads, F&& fn) {
  if (n == 0) return;
  if (threads <= 1 || n == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const std::size_t block = (n + 8 * threads - 1) / (8 * threads);
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  std::atomic<bool> failed{false};
  auto worker = [&] {
    try {
      for (;;) {
        if (failed.load(std::memory_order_relaxed)) break;
        const std::size_t b = next.fetch_add(1);
        const std::size_t lo = b * block;
        if (lo >= n) break;
        const std::size_t hi = lo + block < n ? lo + block : n;
        for (std::size_t i = lo; i < hi; ++i) fn(i);
      }
    } catch (...) {
      std::lock_guard<std::mutex> lock(error_mu);
      if (!error) error = std::current_exception();
      failed.store(true, std::memory_order_relaxed);
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(threads - 1);
  for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace sde_elbo
