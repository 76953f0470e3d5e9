// Copyright 2026 uadps authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "uadps/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <mutex>

namespace uadps {

namespace {
std::atomic<int> g_max_threads{1};
}

void set_max_threads(int n) {
  if (n < 1) n = 1;
  g_max_threads.store(n, std::memory_order_relaxed);
}

int max_threads() { return g_max_threads.load(std::memory_order_relaxed); }

namespace detail {

void parallel_for_impl(int begin, int end,
                       const std::function<void(int)>& fn) {
  const int n = end - begin;
  if (n <= 0) return;
  const int jobs = std::min(max_threads(), n);
  if (jobs <= 1) {
    for (int i = begin; i < end; ++i) fn(i);
    return;
  }
  // Contiguous chunks; chunk boundaries depend only on (n, jobs).
  std::vector<std::thread> workers;
  workers.reserve(static_cast<std::size_t>(jobs));
  std::exception_ptr first_error;
  std::atomic<bool> failed{false};
  std::mutex err_mu;
  const int base = n / jobs, extra = n % jobs;
  int lo = begin;
  for (int w = 0; w < jobs; ++w) {
    const int len = base + (w < extra ? 1 : 0);
    const int hi = lo + len;
    workers.emplace_back([&, lo, hi]() {
      try {
        for (int i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        if (!failed.exchange(true)) {
          std::lock_guard<std::mutex> lk(err_mu);
          first_error = std::current_exception();
        }
      }
    });
    lo = hi;
  }
  for (auto& t : workers) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace detail
}  // namespace uadps
