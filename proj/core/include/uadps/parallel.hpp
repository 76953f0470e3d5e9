// Copyright 2026 uadps authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef UADPS_PARALLEL_HPP
#define UADPS_PARALLEL_HPP

#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace uadps {

// Process-wide worker budget (the CLI wires --jobs to this). Default 1:
// results never depend on it, so parallelism is strictly opt-in.
void set_max_threads(int n);
int max_threads();

namespace detail {
void parallel_for_impl(int begin, int end,
                       const std::function<void(int)>& fn);
}

// Runs fn(i) for i in [begin, end). Work is split into contiguous chunks,
// one per worker, with no stealing: for a fixed range the mapping from
// index to worker is a pure function of max_threads(). Each index must
// touch only its own output slots; under that contract results are
// bitwise identical for any worker count. Exceptions from workers are
// rethrown on the calling thread.
template <typename Fn>
void parallel_for(int begin, int end, Fn&& fn) {
  detail::parallel_for_impl(begin, end, std::function<void(int)>(fn));
}

}  // namespace uadps

#endif  // UADPS_PARALLEL_HPP
