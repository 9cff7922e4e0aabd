#pragma once

#include <cstddef>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace sloam {

// Number of threads to use for `requested` (0 = all hardware threads).
int resolve_threads(int requested);

// Runs fn(i) for i in [0, n). threads <= 1 executes serially in index order;
// otherwise iterations are distributed across OpenMP threads. Iterations must
// write only to their own output slots, which keeps results bit-identical to
// the serial order for any thread count.
template <class Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
#ifdef _OPENMP
  if (threads > 1 && n > 1) {
#pragma omp parallel for schedule(static) num_threads(threads)
    for (long long i = 0; i < static_cast<long long>(n); ++i) {
      fn(static_cast<std::size_t>(i));
    }
    return;
  }
#endif
  for (std::size_t i = 0; i < n; ++i) fn(i);
}

}  // namespace sloam
