#ifndef PM_PARALLEL_HPP
#define PM_PARALLEL_HPP

#include <cstddef>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace pm {

/// Runs fn(i) for i in [0, n). Iterations must be independent and must only
/// write to their own output slots; results are then identical for any thread
/// count. threads == 0 uses the OpenMP default, threads == 1 forces the serial
/// reference path (also used when OpenMP is unavailable).
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn, int threads = 0) {
#ifdef _OPENMP
  if (threads != 1) {
    if (threads > 0) {
#pragma omp parallel for schedule(dynamic) num_threads(threads)
      for (long long i = 0; i < static_cast<long long>(n); ++i)
        fn(static_cast<std::size_t>(i));
    } else {
#pragma omp parallel for schedule(dynamic)
      for (long long i = 0; i < static_cast<long long>(n); ++i)
        fn(static_cast<std::size_t>(i));
    }
    return;
  }
#else
  (void)threads;
#endif
  for (std::size_t i = 0; i < n; ++i) fn(i);
}

inline int hardware_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace pm

#endif  // PM_PARALLEL_HPP
