#pragma once

#include <cstddef>

#if defined(_OPENMP)
#include <omp.h>
#endif

namespace rewardkit::par {

// Work below this many items stays on one thread; spawning costs more than
// it saves there.
inline constexpr std::size_t kGrain = 512;

// Static-schedule parallel loop over [0, n). Each index must write only its
// own output slot so the result is bit-identical to the serial loop.
template <typename Fn>
void for_each_index(std::size_t n, Fn&& fn) {
#if defined(_OPENMP)
  if (n >= kGrain) {
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < static_cast<long long>(n); ++i) {
      fn(static_cast<std::size_t>(i));
    }
    return;
  }
#endif
  for (std::size_t i = 0; i < n; ++i) fn(i);
}

inline int max_threads() {
#if defined(_OPENMP)
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace rewardkit::par
