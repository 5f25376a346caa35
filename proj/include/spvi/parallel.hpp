#ifndef SPVI_PARALLEL_HPP
#define SPVI_PARALLEL_HPP

#include <cstdint>
#include <cstdlib>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace spvi {

// Thread cap: min(OMP max threads, SPVI_THREADS). SPVI_THREADS=1 forces the
// serial path everywhere.
inline int max_threads() {
#ifdef _OPENMP
  int n = omp_get_max_threads();
#else
  int n = 1;
#endif
  if (const char* env = std::getenv("SPVI_THREADS")) {
    const int cap = std::atoi(env);
    if (cap >= 1 && cap < n) n = cap;
  }
  return n;
}

// Serial reference loop. Kept as its own entry point so that tests and the
// benchmark can compare it against the OpenMP path.
template <typename F>
void serial_for(std::int64_t n, F&& body) {
  for (std::int64_t i = 0; i < n; ++i) body(i);
}

// OpenMP loop over independent iterations. Every iteration must draw its
// randomness from a stream derived from the iteration index and write only
// to its own slots; reductions happen serially afterwards, so results are
// identical for any thread count.
template <typename F>
void parallel_for(std::int64_t n, F&& body) {
  const int nt = max_threads();
  if (nt <= 1 || n <= 1) {
    serial_for(n, body);
    return;
  }
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 1) num_threads(nt)
  for (std::int64_t i = 0; i < n; ++i) body(i);
#else
  serial_for(n, body);
#endif
}

}  // namespace spvi

#endif
