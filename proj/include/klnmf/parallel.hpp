#ifndef KLNMF_PARALLEL_HPP
#define KLNMF_PARALLEL_HPP

#include <Eigen/Core>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace klnmf {

inline int current_worker() {
#ifdef _OPENMP
  return omp_get_thread_num();
#else
  return 0;
#endif
}

/// Calls fn(worker, j) for j in [0, count) on up to n_workers threads.
/// fn must not throw and must only write state owned by column j or by its
/// worker slot.
template <typename Fn>
void parallel_for_columns(Eigen::Index count, int n_workers, Fn&& fn) {
  if (n_workers <= 1) {
    for (Eigen::Index j = 0; j < count; ++j) fn(0, j);
    return;
  }
#pragma omp parallel for num_threads(n_workers) schedule(dynamic, 32)
  for (Eigen::Index j = 0; j < count; ++j) fn(current_worker(), j);
}

}  // namespace klnmf

#endif  // KLNMF_PARALLEL_HPP
