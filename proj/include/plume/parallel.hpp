#pragma once

#include <cstddef>
#include <cstdlib>
#include <exception>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace plume {

// Every batch kernel has a serial reference path and an OpenMP path. Both
// produce bit-identical results: work items are independent and any
// reduction happens afterwards in index order.
enum class ExecPolicy { serial, parallel };

// Worker cap: PLUME_THREADS if set to a positive integer, else the OpenMP default.
inline int worker_count() {
  int threads = 1;
#ifdef _OPENMP
  threads = omp_get_max_threads();
#endif
  if (const char* env = std::getenv("PLUME_THREADS")) {
    try {
      const int v = std::stoi(env);
      if (v > 0) threads = v;
    } catch (...) {
    }
  }
  return threads;
}

// Calls f(i) for i in [0, count). Items must not share mutable state.
template <class F>
void for_each_index(std::size_t count, ExecPolicy policy, F&& f) {
#ifdef _OPENMP
  if (policy == ExecPolicy::parallel && count > 1) {
    const int threads = worker_count();
    const auto n = static_cast<long long>(count);
    std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
    for (long long i = 0; i < n; ++i) {
      try {
        f(static_cast<std::size_t>(i));
      } catch (...) {
#pragma omp critical(plume_for_each_index)
        if (!failure) failure = std::current_exception();
      }
    }
    if (failure) std::rethrow_exception(failure);
    return;
  }
#endif
  for (std::size_t i = 0; i < count; ++i) f(i);
}

}  // namespace plume
