#pragma once

#include <cstdint>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace posebench::par {

inline int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

inline void set_threads(int n) {
#ifdef _OPENMP
    if (n > 0) omp_set_num_threads(n);
#else
    (void)n;
#endif
}

// Static-schedule parallel loop over [0, n). Each index must own its outputs
// exclusively and any reduction inside the body must run in an order that
// does not depend on the thread count; under that discipline results are
// bit-identical for any number of threads (and to a plain serial loop).
template <typename Body>
void for_each_index(std::int64_t n, Body&& body) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) {
        body(i);
    }
#else
    for (std::int64_t i = 0; i < n; ++i) {
        body(i);
    }
#endif
}

} // namespace posebench::par
