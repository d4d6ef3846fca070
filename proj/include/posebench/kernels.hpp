#pragma once

#include <cstdint>

namespace posebench::kernels {

// OpenMP-parallel data kernels used by the model and the pipeline. Serial
// mirrors with identical per-element arithmetic order live in
// posebench::ref (reference.hpp); tests assert bit-equality between the two
// and tools/bench_main.cpp times them against each other.
//
// Layout conventions: row-major; X is [n, in], W is [out, in], Y is [n, out].
// Every kernel writes each output element from exactly one loop iteration and
// runs inner reductions in fixed (ascending-index) order, so results do not
// depend on the thread count.

// Y[r, o] = b[o] + sum_i X[r, i] * W[o, i]
void linear_forward(const double* x, std::int64_t n, std::int64_t in_dim,
                    const double* w, const double* b, std::int64_t out_dim,
                    double* y);

// dX[r, i] = sum_o dY[r, o] * W[o, i]
void linear_backward_input(const double* dy, std::int64_t n, std::int64_t out_dim,
                           const double* w, std::int64_t in_dim, double* dx);

// dW[o, i] += sum_r dY[r, o] * X[r, i];  db[o] += sum_r dY[r, o]
// (accumulates, callers zero the buffers between steps)
void linear_backward_params(const double* dy, const double* x, std::int64_t n,
                            std::int64_t in_dim, std::int64_t out_dim,
                            double* dw, double* db);

} // namespace posebench::kernels
