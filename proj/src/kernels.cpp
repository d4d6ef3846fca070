#include "posebench/kernels.hpp"

#include "posebench/parallel.hpp"

namespace posebench::kernels {

void linear_forward(const double* x, std::int64_t n, std::int64_t in_dim,
                    const double* w, const double* b, std::int64_t out_dim,
                    double* y) {
    par::for_each_index(n, [&](std::int64_t r) {
        const double* xr = x + r * in_dim;
        double* yr = y + r * out_dim;
        for (std::int64_t o = 0; o < out_dim; ++o) {
            const double* wo = w + o * in_dim;
            double acc = b[o];
            for (std::int64_t i = 0; i < in_dim; ++i) {
                acc += xr[i] * wo[i];
            }
            yr[o] = acc;
        }
    });
}

void linear_backward_input(const double* dy, std::int64_t n, std::int64_t out_dim,
                           const double* w, std::int64_t in_dim, double* dx) {
    par::for_each_index(n, [&](std::int64_t r) {
        const double* dyr = dy + r * out_dim;
        double* dxr = dx + r * in_dim;
        for (std::int64_t i = 0; i < in_dim; ++i) {
            double acc = 0.0;
            for (std::int64_t o = 0; o < out_dim; ++o) {
                acc += dyr[o] * w[o * in_dim + i];
            }
            dxr[i] = acc;
        }
    });
}

void linear_backward_params(const double* dy, const double* x, std::int64_t n,
                            std::int64_t in_dim, std::int64_t out_dim,
                            double* dw, double* db) {
    // Parallel over output units: row o of dW and db[o] are owned by one
    // iteration; the sum over batch rows r runs in ascending order.
    par::for_each_index(out_dim, [&](std::int64_t o) {
        double* dwo = dw + o * in_dim;
        double acc_b = db[o];
        for (std::int64_t r = 0; r < n; ++r) {
            const double g = dy[r * out_dim + o];
            acc_b += g;
            const double* xr = x + r * in_dim;
            for (std::int64_t i = 0; i < in_dim; ++i) {
                dwo[i] += g * xr[i];
            }
        }
        db[o] = acc_b;
    });
}

} // namespace posebench::kernels
