#pragma once

#include <cstdint>
#include <vector>

#include "posebench/errors.hpp"

namespace posebench::nn {

// Dense row-major tensor of doubles with an optional gradient buffer.
// Invariant: grad is either empty or exactly values.size() long.
struct Tensor {
    std::vector<std::int64_t> shape;
    std::vector<double> values;
    std::vector<double> grad;

    Tensor() = default;

    static Tensor zeros(std::vector<std::int64_t> dims) {
        Tensor t;
        std::int64_t n = 1;
        for (std::int64_t d : dims) n *= d;
        t.shape = std::move(dims);
        t.values.assign(static_cast<std::size_t>(n), 0.0);
        return t;
    }

    std::int64_t numel() const { return static_cast<std::int64_t>(values.size()); }
    std::int64_t rows() const { return shape.empty() ? 0 : shape[0]; }
    std::int64_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }

    double* data() { return values.data(); }
    const double* data() const { return values.data(); }

    double& at(std::int64_t r, std::int64_t c) { return values[static_cast<std::size_t>(r * cols() + c)]; }
    double at(std::int64_t r, std::int64_t c) const { return values[static_cast<std::size_t>(r * cols() + c)]; }

    void alloc_grad() { grad.assign(values.size(), 0.0); }
    void zero_grad() {
        if (!grad.empty()) grad.assign(values.size(), 0.0);
    }
    bool has_grad() const { return !grad.empty(); }
};

} // namespace posebench::nn
