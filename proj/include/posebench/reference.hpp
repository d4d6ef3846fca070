#pragma once

#include <cstdint>

#include "posebench/losses.hpp"
#include "posebench/synthdata.hpp"
#include "posebench/tensor.hpp"

namespace posebench::ref {

// Serial reference implementations of the OpenMP kernels and batch loops.
// Kept deliberately naive: same per-element arithmetic order as the parallel
// versions, no pragmas, so tests can assert bit-equality and the benchmark
// can time the two against each other.

void linear_forward(const double* x, std::int64_t n, std::int64_t in_dim, const double* w,
                    const double* b, std::int64_t out_dim, double* y);

void linear_backward_input(const double* dy, std::int64_t n, std::int64_t out_dim,
                           const double* w, std::int64_t in_dim, double* dx);

void linear_backward_params(const double* dy, const double* x, std::int64_t n,
                            std::int64_t in_dim, std::int64_t out_dim, double* dw, double* db);

// Serial mean of per-query pose_nce calls, gradients accumulated query by
// query and scaled once at the end. This is the reduction-identity oracle for
// losses::batch_contrastive_loss.
double batch_contrastive_loss(const losses::ContrastBatch& batch,
                              const losses::ContrastiveConfig& cfg,
                              losses::ContrastGrad* grad = nullptr);

// Serial row-by-row rendering.
void render_records(const synthdata::Renderer& renderer,
                    const std::vector<const synthdata::SampleRecord*>& records,
                    nn::Tensor& out);

} // namespace posebench::ref
