#include "posebench/reference.hpp"

#include <algorithm>

namespace posebench::ref {

void linear_forward(const double* x, std::int64_t n, std::int64_t in_dim, const double* w,
                    const double* b, std::int64_t out_dim, double* y) {
    for (std::int64_t r = 0; r < n; ++r) {
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
    }
}

void linear_backward_input(const double* dy, std::int64_t n, std::int64_t out_dim,
                           const double* w, std::int64_t in_dim, double* dx) {
    for (std::int64_t r = 0; r < n; ++r) {
        const double* dyr = dy + r * out_dim;
        double* dxr = dx + r * in_dim;
        for (std::int64_t i = 0; i < in_dim; ++i) {
            double acc = 0.0;
            for (std::int64_t o = 0; o < out_dim; ++o) {
                acc += dyr[o] * w[o * in_dim + i];
            }
            dxr[i] = acc;
        }
    }
}

void linear_backward_params(const double* dy, const double* x, std::int64_t n,
                            std::int64_t in_dim, std::int64_t out_dim, double* dw, double* db) {
    for (std::int64_t o = 0; o < out_dim; ++o) {
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
    }
}

double batch_contrastive_loss(const losses::ContrastBatch& batch,
                              const losses::ContrastiveConfig& cfg,
                              losses::ContrastGrad* grad) {
    const std::size_t n = batch.size;
    const std::size_t dim = batch.dim;
    const double inv_n = 1.0 / static_cast<double>(n);

    if (grad != nullptr) {
        grad->d_query.assign(n * dim, 0.0);
        grad->d_keys.assign(n * dim, 0.0);
    }

    double sum = 0.0;
    losses::ContrastGrad per_query;
    for (std::size_t q = 0; q < n; ++q) {
        sum += losses::pose_nce(batch, q, cfg, grad != nullptr ? &per_query : nullptr);
        if (grad != nullptr) {
            for (std::size_t i = 0; i < n * dim; ++i) {
                grad->d_query[i] += per_query.d_query[i];
                grad->d_keys[i] += per_query.d_keys[i];
            }
        }
    }
    if (grad != nullptr) {
        for (std::size_t i = 0; i < n * dim; ++i) {
            grad->d_query[i] *= inv_n;
            grad->d_keys[i] *= inv_n;
        }
    }
    return sum * inv_n;
}

void render_records(const synthdata::Renderer& renderer,
                    const std::vector<const synthdata::SampleRecord*>& records,
                    nn::Tensor& out) {
    const auto dim = static_cast<std::size_t>(renderer.config().input_dim);
    out = nn::Tensor::zeros({static_cast<std::int64_t>(records.size()),
                             renderer.config().input_dim});
    for (std::size_t i = 0; i < records.size(); ++i) {
        const std::vector<double> x =
            renderer.render(records[i]->class_id, records[i]->pose, records[i]->nuisance_seed);
        std::copy(x.begin(), x.end(), out.values.begin() + static_cast<std::int64_t>(i * dim));
    }
}

} // namespace posebench::ref
