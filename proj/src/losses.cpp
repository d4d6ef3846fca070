#include "posebench/losses.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <string>

#include "posebench/parallel.hpp"

namespace posebench::losses {

namespace {

using geometry::AngleKind;

void check_tau(const ContrastiveConfig& cfg) {
    if (!(cfg.tau > 0.0) || !std::isfinite(cfg.tau)) {
        throw ConfigError("contrastive tau must be a positive finite number");
    }
}

void check_batch(const ContrastBatch& b, std::size_t query_index) {
    if (b.size < 2) {
        throw ShapeMismatchError("contrastive batch needs at least 2 samples");
    }
    if (b.dim == 0) {
        throw ShapeMismatchError("contrastive batch has dim == 0");
    }
    const std::size_t want = b.size * b.dim;
    if (b.query_embeddings.size() != want || b.key_embeddings.size() != want) {
        throw ShapeMismatchError("contrastive batch embedding buffers do not match size*dim");
    }
    if (b.poses.size() != b.size) {
        throw ShapeMismatchError("contrastive batch pose count does not match size");
    }
    if (query_index >= b.size) {
        throw ShapeMismatchError("contrastive query index out of range");
    }
}

double dot_row(const double* a, const double* b, std::size_t dim) {
    double acc = 0.0;
    for (std::size_t i = 0; i < dim; ++i) acc += a[i] * b[i];
    return acc;
}

// Per-query pose-weighted loss. When coef is non-null it receives, for every
// key k, coef[k] = d(loss)/d(q.k_k) = (p_k - [k == query]) / tau with p_k the
// weighted softmax mass of key k (exactly 0 for zero-weight keys).
double pose_nce_core(const ContrastBatch& b, std::size_t q, const ContrastiveConfig& cfg,
                     double* coef) {
    check_tau(cfg);
    check_batch(b, q);
    const std::size_t n = b.size;
    const std::size_t dim = b.dim;
    const double inv_tau = 1.0 / cfg.tau;
    const double* fq = b.query_embeddings.data() + q * dim;

    std::vector<double> logit(n), weight(n);
    for (std::size_t k = 0; k < n; ++k) {
        logit[k] = dot_row(fq, b.key_embeddings.data() + k * dim, dim) * inv_tau;
        if (k == q) {
            weight[k] = cfg.include_positive_in_denominator ? 1.0 : 0.0;
        } else {
            weight[k] = distance_weight(geometry::normalized_distance(b.poses[q], b.poses[k]),
                                        cfg.weight_mode);
        }
    }

    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < n; ++k) {
        if (weight[k] > 0.0 && logit[k] > peak) peak = logit[k];
    }
    if (!std::isfinite(peak)) {
        throw DegenerateDenominatorError("pose_nce: denominator has no positive-weight key");
    }
    double denom = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        if (weight[k] > 0.0) denom += weight[k] * std::exp(logit[k] - peak);
    }
    if (!(denom > 0.0) || !std::isfinite(denom)) {
        throw DegenerateDenominatorError("pose_nce: denominator underflowed or is not finite");
    }
    const double loss = (peak + std::log(denom)) - logit[q];

    if (coef != nullptr) {
        const double inv_denom = 1.0 / denom;
        for (std::size_t k = 0; k < n; ++k) {
            const double p =
                weight[k] > 0.0 ? weight[k] * std::exp(logit[k] - peak) * inv_denom : 0.0;
            coef[k] = (p - (k == q ? 1.0 : 0.0)) * inv_tau;
        }
    }
    return loss;
}

// Plain InfoNCE counterpart, written independently of pose_nce on purpose:
// the tests that compare the two lean on this not sharing its code path.
double info_nce_core(const ContrastBatch& b, std::size_t q, const ContrastiveConfig& cfg,
                     double* coef) {
    check_tau(cfg);
    check_batch(b, q);
    const std::size_t n = b.size;
    const std::size_t dim = b.dim;
    const double inv_tau = 1.0 / cfg.tau;
    const double* fq = b.query_embeddings.data() + q * dim;

    std::vector<double> logit(n);
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < n; ++k) {
        logit[k] = dot_row(fq, b.key_embeddings.data() + k * dim, dim) * inv_tau;
        if (logit[k] > peak) peak = logit[k];
    }
    double denom = 0.0;
    for (std::size_t k = 0; k < n; ++k) denom += std::exp(logit[k] - peak);
    const double loss = (peak + std::log(denom)) - logit[q];

    if (coef != nullptr) {
        const double inv_denom = 1.0 / denom;
        for (std::size_t k = 0; k < n; ++k) {
            const double p = std::exp(logit[k] - peak) * inv_denom;
            coef[k] = (p - (k == q ? 1.0 : 0.0)) * inv_tau;
        }
    }
    return loss;
}

// Scatter one query's coefficients into embedding-space gradients.
// d_query row q accumulates sum_k coef[k] * key_k (ascending k);
// d_keys row k accumulates coef[k] * query_q.
void scatter_query_grad(const ContrastBatch& b, std::size_t q, const double* coef,
                        double* d_query, double* d_keys) {
    const std::size_t n = b.size;
    const std::size_t dim = b.dim;
    const double* fq = b.query_embeddings.data() + q * dim;
    double* dq = d_query + q * dim;
    for (std::size_t k = 0; k < n; ++k) {
        const double c = coef[k];
        const double* fk = b.key_embeddings.data() + k * dim;
        double* dk = d_keys + k * dim;
        for (std::size_t i = 0; i < dim; ++i) {
            dq[i] += c * fk[i];
            dk[i] += c * fq[i];
        }
    }
}

void prepare_grad(ContrastGrad* grad, const ContrastBatch& b) {
    if (grad == nullptr) return;
    grad->d_query.assign(b.size * b.dim, 0.0);
    grad->d_keys.assign(b.size * b.dim, 0.0);
}

} // namespace

WeightMode parse_weight_mode(std::string_view name) {
    if (name == "linear") return WeightMode::linear;
    if (name == "sqrt") return WeightMode::sqrt;
    if (name == "square") return WeightMode::square;
    if (name == "constant_one") return WeightMode::constant_one;
    throw UnknownParameterError("unknown weight mode '" + std::string(name) +
                                "' (expected linear|sqrt|square|constant_one)");
}

std::string_view weight_mode_name(WeightMode mode) {
    switch (mode) {
    case WeightMode::linear: return "linear";
    case WeightMode::sqrt: return "sqrt";
    case WeightMode::square: return "square";
    case WeightMode::constant_one: return "constant_one";
    }
    return "linear";
}

double distance_weight(double d, WeightMode mode) {
    switch (mode) {
    case WeightMode::linear: return d;
    case WeightMode::sqrt: return std::sqrt(std::max(d, 0.0));
    case WeightMode::square: return d * d;
    case WeightMode::constant_one: return 1.0;
    }
    return d;
}

double smooth_l1(double x, double threshold) {
    if (!(threshold > 0.0)) {
        throw ConfigError("smooth_l1 threshold must be positive");
    }
    const double a = std::abs(x);
    if (a < threshold) return 0.5 * x * x / threshold;
    return a - 0.5 * threshold;
}

double smooth_l1_grad(double x, double threshold) {
    if (!(threshold > 0.0)) {
        throw ConfigError("smooth_l1 threshold must be positive");
    }
    const double a = std::abs(x);
    if (a < threshold) return x / threshold;
    return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
}

double angle_loss_row(const double* scores, const double* offsets,
                      const geometry::PoseLabel& target, const AngleLossConfig& cfg,
                      double* d_scores, double* d_offsets) {
    double loss = 0.0;
    for (int k = 0; k < 3; ++k) {
        const auto kind = static_cast<AngleKind>(k);
        const int count = geometry::bin_count(kind);
        const int base = geometry::score_offset(kind);
        const geometry::BinOffsetCode code = geometry::encode_angle(target.angle(kind), kind);
        const int tgt = base + (code.bin - geometry::min_bin(kind));

        // cross-entropy with log-sum-exp stabilization
        double peak = scores[base];
        for (int i = 1; i < count; ++i) peak = std::max(peak, scores[base + i]);
        double denom = 0.0;
        for (int i = 0; i < count; ++i) denom += std::exp(scores[base + i] - peak);
        const double lse = peak + std::log(denom);
        loss += lse - scores[tgt];

        const double resid = offsets[tgt] - code.offset;
        loss += cfg.lambda * smooth_l1(resid, cfg.smooth_l1_threshold);

        if (d_scores != nullptr) {
            const double inv_denom = 1.0 / denom;
            for (int i = 0; i < count; ++i) {
                d_scores[base + i] = std::exp(scores[base + i] - peak) * inv_denom;
            }
            d_scores[tgt] -= 1.0;
        }
        if (d_offsets != nullptr) {
            for (int i = 0; i < count; ++i) d_offsets[base + i] = 0.0;
            d_offsets[tgt] = cfg.lambda * smooth_l1_grad(resid, cfg.smooth_l1_threshold);
        }
    }
    return loss;
}

double angle_loss(const geometry::AngleHeadOutput& head, const geometry::PoseLabel& target,
                  const AngleLossConfig& cfg, AngleHeadGrad* grad) {
    double scores[geometry::kScoreDim];
    double offsets[geometry::kScoreDim];
    for (int k = 0; k < 3; ++k) {
        const auto kind = static_cast<AngleKind>(k);
        const auto count = static_cast<std::size_t>(geometry::bin_count(kind));
        const auto& s = head.bin_scores[static_cast<std::size_t>(k)];
        const auto& o = head.bin_offsets[static_cast<std::size_t>(k)];
        if (s.size() != count || o.size() != count) {
            throw ShapeMismatchError("angle_loss: head vector size does not match bin count");
        }
        const int base = geometry::score_offset(kind);
        std::copy(s.begin(), s.end(), scores + base);
        std::copy(o.begin(), o.end(), offsets + base);
    }

    double d_scores[geometry::kScoreDim];
    double d_offsets[geometry::kScoreDim];
    const double loss = angle_loss_row(scores, offsets, target, cfg,
                                       grad != nullptr ? d_scores : nullptr,
                                       grad != nullptr ? d_offsets : nullptr);
    if (grad != nullptr) {
        for (int k = 0; k < 3; ++k) {
            const auto kind = static_cast<AngleKind>(k);
            const auto count = static_cast<std::size_t>(geometry::bin_count(kind));
            const int base = geometry::score_offset(kind);
            grad->d_scores[static_cast<std::size_t>(k)].assign(d_scores + base, d_scores + base + count);
            grad->d_offsets[static_cast<std::size_t>(k)].assign(d_offsets + base, d_offsets + base + count);
        }
    }
    return loss;
}

double info_nce(const ContrastBatch& batch, std::size_t query_index,
                const ContrastiveConfig& cfg, ContrastGrad* grad) {
    std::vector<double> coef;
    if (grad != nullptr) coef.resize(batch.size);
    const double loss =
        info_nce_core(batch, query_index, cfg, grad != nullptr ? coef.data() : nullptr);
    prepare_grad(grad, batch);
    if (grad != nullptr) {
        scatter_query_grad(batch, query_index, coef.data(), grad->d_query.data(),
                           grad->d_keys.data());
    }
    return loss;
}

double pose_nce(const ContrastBatch& batch, std::size_t query_index,
                const ContrastiveConfig& cfg, ContrastGrad* grad) {
    std::vector<double> coef;
    if (grad != nullptr) coef.resize(batch.size);
    const double loss =
        pose_nce_core(batch, query_index, cfg, grad != nullptr ? coef.data() : nullptr);
    prepare_grad(grad, batch);
    if (grad != nullptr) {
        scatter_query_grad(batch, query_index, coef.data(), grad->d_query.data(),
                           grad->d_keys.data());
    }
    return loss;
}

double batch_contrastive_loss(const ContrastBatch& batch, const ContrastiveConfig& cfg,
                              ContrastGrad* grad) {
    check_tau(cfg);
    check_batch(batch, 0);
    const std::size_t n = batch.size;
    const std::size_t dim = batch.dim;
    const bool want_grad = grad != nullptr;

    std::vector<double> losses(n, 0.0);
    std::vector<double> coef;
    if (want_grad) coef.assign(n * n, 0.0);

    // Per-query terms in parallel; exceptions are captured and re-thrown for
    // the lowest failing query so behavior matches the serial loop.
    std::vector<std::exception_ptr> failures(n);
    par::for_each_index(static_cast<std::int64_t>(n), [&](std::int64_t q) {
        try {
            losses[static_cast<std::size_t>(q)] =
                pose_nce_core(batch, static_cast<std::size_t>(q), cfg,
                              want_grad ? coef.data() + static_cast<std::size_t>(q) * n : nullptr);
        } catch (...) {
            failures[static_cast<std::size_t>(q)] = std::current_exception();
        }
    });
    for (const auto& f : failures) {
        if (f) std::rethrow_exception(f);
    }

    const double inv_n = 1.0 / static_cast<double>(n);
    double sum = 0.0;
    for (std::size_t q = 0; q < n; ++q) sum += losses[q];
    const double loss = sum * inv_n;

    if (want_grad) {
        prepare_grad(grad, batch);
        double* d_query = grad->d_query.data();
        double* d_keys = grad->d_keys.data();
        // d_query row q only receives terms from query q itself.
        par::for_each_index(static_cast<std::int64_t>(n), [&](std::int64_t q) {
            const double* crow = coef.data() + static_cast<std::size_t>(q) * n;
            double* dq = d_query + static_cast<std::size_t>(q) * dim;
            for (std::size_t k = 0; k < n; ++k) {
                const double c = crow[k];
                const double* fk = batch.key_embeddings.data() + k * dim;
                for (std::size_t i = 0; i < dim; ++i) dq[i] += c * fk[i];
            }
            for (std::size_t i = 0; i < dim; ++i) dq[i] *= inv_n;
        });
        // d_keys row k sums over queries in ascending order.
        par::for_each_index(static_cast<std::int64_t>(n), [&](std::int64_t k) {
            double* dk = d_keys + static_cast<std::size_t>(k) * dim;
            for (std::size_t q = 0; q < n; ++q) {
                const double c = coef[q * n + static_cast<std::size_t>(k)];
                const double* fq = batch.query_embeddings.data() + q * dim;
                for (std::size_t i = 0; i < dim; ++i) dk[i] += c * fq[i];
            }
            for (std::size_t i = 0; i < dim; ++i) dk[i] *= inv_n;
        });
    }
    return loss;
}

double total_loss(double angle_part, double contrastive_part, const TotalLossConfig& cfg) {
    return angle_part + cfg.kappa * contrastive_part;
}

} // namespace posebench::losses
