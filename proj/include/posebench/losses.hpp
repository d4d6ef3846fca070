#pragma once

#include <array>
#include <cstddef>
#include <string_view>
#include <vector>

#include "posebench/geometry.hpp"

namespace posebench::losses {

struct AngleLossConfig {
    double lambda = 1.0;             // weight of the offset regression term
    double smooth_l1_threshold = 1.0;
};

// Distance-to-weight map g(d) applied to normalized pose distance d in [0,1].
enum class WeightMode { linear, sqrt, square, constant_one };

WeightMode parse_weight_mode(std::string_view name); // UnknownParameterError on bad name
std::string_view weight_mode_name(WeightMode mode);
double distance_weight(double d, WeightMode mode);

struct ContrastiveConfig {
    double tau = 0.5;
    WeightMode weight_mode = WeightMode::linear;
    // When true the positive key enters the denominator with weight exactly 1
    // (negatives always use g(d)); with constant_one weights this reproduces
    // info_nce. When false the denominator is the literal weighted sum over
    // the other keys.
    bool include_positive_in_denominator = false;
};

struct TotalLossConfig {
    double kappa = 1.0; // contrastive term weight
};

// Huber-style penalty: 0.5 x^2 / t for |x| < t, |x| - 0.5 t otherwise.
double smooth_l1(double x, double threshold);
double smooth_l1_grad(double x, double threshold);

// Gradients of angle_loss w.r.t. every head entry (same shapes as the head).
struct AngleHeadGrad {
    std::array<std::vector<double>, 3> d_scores;
    std::array<std::vector<double>, 3> d_offsets;
};

// Sum over the three angles of softmax cross-entropy on the bin scores plus
// lambda * smooth_l1(predicted offset at the target bin - target offset).
double angle_loss(const geometry::AngleHeadOutput& head, const geometry::PoseLabel& target,
                  const AngleLossConfig& cfg, AngleHeadGrad* grad = nullptr);

// Row layout used by the trainer: scores/offsets are kScoreDim-wide slices
// (azimuth | elevation | inplane). d_scores/d_offsets, when non-null, are
// kScoreDim-wide buffers that get *assigned* (not accumulated).
double angle_loss_row(const double* scores, const double* offsets,
                      const geometry::PoseLabel& target, const AngleLossConfig& cfg,
                      double* d_scores, double* d_offsets);

// One contrastive batch: query/key embeddings row-major [size x dim], rows
// L2-normalized; key k is the second view of query k and shares poses[k].
struct ContrastBatch {
    std::size_t size = 0;
    std::size_t dim = 0;
    std::vector<double> query_embeddings;
    std::vector<double> key_embeddings;
    std::vector<geometry::RotationMatrix> poses;
};

// Gradients w.r.t. the embeddings, same layouts as the batch.
struct ContrastGrad {
    std::vector<double> d_query;
    std::vector<double> d_keys;
};

// Plain InfoNCE for one query: -log( exp(q.k+/tau) / sum_k exp(q.k/tau) ),
// sum over all keys including the positive. Ignores cfg.weight_mode.
double info_nce(const ContrastBatch& batch, std::size_t query_index,
                const ContrastiveConfig& cfg, ContrastGrad* grad = nullptr);

// Pose-weighted contrastive loss for one query:
// -log( exp(q.k+/tau) / sum_k w_k exp(q.k/tau) ), w_k = g(d(pose_q, pose_k)).
// Throws DegenerateDenominatorError when the denominator has no support.
double pose_nce(const ContrastBatch& batch, std::size_t query_index,
                const ContrastiveConfig& cfg, ContrastGrad* grad = nullptr);

// Mean of pose_nce over all queries. Per-query terms may run in parallel;
// the reduction order is fixed (ascending query index, scaled once at the
// end), so the result equals the serial mean bit-for-bit.
double batch_contrastive_loss(const ContrastBatch& batch, const ContrastiveConfig& cfg,
                              ContrastGrad* grad = nullptr);

double total_loss(double angle_part, double contrastive_part, const TotalLossConfig& cfg);

} // namespace posebench::losses
