#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "posebench/geometry.hpp"
#include "posebench/tensor.hpp"

namespace posebench::nn {

// Desk-scale pose network: an MLP encoder producing features (L2-normalized
// copies feed the contrastive loss) and an MLP predictor producing, per
// sample, bin scores and squashed in-bin offsets for the three angles.
struct ArchitectureConfig {
    int input_dim = 64;
    std::vector<int> encoder_hidden = {128};
    int feature_dim = 128;
    std::vector<int> predictor_hidden = {128, 64};
    // Swap the predictor stack for the full-size 800-400-200 variant.
    bool large_predictor = false;

    static constexpr int head_dim = 2 * geometry::kScoreDim; // scores + offsets

    std::vector<int> encoder_dims() const;   // input -> hidden... -> feature
    std::vector<int> predictor_dims() const; // feature -> hidden... -> head
    void validate() const;                   // ConfigError on non-positive dims

    bool operator==(const ArchitectureConfig& other) const = default;
};

struct OptimizerConfig {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    // Fraction of total training progress after which the LR is divided by 10.
    double decay_point = 0.8;

    bool operator==(const OptimizerConfig& other) const = default;
};

// All trainable state. tensors[i] carries its own gradient buffer; adam_m and
// adam_v mirror tensors elementwise. Tensor order is fixed: encoder layers
// then predictor layers, each as weight [out, in] followed by bias [out].
struct ModelParams {
    ArchitectureConfig arch;
    std::vector<std::string> names;
    std::vector<Tensor> tensors;
    std::vector<Tensor> adam_m;
    std::vector<Tensor> adam_v;
    std::int64_t step = 0;
    std::uint64_t seed = 0;

    void zero_grads();
    std::int64_t total_parameters() const;
};

// Xavier-uniform weights (limit sqrt(6/(fan_in+fan_out))), zero biases,
// drawn from per-tensor substreams of `seed`.
ModelParams init_params(const ArchitectureConfig& arch, std::uint64_t seed);

// Activation caches for the backward pass.
struct LayerTrace {
    Tensor input;      // activation into the linear layer
    Tensor activated;  // post-tanh output (empty for linear-output layers)
};

struct ForwardTrace {
    Tensor input;
    std::vector<LayerTrace> encoder;
    std::vector<LayerTrace> predictor;
    Tensor features;               // encoder output, pre-normalization
    std::vector<double> row_norms; // L2 norm per row of features
    Tensor embeddings;             // normalized features
    Tensor head_offsets;           // squashed offsets (for the sigmoid backward)
};

struct ForwardResult {
    Tensor embeddings;   // [batch, feature_dim]; zero-norm rows left all-zero
    Tensor head_scores;  // [batch, kScoreDim] pre-softmax
    Tensor head_offsets; // [batch, kScoreDim] in (0, 1)
    std::vector<std::uint8_t> zero_norm_rows; // flags rows left unnormalized
};

// input is [batch, input_dim]. Throws ShapeMismatchError on a width mismatch.
ForwardResult forward(const ModelParams& params, const Tensor& input,
                      ForwardTrace* trace = nullptr);

// Exact reverse-mode gradients for upstream d_embeddings / d_scores /
// d_offsets (d_offsets is w.r.t. the squashed offsets); accumulates into the
// parameter gradient buffers.
void backward(ModelParams& params, const ForwardTrace& trace, const Tensor& d_embeddings,
              const Tensor& d_scores, const Tensor& d_offsets);

// One Adam update from the accumulated gradients. progress in [0, 1] selects
// the stepped LR schedule; throws NonFiniteGradientError on NaN/Inf grads.
// Increments params.step.
void adam_step(ModelParams& params, const OptimizerConfig& cfg, double progress);

double effective_learning_rate(const OptimizerConfig& cfg, double progress);

// Copy row `row` of a forward result into the per-angle head view.
geometry::AngleHeadOutput head_output_at(const ForwardResult& result, std::int64_t row);

// Binary checkpoint: magic "PCKP", u32 version, u32-length-prefixed JSON
// header, then for each tensor its values, adam_m, adam_v as little-endian
// f64. Byte-identical for identical state.
void save_checkpoint(const ModelParams& params, const OptimizerConfig& optimizer,
                     const std::filesystem::path& path);

struct Checkpoint {
    ModelParams params;
    OptimizerConfig optimizer;
};

// Throws FormatError (bad magic/version/truncation/bad JSON), IoError, or
// ShapeMismatchError when `expected` is given and disagrees.
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const ArchitectureConfig* expected = nullptr);

} // namespace posebench::nn
