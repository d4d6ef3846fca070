#include "posebench/nn.hpp"

#include <cmath>
#include <string>

#include "posebench/kernels.hpp"
#include "posebench/parallel.hpp"
#include "posebench/rng.hpp"

namespace posebench::nn {

namespace {

struct LayerShape {
    int in = 0;
    int out = 0;
    bool activated = false; // tanh after the linear
};

std::vector<LayerShape> stack_shapes(const std::vector<int>& dims) {
    std::vector<LayerShape> shapes;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        LayerShape s;
        s.in = dims[l];
        s.out = dims[l + 1];
        s.activated = (l + 2 < dims.size()); // output layer of a stack stays linear
        shapes.push_back(s);
    }
    return shapes;
}

void tanh_rows(const Tensor& z, Tensor& y) {
    const std::int64_t n = z.numel();
    for (std::int64_t i = 0; i < n; ++i) {
        y.values[static_cast<std::size_t>(i)] =
            std::tanh(z.values[static_cast<std::size_t>(i)]);
    }
}

Tensor linear_layer(const Tensor& x, const Tensor& w, const Tensor& b) {
    Tensor y = Tensor::zeros({x.rows(), w.rows()});
    kernels::linear_forward(x.data(), x.rows(), x.cols(), w.data(), b.data(), w.rows(),
                            y.data());
    return y;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

} // namespace

std::vector<int> ArchitectureConfig::encoder_dims() const {
    std::vector<int> dims;
    dims.push_back(input_dim);
    dims.insert(dims.end(), encoder_hidden.begin(), encoder_hidden.end());
    dims.push_back(feature_dim);
    return dims;
}

std::vector<int> ArchitectureConfig::predictor_dims() const {
    std::vector<int> dims;
    dims.push_back(feature_dim);
    if (large_predictor) {
        dims.insert(dims.end(), {800, 400, 200});
    } else {
        dims.insert(dims.end(), predictor_hidden.begin(), predictor_hidden.end());
    }
    dims.push_back(head_dim);
    return dims;
}

void ArchitectureConfig::validate() const {
    for (int d : encoder_dims()) {
        if (d <= 0) throw ConfigError("architecture: encoder dims must be positive");
    }
    for (int d : predictor_dims()) {
        if (d <= 0) throw ConfigError("architecture: predictor dims must be positive");
    }
}

void ModelParams::zero_grads() {
    for (auto& t : tensors) t.zero_grad();
}

std::int64_t ModelParams::total_parameters() const {
    std::int64_t n = 0;
    for (const auto& t : tensors) n += t.numel();
    return n;
}

ModelParams init_params(const ArchitectureConfig& arch, std::uint64_t seed) {
    arch.validate();
    ModelParams p;
    p.arch = arch;
    p.seed = seed;
    p.step = 0;

    std::uint64_t tensor_index = 0;
    auto add_stack = [&](const char* prefix, const std::vector<int>& dims) {
        const auto shapes = stack_shapes(dims);
        for (std::size_t l = 0; l < shapes.size(); ++l) {
            const auto& s = shapes[l];
            Tensor w = Tensor::zeros({s.out, s.in});
            rng::Rng stream = rng::substream(seed, "init", tensor_index++);
            const double limit = std::sqrt(6.0 / static_cast<double>(s.in + s.out));
            for (auto& v : w.values) v = stream.uniform(-limit, limit);
            Tensor b = Tensor::zeros({s.out});
            ++tensor_index; // biases are all-zero but still own a stream slot

            const std::string base = std::string(prefix) + "." + std::to_string(l);
            auto push = [&](const char* suffix, Tensor&& t) {
                t.alloc_grad();
                p.names.push_back(base + "." + suffix);
                p.adam_m.push_back(Tensor::zeros(t.shape));
                p.adam_v.push_back(Tensor::zeros(t.shape));
                p.tensors.push_back(std::move(t));
            };
            push("weight", std::move(w));
            push("bias", std::move(b));
        }
    };
    add_stack("encoder", arch.encoder_dims());
    add_stack("predictor", arch.predictor_dims());
    return p;
}

ForwardResult forward(const ModelParams& params, const Tensor& input, ForwardTrace* trace) {
    const auto& arch = params.arch;
    if (input.rows() < 1) {
        throw ShapeMismatchError("forward: empty batch");
    }
    if (input.cols() != arch.input_dim) {
        throw ShapeMismatchError("forward: input width " + std::to_string(input.cols()) +
                                 " does not match input_dim " + std::to_string(arch.input_dim));
    }
    const std::int64_t batch = input.rows();
    const auto enc_shapes = stack_shapes(arch.encoder_dims());
    const auto pred_shapes = stack_shapes(arch.predictor_dims());
    if (params.tensors.size() != 2 * (enc_shapes.size() + pred_shapes.size())) {
        throw ShapeMismatchError("forward: parameter list does not match architecture");
    }

    if (trace != nullptr) {
        trace->input = input;
        trace->encoder.clear();
        trace->predictor.clear();
    }

    std::size_t t = 0;
    auto run_stack = [&](const std::vector<LayerShape>& shapes, Tensor x,
                         std::vector<LayerTrace>* traces) {
        for (const auto& s : shapes) {
            const Tensor& w = params.tensors[t];
            const Tensor& b = params.tensors[t + 1];
            t += 2;
            Tensor z = linear_layer(x, w, b);
            LayerTrace lt;
            if (traces != nullptr) lt.input = x;
            if (s.activated) {
                Tensor y = Tensor::zeros({batch, s.out});
                tanh_rows(z, y);
                if (traces != nullptr) {
                    lt.activated = y;
                    traces->push_back(std::move(lt));
                }
                x = std::move(y);
            } else {
                if (traces != nullptr) traces->push_back(std::move(lt));
                x = std::move(z);
            }
        }
        return x;
    };

    Tensor features = run_stack(enc_shapes, input, trace != nullptr ? &trace->encoder : nullptr);

    // L2-normalize each feature row for the contrastive branch; the predictor
    // consumes the raw features.
    ForwardResult out;
    out.embeddings = Tensor::zeros({batch, arch.feature_dim});
    out.zero_norm_rows.assign(static_cast<std::size_t>(batch), 0);
    std::vector<double> norms(static_cast<std::size_t>(batch), 0.0);
    for (std::int64_t r = 0; r < batch; ++r) {
        double sq = 0.0;
        for (std::int64_t i = 0; i < arch.feature_dim; ++i) {
            const double v = features.at(r, i);
            sq += v * v;
        }
        const double norm = std::sqrt(sq);
        norms[static_cast<std::size_t>(r)] = norm;
        if (norm > 0.0) {
            const double inv = 1.0 / norm;
            for (std::int64_t i = 0; i < arch.feature_dim; ++i) {
                out.embeddings.at(r, i) = features.at(r, i) * inv;
            }
        } else {
            out.zero_norm_rows[static_cast<std::size_t>(r)] = 1;
            for (std::int64_t i = 0; i < arch.feature_dim; ++i) {
                out.embeddings.at(r, i) = features.at(r, i);
            }
        }
    }

    Tensor raw = run_stack(pred_shapes, features, trace != nullptr ? &trace->predictor : nullptr);

    out.head_scores = Tensor::zeros({batch, geometry::kScoreDim});
    out.head_offsets = Tensor::zeros({batch, geometry::kScoreDim});
    for (std::int64_t r = 0; r < batch; ++r) {
        for (int j = 0; j < geometry::kScoreDim; ++j) {
            out.head_scores.at(r, j) = raw.at(r, j);
            out.head_offsets.at(r, j) = sigmoid(raw.at(r, geometry::kScoreDim + j));
        }
    }

    if (trace != nullptr) {
        trace->features = features;
        trace->row_norms = norms;
        trace->embeddings = out.embeddings;
        trace->head_offsets = out.head_offsets;
    }
    return out;
}

void backward(ModelParams& params, const ForwardTrace& trace, const Tensor& d_embeddings,
              const Tensor& d_scores, const Tensor& d_offsets) {
    const auto& arch = params.arch;
    const std::int64_t batch = trace.input.rows();
    const auto enc_shapes = stack_shapes(arch.encoder_dims());
    const auto pred_shapes = stack_shapes(arch.predictor_dims());
    if (d_embeddings.rows() != batch || d_embeddings.cols() != arch.feature_dim ||
        d_scores.rows() != batch || d_scores.cols() != geometry::kScoreDim ||
        d_offsets.rows() != batch || d_offsets.cols() != geometry::kScoreDim) {
        throw ShapeMismatchError("backward: upstream gradient shapes do not match the trace");
    }
    for (auto& t : params.tensors) {
        if (!t.has_grad()) t.alloc_grad();
    }

    // Head assembly: scores pass through, offsets undo the logistic squash.
    Tensor d_raw = Tensor::zeros({batch, ArchitectureConfig::head_dim});
    for (std::int64_t r = 0; r < batch; ++r) {
        for (int j = 0; j < geometry::kScoreDim; ++j) {
            const double off = trace.head_offsets.at(r, j);
            d_raw.at(r, j) = d_scores.at(r, j);
            d_raw.at(r, geometry::kScoreDim + j) = d_offsets.at(r, j) * off * (1.0 - off);
        }
    }

    // Walk one stack top-down; returns the gradient w.r.t. the stack input.
    // first_tensor indexes the stack's first weight inside params.tensors.
    auto back_stack = [&](const std::vector<LayerShape>& shapes,
                          const std::vector<LayerTrace>& traces, std::size_t first_tensor,
                          Tensor dy, bool need_input_grad) {
        for (std::size_t li = shapes.size(); li-- > 0;) {
            const auto& s = shapes[li];
            const auto& lt = traces[li];
            Tensor dz = std::move(dy);
            if (s.activated) {
                for (std::int64_t i = 0; i < dz.numel(); ++i) {
                    const double y = lt.activated.values[static_cast<std::size_t>(i)];
                    dz.values[static_cast<std::size_t>(i)] *= 1.0 - y * y;
                }
            }
            Tensor& w = params.tensors[first_tensor + 2 * li];
            Tensor& b = params.tensors[first_tensor + 2 * li + 1];
            kernels::linear_backward_params(dz.data(), lt.input.data(), batch, s.in, s.out,
                                            w.grad.data(), b.grad.data());
            if (li == 0 && !need_input_grad) {
                return Tensor();
            }
            Tensor dx = Tensor::zeros({batch, s.in});
            kernels::linear_backward_input(dz.data(), batch, s.out, w.data(), s.in, dx.data());
            dy = std::move(dx);
        }
        return dy;
    };

    const std::size_t pred_first = 2 * enc_shapes.size();
    Tensor d_feat = back_stack(pred_shapes, trace.predictor, pred_first, std::move(d_raw), true);

    // Normalization backward: dv = (g - (g.e) e) / norm; zero-norm rows pass
    // the upstream gradient through unchanged.
    for (std::int64_t r = 0; r < batch; ++r) {
        const double norm = trace.row_norms[static_cast<std::size_t>(r)];
        if (norm > 0.0) {
            double gdot = 0.0;
            for (std::int64_t i = 0; i < arch.feature_dim; ++i) {
                gdot += d_embeddings.at(r, i) * trace.embeddings.at(r, i);
            }
            const double inv = 1.0 / norm;
            for (std::int64_t i = 0; i < arch.feature_dim; ++i) {
                d_feat.at(r, i) +=
                    (d_embeddings.at(r, i) - gdot * trace.embeddings.at(r, i)) * inv;
            }
        } else {
            for (std::int64_t i = 0; i < arch.feature_dim; ++i) {
                d_feat.at(r, i) += d_embeddings.at(r, i);
            }
        }
    }

    back_stack(enc_shapes, trace.encoder, 0, std::move(d_feat), false);
}

double effective_learning_rate(const OptimizerConfig& cfg, double progress) {
    return progress >= cfg.decay_point ? cfg.learning_rate * 0.1 : cfg.learning_rate;
}

void adam_step(ModelParams& params, const OptimizerConfig& cfg, double progress) {
    for (std::size_t t = 0; t < params.tensors.size(); ++t) {
        const auto& g = params.tensors[t].grad;
        if (g.size() != params.tensors[t].values.size()) {
            throw ShapeMismatchError("adam_step: missing gradient for " + params.names[t]);
        }
        for (double v : g) {
            if (!std::isfinite(v)) {
                throw NonFiniteGradientError("adam_step: non-finite gradient in " +
                                             params.names[t]);
            }
        }
    }

    const std::int64_t step = params.step + 1;
    const double lr = effective_learning_rate(cfg, progress);
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));

    for (std::size_t t = 0; t < params.tensors.size(); ++t) {
        Tensor& p = params.tensors[t];
        Tensor& m = params.adam_m[t];
        Tensor& v = params.adam_v[t];
        par::for_each_index(p.numel(), [&](std::int64_t i) {
            const auto idx = static_cast<std::size_t>(i);
            const double grad = p.grad[idx];
            m.values[idx] = cfg.beta1 * m.values[idx] + (1.0 - cfg.beta1) * grad;
            v.values[idx] = cfg.beta2 * v.values[idx] + (1.0 - cfg.beta2) * grad * grad;
            const double mhat = m.values[idx] / bc1;
            const double vhat = v.values[idx] / bc2;
            p.values[idx] -= lr * mhat / (std::sqrt(vhat) + cfg.epsilon);
        });
    }
    params.step = step;
}

geometry::AngleHeadOutput head_output_at(const ForwardResult& result, std::int64_t row) {
    if (row < 0 || row >= result.head_scores.rows()) {
        throw ShapeMismatchError("head_output_at: row out of range");
    }
    geometry::AngleHeadOutput head = geometry::AngleHeadOutput::zeros();
    for (int k = 0; k < 3; ++k) {
        const auto kind = static_cast<geometry::AngleKind>(k);
        const int base = geometry::score_offset(kind);
        const int count = geometry::bin_count(kind);
        for (int i = 0; i < count; ++i) {
            head.bin_scores[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)] =
                result.head_scores.at(row, base + i);
            head.bin_offsets[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)] =
                result.head_offsets.at(row, base + i);
        }
    }
    return head;
}

} // namespace posebench::nn
