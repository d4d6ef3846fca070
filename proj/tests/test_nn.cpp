#include <doctest.h>

#include <posebench/nn.hpp>
#include <posebench/rng.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

using namespace posebench;
using namespace posebench::nn;

namespace {

// Small but non-trivial architecture so tests stay fast.
ArchitectureConfig tiny_arch() {
    ArchitectureConfig a;
    a.input_dim = 5;
    a.encoder_hidden = {6};
    a.feature_dim = 4;
    a.predictor_hidden = {7};
    return a;
}

Tensor random_input(std::int64_t rows, std::int64_t cols, rng::Rng& r) {
    Tensor x = Tensor::zeros({rows, cols});
    for (double& v : x.values) v = r.normal();
    return x;
}

std::filesystem::path temp_file(const char* name) {
    return std::filesystem::temp_directory_path() / name;
}

std::string file_bytes(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

} // namespace

TEST_CASE("ArchitectureConfig: dim chains and validation") {
    const ArchitectureConfig a = tiny_arch();
    CHECK(a.encoder_dims() == std::vector<int>{5, 6, 4});
    CHECK(a.predictor_dims() == std::vector<int>{4, 7, ArchitectureConfig::head_dim});

    ArchitectureConfig large = tiny_arch();
    large.large_predictor = true;
    CHECK(large.predictor_dims() ==
          std::vector<int>{4, 800, 400, 200, ArchitectureConfig::head_dim});

    ArchitectureConfig bad = tiny_arch();
    bad.input_dim = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = tiny_arch();
    bad.encoder_hidden = {16, -2};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("init_params: deterministic in the seed, Xavier bounds, zero biases") {
    const ArchitectureConfig arch = tiny_arch();
    const ModelParams a = init_params(arch, 7);
    const ModelParams b = init_params(arch, 7);
    const ModelParams c = init_params(arch, 8);

    REQUIRE(a.tensors.size() == 8); // two stacks, two layers each, weight+bias
    REQUIRE(a.names.size() == a.tensors.size());
    CHECK(a.total_parameters() == 1059);
    CHECK(a.step == 0);

    bool any_diff = false;
    for (std::size_t t = 0; t < a.tensors.size(); ++t) {
        CHECK(a.tensors[t].values == b.tensors[t].values); // same seed, same bits
        if (a.tensors[t].values != c.tensors[t].values) any_diff = true;
        for (double v : a.adam_m[t].values) CHECK(v == 0.0);
        for (double v : a.adam_v[t].values) CHECK(v == 0.0);
    }
    CHECK(any_diff); // a different seed must actually change the weights

    for (std::size_t t = 0; t < a.tensors.size(); ++t) {
        const Tensor& w = a.tensors[t];
        if (a.names[t].find("bias") != std::string::npos) {
            for (double v : w.values) CHECK(v == 0.0);
        } else {
            const double limit =
                std::sqrt(6.0 / static_cast<double>(w.shape[0] + w.shape[1]));
            for (double v : w.values) {
                CHECK(std::abs(v) <= limit);
            }
        }
    }
}

TEST_CASE("forward: all-zero parameters flag zero-norm rows and centre the offsets") {
    ModelParams params = init_params(tiny_arch(), 3);
    for (auto& t : params.tensors) t.values.assign(t.values.size(), 0.0);

    rng::Rng r = rng::substream(101, "nn_zero");
    const Tensor x = random_input(4, 5, r);
    const ForwardResult out = forward(params, x);

    for (std::int64_t row = 0; row < 4; ++row) {
        CHECK(out.zero_norm_rows[static_cast<std::size_t>(row)] == 1);
        for (std::int64_t i = 0; i < 4; ++i) CHECK(out.embeddings.at(row, i) == 0.0);
        for (int j = 0; j < geometry::kScoreDim; ++j) {
            CHECK(out.head_scores.at(row, j) == 0.0);
            CHECK(out.head_offsets.at(row, j) == 0.5);
        }
    }
}

TEST_CASE("forward: embeddings are unit rows, offsets stay inside (0, 1)") {
    const ModelParams params = init_params(tiny_arch(), 5);
    rng::Rng r = rng::substream(103, "nn_norm");
    const Tensor x = random_input(16, 5, r);
    const ForwardResult out = forward(params, x);
    for (std::int64_t row = 0; row < 16; ++row) {
        CHECK(out.zero_norm_rows[static_cast<std::size_t>(row)] == 0);
        double sq = 0.0;
        for (std::int64_t i = 0; i < 4; ++i) {
            const double v = out.embeddings.at(row, i);
            sq += v * v;
        }
        CHECK(std::sqrt(sq) == doctest::Approx(1.0).epsilon(1e-12));
        for (int j = 0; j < geometry::kScoreDim; ++j) {
            CHECK(out.head_offsets.at(row, j) > 0.0);
            CHECK(out.head_offsets.at(row, j) < 1.0);
        }
    }
}

TEST_CASE("forward: each batch row equals the same row run alone, bit for bit") {
    const ModelParams params = init_params(tiny_arch(), 9);
    rng::Rng r = rng::substream(107, "nn_rows");
    const Tensor batch = random_input(8, 5, r);
    const ForwardResult full = forward(params, batch);
    for (std::int64_t row = 0; row < 8; ++row) {
        Tensor one = Tensor::zeros({1, 5});
        for (std::int64_t j = 0; j < 5; ++j) one.at(0, j) = batch.at(row, j);
        const ForwardResult single = forward(params, one);
        for (std::int64_t i = 0; i < 4; ++i) {
            CHECK(single.embeddings.at(0, i) == full.embeddings.at(row, i));
        }
        for (int j = 0; j < geometry::kScoreDim; ++j) {
            CHECK(single.head_scores.at(0, j) == full.head_scores.at(row, j));
            CHECK(single.head_offsets.at(0, j) == full.head_offsets.at(row, j));
        }
    }
}

TEST_CASE("forward: width mismatch and empty batch raise") {
    const ModelParams params = init_params(tiny_arch(), 1);
    CHECK_THROWS_AS((void)forward(params, Tensor::zeros({2, 4})), ShapeMismatchError);
    CHECK_THROWS_AS((void)forward(params, Tensor::zeros({0, 5})), ShapeMismatchError);
}

TEST_CASE("backward: zero upstream gradients leave zero parameter gradients") {
    ModelParams params = init_params(tiny_arch(), 11);
    rng::Rng r = rng::substream(109, "nn_zero_up");
    const Tensor x = random_input(3, 5, r);
    ForwardTrace trace;
    (void)forward(params, x, &trace);
    params.zero_grads();
    backward(params, trace, Tensor::zeros({3, 4}), Tensor::zeros({3, geometry::kScoreDim}),
             Tensor::zeros({3, geometry::kScoreDim}));
    for (const auto& t : params.tensors) {
        for (double g : t.grad) CHECK(g == 0.0);
    }
}

TEST_CASE("backward: duplicating a sample exactly doubles the parameter gradients") {
    ModelParams params = init_params(tiny_arch(), 13);
    rng::Rng r = rng::substream(113, "nn_double");
    const Tensor x1 = random_input(1, 5, r);
    Tensor x2 = Tensor::zeros({2, 5});
    for (std::int64_t j = 0; j < 5; ++j) {
        x2.at(0, j) = x1.at(0, j);
        x2.at(1, j) = x1.at(0, j);
    }

    auto upstream = [&r](std::int64_t rows, std::int64_t cols) {
        Tensor t = Tensor::zeros({rows, cols});
        for (double& v : t.values) v = r.normal();
        return t;
    };
    const Tensor ge = upstream(1, 4);
    const Tensor gs = upstream(1, geometry::kScoreDim);
    const Tensor go = upstream(1, geometry::kScoreDim);
    auto stacked = [](const Tensor& t) {
        Tensor s = Tensor::zeros({2, t.cols()});
        for (std::int64_t j = 0; j < t.cols(); ++j) {
            s.at(0, j) = t.at(0, j);
            s.at(1, j) = t.at(0, j);
        }
        return s;
    };

    ForwardTrace tr1;
    (void)forward(params, x1, &tr1);
    params.zero_grads();
    backward(params, tr1, ge, gs, go);
    std::vector<std::vector<double>> single;
    for (const auto& t : params.tensors) single.push_back(t.grad);

    ForwardTrace tr2;
    (void)forward(params, x2, &tr2);
    params.zero_grads();
    backward(params, tr2, stacked(ge), stacked(gs), stacked(go));
    for (std::size_t t = 0; t < params.tensors.size(); ++t) {
        for (std::size_t i = 0; i < single[t].size(); ++i) {
            CHECK(params.tensors[t].grad[i] == 2.0 * single[t][i]);
        }
    }
}

TEST_CASE("backward: parameter gradients match central differences") {
    ModelParams params = init_params(tiny_arch(), 17);
    rng::Rng r = rng::substream(127, "nn_fd");
    const Tensor x = random_input(3, 5, r);

    // Linear functional of the outputs; its coefficients are the upstream grads.
    Tensor ce = Tensor::zeros({3, 4});
    Tensor cs = Tensor::zeros({3, geometry::kScoreDim});
    Tensor co = Tensor::zeros({3, geometry::kScoreDim});
    for (double& v : ce.values) v = r.normal();
    for (double& v : cs.values) v = r.normal();
    for (double& v : co.values) v = r.normal();

    auto value = [&]() {
        const ForwardResult out = forward(params, x);
        double s = 0.0;
        for (std::size_t i = 0; i < out.embeddings.values.size(); ++i) {
            s += ce.values[i] * out.embeddings.values[i];
        }
        for (std::size_t i = 0; i < out.head_scores.values.size(); ++i) {
            s += cs.values[i] * out.head_scores.values[i];
            s += co.values[i] * out.head_offsets.values[i];
        }
        return s;
    };

    ForwardTrace trace;
    (void)forward(params, x, &trace);
    params.zero_grads();
    backward(params, trace, ce, cs, co);

    const double h = 1e-5;
    for (std::size_t t = 0; t < params.tensors.size(); ++t) {
        Tensor& w = params.tensors[t];
        const std::size_t stride = w.values.size() > 12 ? w.values.size() / 12 : 1;
        for (std::size_t i = 0; i < w.values.size(); i += stride) {
            const double keep = w.values[i];
            w.values[i] = keep + h;
            const double up = value();
            w.values[i] = keep - h;
            const double dn = value();
            w.values[i] = keep;
            const double fd = (up - dn) / (2.0 * h);
            CHECK(w.grad[i] == doctest::Approx(fd).epsilon(1e-5).scale(1.0));
        }
    }
}

TEST_CASE("backward: upstream shape mismatch raises") {
    ModelParams params = init_params(tiny_arch(), 19);
    rng::Rng r = rng::substream(131, "nn_shape");
    const Tensor x = random_input(2, 5, r);
    ForwardTrace trace;
    (void)forward(params, x, &trace);
    CHECK_THROWS_AS(backward(params, trace, Tensor::zeros({2, 3}),
                             Tensor::zeros({2, geometry::kScoreDim}),
                             Tensor::zeros({2, geometry::kScoreDim})),
                    ShapeMismatchError);
}

TEST_CASE("adam_step: first step matches the closed form") {
    ModelParams params = init_params(tiny_arch(), 23);
    params.zero_grads();
    const double before = params.tensors[0].values[0];
    params.tensors[0].grad[0] = 1.0;

    OptimizerConfig cfg;
    adam_step(params, cfg, 0.0);

    // t=1: mhat = g, vhat = g^2, update = lr * g / (|g| + eps).
    const double expected = before - 1e-4 * 1.0 / (1.0 + 1e-8);
    CHECK(params.tensors[0].values[0] == doctest::Approx(expected).epsilon(1e-12));
    CHECK(params.adam_m[0].values[0] == doctest::Approx(0.1).epsilon(1e-15));
    CHECK(params.adam_v[0].values[0] == doctest::Approx(0.001).epsilon(1e-12));
    CHECK(params.step == 1);

    // Zero-grad coordinates stay put.
    CHECK(params.tensors[0].values[1] == init_params(tiny_arch(), 23).tensors[0].values[1]);
}

TEST_CASE("adam_step: non-finite gradients raise before touching parameters") {
    ModelParams params = init_params(tiny_arch(), 29);
    params.zero_grads();
    const std::vector<double> before = params.tensors[2].values;
    params.tensors[2].grad[0] = std::nan("");
    CHECK_THROWS_AS(adam_step(params, OptimizerConfig{}, 0.0), NonFiniteGradientError);
    CHECK(params.tensors[2].values == before);
    CHECK(params.step == 0);
}

TEST_CASE("effective_learning_rate: steps down by 10x at the decay point") {
    OptimizerConfig cfg;
    CHECK(effective_learning_rate(cfg, 0.0) == 1e-4);
    CHECK(effective_learning_rate(cfg, 0.79) == 1e-4);
    CHECK(effective_learning_rate(cfg, 0.8) == doctest::Approx(1e-5).epsilon(1e-15));
    CHECK(effective_learning_rate(cfg, 1.0) == doctest::Approx(1e-5).epsilon(1e-15));
    cfg.decay_point = 0.5;
    CHECK(effective_learning_rate(cfg, 0.49) == 1e-4);
    CHECK(effective_learning_rate(cfg, 0.5) == doctest::Approx(1e-5).epsilon(1e-15));
}

TEST_CASE("head_output_at: slices one row into the per-angle view") {
    const ModelParams params = init_params(tiny_arch(), 31);
    rng::Rng r = rng::substream(137, "nn_head");
    const Tensor x = random_input(3, 5, r);
    const ForwardResult out = forward(params, x);
    const geometry::AngleHeadOutput head = head_output_at(out, 1);
    for (int k = 0; k < 3; ++k) {
        const auto kind = static_cast<geometry::AngleKind>(k);
        const int base = geometry::score_offset(kind);
        for (int i = 0; i < geometry::bin_count(kind); ++i) {
            CHECK(head.bin_scores[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)] ==
                  out.head_scores.at(1, base + i));
            CHECK(head.bin_offsets[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)] ==
                  out.head_offsets.at(1, base + i));
        }
    }
    CHECK_THROWS_AS((void)head_output_at(out, 3), ShapeMismatchError);
    CHECK_THROWS_AS((void)head_output_at(out, -1), ShapeMismatchError);
}

TEST_CASE("checkpoint: save/load roundtrip preserves every bit of state") {
    ModelParams params = init_params(tiny_arch(), 37);
    rng::Rng r = rng::substream(139, "nn_ckpt");
    // Take one real optimizer step so m/v/step are non-trivial.
    const Tensor x = random_input(4, 5, r);
    ForwardTrace trace;
    (void)forward(params, x, &trace);
    params.zero_grads();
    Tensor ge = Tensor::zeros({4, 4});
    Tensor gs = Tensor::zeros({4, geometry::kScoreDim});
    Tensor go = Tensor::zeros({4, geometry::kScoreDim});
    for (double& v : ge.values) v = r.normal();
    for (double& v : gs.values) v = r.normal();
    for (double& v : go.values) v = r.normal();
    backward(params, trace, ge, gs, go);
    OptimizerConfig opt;
    opt.learning_rate = 3e-4;
    adam_step(params, opt, 0.0);

    const auto path = temp_file("posebench_nn_ckpt_a.bin");
    const auto path2 = temp_file("posebench_nn_ckpt_b.bin");
    save_checkpoint(params, opt, path);
    const Checkpoint loaded = load_checkpoint(path);

    CHECK(loaded.params.arch == params.arch);
    CHECK(loaded.params.step == params.step);
    CHECK(loaded.params.seed == params.seed);
    CHECK(loaded.params.names == params.names);
    CHECK(loaded.optimizer == opt);
    REQUIRE(loaded.params.tensors.size() == params.tensors.size());
    for (std::size_t t = 0; t < params.tensors.size(); ++t) {
        CHECK(loaded.params.tensors[t].shape == params.tensors[t].shape);
        CHECK(loaded.params.tensors[t].values == params.tensors[t].values);
        CHECK(loaded.params.adam_m[t].values == params.adam_m[t].values);
        CHECK(loaded.params.adam_v[t].values == params.adam_v[t].values);
    }

    // Saving the loaded state again produces byte-identical files.
    save_checkpoint(loaded.params, loaded.optimizer, path2);
    CHECK(file_bytes(path) == file_bytes(path2));

    std::filesystem::remove(path);
    std::filesystem::remove(path2);
}

TEST_CASE("checkpoint: expected architecture is enforced on load") {
    const ModelParams params = init_params(tiny_arch(), 41);
    const auto path = temp_file("posebench_nn_ckpt_arch.bin");
    save_checkpoint(params, OptimizerConfig{}, path);

    ArchitectureConfig other = tiny_arch();
    other.feature_dim = 8;
    CHECK_THROWS_AS((void)load_checkpoint(path, &other), ShapeMismatchError);

    ArchitectureConfig same = tiny_arch();
    CHECK_NOTHROW((void)load_checkpoint(path, &same));
    std::filesystem::remove(path);
}

TEST_CASE("checkpoint: missing, corrupt, and truncated files raise") {
    CHECK_THROWS_AS((void)load_checkpoint(temp_file("posebench_nn_ckpt_missing.bin")),
                    IoError);

    const ModelParams params = init_params(tiny_arch(), 43);
    const auto path = temp_file("posebench_nn_ckpt_bad.bin");
    save_checkpoint(params, OptimizerConfig{}, path);

    // Corrupt the magic.
    std::string bytes = file_bytes(path);
    bytes[0] = 'X';
    {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
    CHECK_THROWS_AS((void)load_checkpoint(path), FormatError);

    // Truncate to half.
    save_checkpoint(params, OptimizerConfig{}, path);
    bytes = file_bytes(path);
    {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    }
    CHECK_THROWS_AS((void)load_checkpoint(path), FormatError);
    std::filesystem::remove(path);
}
