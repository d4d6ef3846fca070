// Times the OpenMP kernels against their serial reference implementations
// and reports the max absolute difference (expected: exactly 0, the pairs
// are bit-identical by construction).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "posebench/geometry.hpp"
#include "posebench/kernels.hpp"
#include "posebench/losses.hpp"
#include "posebench/parallel.hpp"
#include "posebench/reference.hpp"
#include "posebench/rng.hpp"
#include "posebench/synthdata.hpp"
#include "posebench/tensor.hpp"

namespace {

using namespace posebench;
using Clock = std::chrono::steady_clock;

double time_best_ms(int reps, const std::function<void()>& fn) {
    double best = 1e300;
    for (int r = 0; r < reps; ++r) {
        auto t0 = Clock::now();
        fn();
        auto t1 = Clock::now();
        best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    return best;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

void print_row(const char* name, std::int64_t work, double serial_ms, double parallel_ms,
               double diff) {
    std::printf("%-24s %12lld %12.3f %12.3f %8.2fx %10.1e\n", name,
                static_cast<long long>(work), serial_ms, parallel_ms,
                parallel_ms > 0 ? serial_ms / parallel_ms : 0.0, diff);
}

void fill_normal(rng::Rng& r, std::vector<double>& v) {
    for (double& x : v) x = r.normal();
}

void bench_linear(int reps, std::int64_t n, std::int64_t in_dim, std::int64_t out_dim) {
    rng::Rng r = rng::substream(7, "bench_linear");
    std::vector<double> x(n * in_dim), w(out_dim * in_dim), b(out_dim), dy(n * out_dim);
    fill_normal(r, x);
    fill_normal(r, w);
    fill_normal(r, b);
    fill_normal(r, dy);

    std::vector<double> y_ref(n * out_dim), y_omp(n * out_dim);
    double t_ref = time_best_ms(reps, [&] {
        ref::linear_forward(x.data(), n, in_dim, w.data(), b.data(), out_dim, y_ref.data());
    });
    double t_omp = time_best_ms(reps, [&] {
        kernels::linear_forward(x.data(), n, in_dim, w.data(), b.data(), out_dim, y_omp.data());
    });
    print_row("linear_forward", n * in_dim * out_dim, t_ref, t_omp, max_abs_diff(y_ref, y_omp));

    std::vector<double> dx_ref(n * in_dim), dx_omp(n * in_dim);
    t_ref = time_best_ms(reps, [&] {
        ref::linear_backward_input(dy.data(), n, out_dim, w.data(), in_dim, dx_ref.data());
    });
    t_omp = time_best_ms(reps, [&] {
        kernels::linear_backward_input(dy.data(), n, out_dim, w.data(), in_dim, dx_omp.data());
    });
    print_row("linear_backward_input", n * in_dim * out_dim, t_ref, t_omp,
              max_abs_diff(dx_ref, dx_omp));

    std::vector<double> dw_ref(out_dim * in_dim), db_ref(out_dim);
    std::vector<double> dw_omp(out_dim * in_dim), db_omp(out_dim);
    t_ref = time_best_ms(reps, [&] {
        std::fill(dw_ref.begin(), dw_ref.end(), 0.0);
        std::fill(db_ref.begin(), db_ref.end(), 0.0);
        ref::linear_backward_params(dy.data(), x.data(), n, in_dim, out_dim, dw_ref.data(),
                                    db_ref.data());
    });
    t_omp = time_best_ms(reps, [&] {
        std::fill(dw_omp.begin(), dw_omp.end(), 0.0);
        std::fill(db_omp.begin(), db_omp.end(), 0.0);
        kernels::linear_backward_params(dy.data(), x.data(), n, in_dim, out_dim, dw_omp.data(),
                                        db_omp.data());
    });
    print_row("linear_backward_params", n * in_dim * out_dim, t_ref, t_omp,
              std::max(max_abs_diff(dw_ref, dw_omp), max_abs_diff(db_ref, db_omp)));
}

void bench_contrastive(int reps, std::int64_t n, std::int64_t dim) {
    rng::Rng r = rng::substream(7, "bench_contrastive");
    losses::ContrastBatch batch;
    batch.size = n;
    batch.dim = dim;
    batch.query_embeddings.resize(n * dim);
    batch.key_embeddings.resize(n * dim);
    fill_normal(r, batch.query_embeddings);
    fill_normal(r, batch.key_embeddings);
    for (std::int64_t q = 0; q < n; ++q) {
        auto normalize = [dim](double* row) {
            double s = 0.0;
            for (std::int64_t i = 0; i < dim; ++i) s += row[i] * row[i];
            s = std::sqrt(s);
            for (std::int64_t i = 0; i < dim; ++i) row[i] /= s;
        };
        normalize(batch.query_embeddings.data() + q * dim);
        normalize(batch.key_embeddings.data() + q * dim);
        geometry::PoseLabel pose = geometry::PoseLabel::make(
            r.uniform(-3.0, 3.0), r.uniform(-1.0, 1.0), r.uniform(-3.0, 3.0));
        batch.poses.push_back(geometry::euler_to_matrix(pose));
    }
    losses::ContrastiveConfig cfg;

    losses::ContrastGrad g_ref, g_omp;
    double l_ref = 0.0, l_omp = 0.0;
    double t_ref =
        time_best_ms(reps, [&] { l_ref = ref::batch_contrastive_loss(batch, cfg, &g_ref); });
    double t_omp =
        time_best_ms(reps, [&] { l_omp = losses::batch_contrastive_loss(batch, cfg, &g_omp); });
    double diff = std::abs(l_ref - l_omp);
    diff = std::max(diff, max_abs_diff(g_ref.d_query, g_omp.d_query));
    diff = std::max(diff, max_abs_diff(g_ref.d_keys, g_omp.d_keys));
    print_row("batch_contrastive_loss", n * n * dim, t_ref, t_omp, diff);
}

void bench_render(int reps, int count) {
    synthdata::RendererConfig cfg;
    synthdata::SplitSpec split;
    split.seen_classes = {0, 1, 2, 3, 4, 5, 6, 7};
    split.unseen_classes = {8, 9};
    split.train_count = count;
    split.val_count = 2;
    synthdata::Dataset dataset = synthdata::generate_dataset(cfg, split);
    synthdata::Renderer renderer(dataset.renderer);
    std::vector<const synthdata::SampleRecord*> records = dataset.select(synthdata::Split::train);

    nn::Tensor out_ref, out_omp;
    double t_ref = time_best_ms(reps, [&] { ref::render_records(renderer, records, out_ref); });
    double t_omp = time_best_ms(reps, [&] { renderer.render_records(records, out_omp); });
    print_row("render_records", static_cast<std::int64_t>(count) * cfg.input_dim, t_ref, t_omp,
              max_abs_diff(out_ref.values, out_omp.values));
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"posebench_bench: OpenMP kernels vs serial reference"};
    bool quick = false;
    int threads = 0;
    app.add_flag("--quick", quick, "Small sizes, few repetitions");
    app.add_option("--threads", threads, "Worker threads (0 = library default)");
    CLI11_PARSE(app, argc, argv);

    if (threads > 0) par::set_threads(threads);
    std::printf("threads: %d\n", par::max_threads());
    std::printf("%-24s %12s %12s %12s %9s %10s\n", "kernel", "work", "serial_ms", "parallel_ms",
                "speedup", "max_diff");

    const int reps = quick ? 3 : 7;
    if (quick) {
        bench_linear(reps, 256, 128, 128);
        bench_contrastive(reps, 64, 64);
        bench_render(reps, 512);
    } else {
        bench_linear(reps, 2048, 256, 256);
        bench_contrastive(reps, 256, 128);
        bench_render(reps, 4096);
    }
    return 0;
}
