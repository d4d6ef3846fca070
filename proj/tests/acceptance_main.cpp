// Release gates for posebench. Each gate prints exactly one [PASS]/[FAIL]
// line with its measured numbers; the process exits nonzero when any gate
// fails. Gates 5-8 train real models on the default benchmark, so the whole
// suite takes a few minutes on one core (progress goes to stderr).

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <posebench/config.hpp>
#include <posebench/geometry.hpp>
#include <posebench/gradcheck.hpp>
#include <posebench/losses.hpp>
#include <posebench/nn.hpp>
#include <posebench/pipeline.hpp>
#include <posebench/rng.hpp>
#include <posebench/synthdata.hpp>

using namespace posebench;
using geometry::kPi;
using geometry::PoseLabel;
using geometry::RotationMatrix;

namespace {

constexpr int kGateCount = 9;
int g_gate_index = 0;
int g_failures = 0;

std::string strf(const char* fmt, ...) {
    char buf[512];
    va_list args;
    va_start(args, fmt);
    std::vsnprintf(buf, sizeof(buf), fmt, args);
    va_end(args);
    return std::string(buf);
}

void gate(const char* name, bool pass, const std::string& detail) {
    ++g_gate_index;
    std::printf("[%s] gate %d/%d %-18s %s\n", pass ? "PASS" : "FAIL", g_gate_index, kGateCount,
                name, detail.c_str());
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

void progress(const std::string& line) {
    std::fprintf(stderr, "  .. %s\n", line.c_str());
    std::fflush(stderr);
}

struct Stopwatch {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
};

// Lower-middle median, the convention used by the evaluation reports.
double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[(v.size() - 1) / 2];
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

// ---------------------------------------------------------------------------
// Independent rotation-angle oracle: matrix -> quaternion (branch on the
// largest component, Shepperd's selection), then angle = 2 acos(|qa . qb|).
// Shares no code with geometry::geodesic_delta.
// ---------------------------------------------------------------------------

std::array<double, 4> quaternion(const RotationMatrix& r) {
    std::array<double, 4> q{}; // w, x, y, z
    const double trace = r.at(0, 0) + r.at(1, 1) + r.at(2, 2);
    if (trace > 0.0) {
        const double s = std::sqrt(trace + 1.0) * 2.0;
        q[0] = 0.25 * s;
        q[1] = (r.at(2, 1) - r.at(1, 2)) / s;
        q[2] = (r.at(0, 2) - r.at(2, 0)) / s;
        q[3] = (r.at(1, 0) - r.at(0, 1)) / s;
    } else if (r.at(0, 0) > r.at(1, 1) && r.at(0, 0) > r.at(2, 2)) {
        const double s = std::sqrt(1.0 + r.at(0, 0) - r.at(1, 1) - r.at(2, 2)) * 2.0;
        q[0] = (r.at(2, 1) - r.at(1, 2)) / s;
        q[1] = 0.25 * s;
        q[2] = (r.at(0, 1) + r.at(1, 0)) / s;
        q[3] = (r.at(0, 2) + r.at(2, 0)) / s;
    } else if (r.at(1, 1) > r.at(2, 2)) {
        const double s = std::sqrt(1.0 + r.at(1, 1) - r.at(0, 0) - r.at(2, 2)) * 2.0;
        q[0] = (r.at(0, 2) - r.at(2, 0)) / s;
        q[1] = (r.at(0, 1) + r.at(1, 0)) / s;
        q[2] = 0.25 * s;
        q[3] = (r.at(1, 2) + r.at(2, 1)) / s;
    } else {
        const double s = std::sqrt(1.0 + r.at(2, 2) - r.at(0, 0) - r.at(1, 1)) * 2.0;
        q[0] = (r.at(1, 0) - r.at(0, 1)) / s;
        q[1] = (r.at(0, 2) + r.at(2, 0)) / s;
        q[2] = (r.at(1, 2) + r.at(2, 1)) / s;
        q[3] = 0.25 * s;
    }
    return q;
}

double quaternion_angle(const RotationMatrix& a, const RotationMatrix& b) {
    const std::array<double, 4> qa = quaternion(a);
    const std::array<double, 4> qb = quaternion(b);
    double dot = 0.0;
    for (int i = 0; i < 4; ++i) dot += qa[static_cast<std::size_t>(i)] * qb[static_cast<std::size_t>(i)];
    return 2.0 * std::acos(std::min(1.0, std::abs(dot)));
}

RotationMatrix random_rotation(rng::Rng& r) {
    // Gimbal-safe Euler draw; plenty of coverage for oracle comparisons.
    return geometry::euler_to_matrix(PoseLabel::make(r.uniform(-kPi, kPi),
                                                     r.uniform(-kPi / 2 + 1e-3, kPi / 2 - 1e-3),
                                                     r.uniform(-kPi, kPi)));
}

losses::ContrastBatch random_batch(std::size_t n, std::size_t dim, rng::Rng& r) {
    losses::ContrastBatch b;
    b.size = n;
    b.dim = dim;
    b.query_embeddings.resize(n * dim);
    b.key_embeddings.resize(n * dim);
    for (std::vector<double>* rows : {&b.query_embeddings, &b.key_embeddings}) {
        for (std::size_t i = 0; i < n; ++i) {
            double norm2 = 0.0;
            for (std::size_t j = 0; j < dim; ++j) {
                const double v = r.normal();
                (*rows)[i * dim + j] = v;
                norm2 += v * v;
            }
            const double inv = 1.0 / std::sqrt(norm2);
            for (std::size_t j = 0; j < dim; ++j) (*rows)[i * dim + j] *= inv;
        }
    }
    b.poses.reserve(n);
    for (std::size_t i = 0; i < n; ++i) b.poses.push_back(random_rotation(r));
    return b;
}

// ---------------------------------------------------------------------------
// Gates 1-4: analytic properties of the losses and codecs.
// ---------------------------------------------------------------------------

void gate_gradient_suite() {
    Stopwatch watch;
    gradcheck::Options opt; // 100 instances, 1e-6 loss / 1e-5 model tolerances
    const std::vector<gradcheck::CheckResult> results = gradcheck::run_all(opt);
    const double elapsed = watch.seconds();

    double worst_loss = 0.0, worst_model = 0.0;
    bool all_pass = gradcheck::all_passed(results);
    for (const gradcheck::CheckResult& res : results) {
        if (res.name == "whole_model") {
            worst_model = std::max(worst_model, res.max_rel_err);
        } else {
            worst_loss = std::max(worst_loss, res.max_rel_err);
        }
        all_pass = all_pass && res.instances >= opt.instances;
    }
    gate("gradients", all_pass && elapsed < 30.0,
         strf("%zu checks x %d instances, worst rel err: losses %.2e (tol 1e-6), "
              "model %.2e (tol 1e-5), %.1f s (limit 30 s)",
              results.size(), opt.instances, worst_loss, worst_model, elapsed));
}

void gate_geodesic_oracle() {
    rng::Rng r = rng::substream(11, "acc_geodesic");
    double worst = 0.0;
    for (int t = 0; t < 10000; ++t) {
        const RotationMatrix a = random_rotation(r);
        const RotationMatrix b = random_rotation(r);
        worst = std::max(worst, std::abs(geometry::geodesic_delta(a, b) - quaternion_angle(a, b)));
    }
    double worst_slack = 0.0; // max violation of delta(a,c) <= delta(a,b) + delta(b,c)
    for (int t = 0; t < 10000; ++t) {
        const RotationMatrix a = random_rotation(r);
        const RotationMatrix b = random_rotation(r);
        const RotationMatrix c = random_rotation(r);
        const double lhs = geometry::geodesic_delta(a, c);
        const double rhs = geometry::geodesic_delta(a, b) + geometry::geodesic_delta(b, c);
        worst_slack = std::max(worst_slack, lhs - rhs);
    }
    gate("geodesic-oracle", worst <= 1e-9 && worst_slack <= 1e-9,
         strf("max |delta - quaternion oracle| %.2e (tol 1e-9) on 10k pairs; "
              "worst triangle violation %.2e on 10k triples",
              worst, worst_slack));
}

void gate_reduction_identity() {
    rng::Rng r = rng::substream(12, "acc_reduction");
    losses::ContrastiveConfig cfg;
    cfg.weight_mode = losses::WeightMode::constant_one;
    cfg.include_positive_in_denominator = true;
    double worst = 0.0;
    for (int t = 0; t < 1000; ++t) {
        const std::size_t n = 2 + static_cast<std::size_t>(r.below(63)); // [2, 64]
        const losses::ContrastBatch b = random_batch(n, 8, r);
        for (std::size_t q = 0; q < n; ++q) {
            worst = std::max(worst, std::abs(losses::pose_nce(b, q, cfg) -
                                             losses::info_nce(b, q, cfg)));
        }
    }
    gate("nce-reduction", worst < 1e-12,
         strf("max |pose_nce(constant_one, incl. positive) - info_nce| %.2e "
              "(tol 1e-12) over 1000 batches, n in [2, 64]",
              worst));
}

void gate_codec_roundtrip() {
    using geometry::AngleKind;
    using geometry::kBinWidth;
    rng::Rng r = rng::substream(13, "acc_codec");

    // An angle clear of every bin edge (edges sit at multiples of the width).
    const auto off_boundary = [&r](double lo, double hi) {
        for (;;) {
            const double x = r.uniform(lo, hi);
            const double scaled = x / kBinWidth;
            const double frac = scaled - std::floor(scaled);
            if (frac > 1e-6 && frac < 1.0 - 1e-6) return x;
        }
    };

    double worst = 0.0;
    for (int t = 0; t < 10000; ++t) {
        const double az = off_boundary(-kPi, kPi);
        const double el = off_boundary(-kPi / 2, kPi / 2);
        const double in = off_boundary(-kPi, kPi);
        worst = std::max(worst, std::abs(geometry::decode_code(geometry::encode_angle(
                                             az, AngleKind::azimuth)) -
                                         az));
        worst = std::max(worst, std::abs(geometry::decode_code(geometry::encode_angle(
                                             el, AngleKind::elevation)) -
                                         el));
        worst = std::max(worst, std::abs(geometry::decode_code(geometry::encode_angle(
                                             in, AngleKind::inplane)) -
                                         in));
    }

    // Range boundaries: elevation saturates at the outermost bins, the half
    // turn wraps to -pi for the circular angles.
    bool edges_ok = true;
    const geometry::BinOffsetCode top = geometry::encode_angle(kPi / 2, AngleKind::elevation);
    edges_ok = edges_ok && top.bin == 5 && std::abs(top.offset - 1.0) <= 1e-12 &&
               std::abs(geometry::decode_code(top) - kPi / 2) <= 1e-12;
    const geometry::BinOffsetCode bottom = geometry::encode_angle(-kPi / 2, AngleKind::elevation);
    edges_ok = edges_ok && bottom.bin == -6 && std::abs(bottom.offset) <= 1e-12 &&
               std::abs(geometry::decode_code(bottom) + kPi / 2) <= 1e-12;
    for (const AngleKind kind : {AngleKind::azimuth, AngleKind::inplane}) {
        for (const double half_turn : {kPi, -kPi}) {
            const geometry::BinOffsetCode code = geometry::encode_angle(half_turn, kind);
            edges_ok = edges_ok && code.bin == -12 && std::abs(code.offset) <= 1e-9 &&
                       std::abs(geometry::decode_code(code) + kPi) <= 1e-12;
        }
    }

    gate("codec-roundtrip", worst <= 1e-12 && edges_ok,
         strf("max roundtrip error %.2e rad (tol 1e-12) on 3x10k off-edge angles; "
              "range edges %s",
              worst, edges_ok ? "exact" : "WRONG"));
}

// ---------------------------------------------------------------------------
// Gates 5-8: the default benchmark. One fixed dataset (renderer master seed
// 0), training seeds 0-4. "unseen mederr" is the mean over the two held-out
// classes of their median geodesic error on val; "unseen acc30" likewise.
// ---------------------------------------------------------------------------

struct BenchmarkState {
    cfg::RunConfig run;                  // the stock configuration
    synthdata::Dataset dataset;          // rendered once, shared by every gate
    std::filesystem::path scratch;       // checkpoint/CSV staging for gate 8

    pipeline::TrainConfig angle_only;    // contrastive term off
    pipeline::TrainConfig linear;        // pose-weighted negatives (the default)
    pipeline::TrainConfig constant_one;  // unweighted negatives

    std::vector<double> mederr_angle, mederr_linear, mederr_constant; // per seed
    std::vector<double> acc_linear_unseen;                            // per seed
    std::vector<nn::ModelParams> linear_models;                       // per seed
};

double unseen_mederr(const BenchmarkState& bs, const pipeline::EvalReport& rep) {
    return pipeline::subset_mean_mederr(rep, bs.run.split.unseen_classes);
}

pipeline::TrainConfig seeded(pipeline::TrainConfig cfg, std::uint64_t seed) {
    cfg.seed = seed;
    return cfg;
}

void gate_benchmark_learning(BenchmarkState& bs) {
    bs.run = cfg::default_run_config();
    bs.scratch = std::filesystem::temp_directory_path() / "posebench_acceptance";
    std::filesystem::remove_all(bs.scratch);
    std::filesystem::create_directories(bs.scratch);

    bs.linear = bs.run.train;
    bs.angle_only = bs.run.train;
    bs.angle_only.total.kappa = 0.0;
    bs.constant_one = bs.run.train;
    bs.constant_one.contrastive.weight_mode = losses::WeightMode::constant_one;
    bs.constant_one.contrastive.include_positive_in_denominator = true;

    // Timed stock run: render the dataset, train the contrastive-free model,
    // evaluate it on val.
    Stopwatch watch;
    bs.dataset = synthdata::generate_dataset(bs.run.renderer, bs.run.split);
    progress(strf("dataset: %zu records (%.1f s)", bs.dataset.records.size(), watch.seconds()));
    const pipeline::TrainResult r = pipeline::train(bs.dataset, seeded(bs.angle_only, 0));
    const pipeline::EvalReport rep =
        pipeline::evaluate(r.params, bs.dataset, synthdata::Split::val);
    const double elapsed = watch.seconds();
    progress(strf("angle-only seed 0 trained + evaluated (%.1f s)", elapsed));
    bs.mederr_angle.push_back(unseen_mederr(bs, rep));

    const double seen_acc = pipeline::subset_mean_acc30(rep, bs.run.split.seen_classes);

    // Chance rate by blind guessing, measured with the independent oracle:
    // truths follow the benchmark's pose distribution, guesses are uniform
    // over the full legal ranges.
    rng::Rng mc = rng::substream(14, "acc_chance");
    const int trials = 200000;
    int hits = 0;
    for (int t = 0; t < trials; ++t) {
        const RotationMatrix truth = geometry::euler_to_matrix(
            PoseLabel::make(mc.uniform(-kPi, kPi), mc.uniform(-kPi / 3, kPi / 3),
                            mc.uniform(-kPi / 12, kPi / 12)));
        const RotationMatrix guess = geometry::euler_to_matrix(PoseLabel::make(
            mc.uniform(-kPi, kPi), mc.uniform(-kPi / 2, kPi / 2), mc.uniform(-kPi, kPi)));
        if (quaternion_angle(truth, guess) <= kPi / 6.0) ++hits;
    }
    const double chance = static_cast<double>(hits) / trials;

    gate("learning", seen_acc > 3.0 * chance && elapsed < 300.0,
         strf("stock benchmark, contrastive off: seen acc30 %.3f > 3 x chance %.4f = %.4f; "
              "run %.1f s (limit 300 s)",
              seen_acc, chance, 3.0 * chance, elapsed));
}

void gate_ablation_ordering(BenchmarkState& bs) {
    const cfg::RunConfig& rc = bs.run;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        if (seed > 0) { // seed 0 already trained by the previous gate
            Stopwatch w;
            const pipeline::TrainResult r = pipeline::train(bs.dataset, seeded(bs.angle_only, seed));
            bs.mederr_angle.push_back(unseen_mederr(
                bs, pipeline::evaluate(r.params, bs.dataset, synthdata::Split::val)));
            progress(strf("angle-only seed %llu (%.1f s)",
                          static_cast<unsigned long long>(seed), w.seconds()));
        }

        Stopwatch w;
        pipeline::TrainResult lin = pipeline::train(bs.dataset, seeded(bs.linear, seed));
        const pipeline::EvalReport lin_rep =
            pipeline::evaluate(lin.params, bs.dataset, synthdata::Split::val);
        bs.mederr_linear.push_back(unseen_mederr(bs, lin_rep));
        bs.acc_linear_unseen.push_back(
            pipeline::subset_mean_acc30(lin_rep, rc.split.unseen_classes));
        if (seed == 0) {
            // Stash this run's artifacts; the determinism gate repeats it.
            cfg::RunConfig stamp = rc;
            stamp.train = seeded(bs.linear, 0);
            nn::save_checkpoint(lin.params, stamp.train.optimizer, bs.scratch / "run_a.ckpt");
            pipeline::write_train_log_csv(lin.log, bs.scratch / "run_a.log.csv",
                                          cfg::csv_comment(stamp));
            pipeline::write_report_csv(lin_rep, bs.scratch / "run_a.report.csv",
                                       cfg::csv_comment(stamp));
        }
        bs.linear_models.push_back(std::move(lin.params));

        const pipeline::TrainResult c1 = pipeline::train(bs.dataset, seeded(bs.constant_one, seed));
        bs.mederr_constant.push_back(unseen_mederr(
            bs, pipeline::evaluate(c1.params, bs.dataset, synthdata::Split::val)));
        progress(strf("weighted + unweighted seed %llu (%.1f s)",
                      static_cast<unsigned long long>(seed), w.seconds()));
    }

    const double med_angle = median(bs.mederr_angle);
    const double med_linear = median(bs.mederr_linear);
    const double med_constant = median(bs.mederr_constant);
    const double tie = 0.5; // degrees of slack for "ties" at the interval edges
    const bool ordered = med_linear <= med_angle;
    const bool between = med_constant >= std::min(med_linear, med_angle) - tie &&
                         med_constant <= std::max(med_linear, med_angle) + tie;
    gate("ablation-order", ordered && between,
         strf("median unseen mederr over 5 seeds: weighted %.2f <= angle-only %.2f deg, "
              "unweighted %.2f between/ties (slack %.1f deg)",
              med_linear, med_angle, med_constant, tie));
}

void gate_fewshot_gain(BenchmarkState& bs) {
    std::vector<double> tuned_acc;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Stopwatch w;
        const nn::ModelParams tuned =
            pipeline::finetune_fewshot(bs.linear_models[static_cast<std::size_t>(seed)],
                                       bs.dataset, 10, bs.run.split.unseen_classes,
                                       seeded(bs.linear, seed));
        const pipeline::EvalReport rep =
            pipeline::evaluate(tuned, bs.dataset, synthdata::Split::val);
        tuned_acc.push_back(pipeline::subset_mean_acc30(rep, bs.run.split.unseen_classes));
        progress(strf("10-shot finetune seed %llu (%.1f s)",
                      static_cast<unsigned long long>(seed), w.seconds()));
    }
    const double before = median(bs.acc_linear_unseen);
    const double after = median(tuned_acc);
    gate("fewshot-gain", after >= before - 0.02,
         strf("median unseen acc30 over 5 seeds: 10-shot %.4f vs no-shot %.4f "
              "(delta %+.4f, tie window 0.02)",
              after, before, after - before));
}

void gate_determinism(BenchmarkState& bs) {
    cfg::RunConfig stamp = bs.run;
    stamp.train = seeded(bs.linear, 0);

    // Full repeat of the run stashed by the ablation gate.
    Stopwatch w;
    const pipeline::TrainResult again = pipeline::train(bs.dataset, stamp.train);
    const pipeline::EvalReport rep =
        pipeline::evaluate(again.params, bs.dataset, synthdata::Split::val);
    nn::save_checkpoint(again.params, stamp.train.optimizer, bs.scratch / "run_b.ckpt");
    pipeline::write_train_log_csv(again.log, bs.scratch / "run_b.log.csv",
                                  cfg::csv_comment(stamp));
    pipeline::write_report_csv(rep, bs.scratch / "run_b.report.csv", cfg::csv_comment(stamp));
    const bool repeat_ok =
        slurp(bs.scratch / "run_a.ckpt") == slurp(bs.scratch / "run_b.ckpt") &&
        slurp(bs.scratch / "run_a.log.csv") == slurp(bs.scratch / "run_b.log.csv") &&
        slurp(bs.scratch / "run_a.report.csv") == slurp(bs.scratch / "run_b.report.csv");
    progress(strf("repeat run (%.1f s)", w.seconds()));

    // Interrupt the same run mid-way, reload the checkpoint, finish it.
    Stopwatch w2;
    const pipeline::TrainResult first_half = pipeline::continue_train(
        nn::init_params(stamp.train.arch, stamp.train.seed), bs.dataset, stamp.train,
        /*stop_after_epoch=*/8);
    nn::save_checkpoint(first_half.params, stamp.train.optimizer, bs.scratch / "mid.ckpt");
    nn::Checkpoint mid = nn::load_checkpoint(bs.scratch / "mid.ckpt");
    const pipeline::TrainResult finished =
        pipeline::continue_train(std::move(mid.params), bs.dataset, stamp.train, 0);
    nn::save_checkpoint(finished.params, stamp.train.optimizer, bs.scratch / "resumed.ckpt");
    const bool resume_ok =
        slurp(bs.scratch / "run_a.ckpt") == slurp(bs.scratch / "resumed.ckpt");
    progress(strf("interrupted + resumed run (%.1f s)", w2.seconds()));

    gate("determinism", repeat_ok && resume_ok,
         strf("repeated run: checkpoint + log + report byte-identical (%s); "
              "resumed run == uninterrupted (%s)",
              repeat_ok ? "yes" : "NO", resume_ok ? "yes" : "NO"));
}

void gate_zero_weight(BenchmarkState& bs) {
    rng::Rng r = rng::substream(15, "acc_zero_weight");
    losses::ContrastiveConfig cfg = bs.linear.contrastive;
    double worst = 0.0;
    for (int t = 0; t < 100; ++t) {
        const std::size_t n = 4 + static_cast<std::size_t>(r.below(13));
        losses::ContrastBatch b = random_batch(n, 8, r);
        const std::size_t q = static_cast<std::size_t>(r.below(static_cast<std::uint64_t>(n)));
        const double before = losses::pose_nce(b, q, cfg);

        // Insert a negative whose pose is bit-identical to the query's.
        losses::ContrastBatch bigger = b;
        bigger.size = n + 1;
        for (std::size_t j = 0; j < 8; ++j) {
            bigger.query_embeddings.push_back(r.normal());
            bigger.key_embeddings.push_back(r.normal());
        }
        bigger.poses.push_back(b.poses[q]);

        worst = std::max(worst, std::abs(losses::pose_nce(bigger, q, cfg) - before));
    }
    gate("zero-weight", worst < 1e-12,
         strf("same-pose negatives: max change in the query's contrastive loss "
              "%.2e (tol 1e-12) over 100 batches",
              worst));
}

} // namespace

int main() {
    Stopwatch total;
    std::printf("posebench acceptance suite (%d gates)\n", kGateCount);

    try {
        gate_gradient_suite();
        gate_geodesic_oracle();
        gate_reduction_identity();
        gate_codec_roundtrip();

        BenchmarkState bs;
        gate_benchmark_learning(bs);
        gate_ablation_ordering(bs);
        gate_fewshot_gain(bs);
        gate_determinism(bs);
        gate_zero_weight(bs);
    } catch (const std::exception& e) {
        std::printf("[FAIL] suite aborted: %s\n", e.what());
        return 1;
    }

    std::printf("%d/%d gates passed (%.1f s total)\n", kGateCount - g_failures, kGateCount,
                total.seconds());
    return g_failures == 0 ? 0 : 1;
}
