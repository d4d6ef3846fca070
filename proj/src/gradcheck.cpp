#include "posebench/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <ostream>

#include "posebench/losses.hpp"
#include "posebench/nn.hpp"
#include "posebench/rng.hpp"

namespace posebench::gradcheck {

namespace {

using geometry::PoseLabel;
using losses::ContrastBatch;
using losses::ContrastiveConfig;
using losses::WeightMode;

double rel_err(double analytic, double fd) {
    const double denom = std::max({std::abs(analytic), std::abs(fd), 0.01});
    return std::abs(analytic - fd) / denom;
}

// Central-difference comparison over the given coordinates of x. `analytic`
// must already hold d(loss)/d(x); eval() recomputes the loss from x.
struct FdProbe {
    double h = 1e-6;
    double max_rel = 0.0;
    std::int64_t coords = 0;

    void run(std::vector<double>& x, const std::vector<double>& analytic,
             const std::function<double()>& eval, const std::vector<std::size_t>& idx) {
        for (std::size_t c : idx) {
            const double keep = x[c];
            x[c] = keep + h;
            const double hi = eval();
            x[c] = keep - h;
            const double lo = eval();
            x[c] = keep;
            const double fd = (hi - lo) / (2.0 * h);
            max_rel = std::max(max_rel, rel_err(analytic[c], fd));
            ++coords;
        }
    }

    void run_all_coords(std::vector<double>& x, const std::vector<double>& analytic,
                        const std::function<double()>& eval) {
        std::vector<std::size_t> idx(x.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        run(x, analytic, eval, idx);
    }
};

void flip_first_nonzero(std::vector<double>& g) {
    for (auto& v : g) {
        if (v != 0.0) {
            v = -v;
            return;
        }
    }
    if (!g.empty()) g[0] = 1.0; // all-zero gradient: make it wrong outright
}

PoseLabel random_pose(rng::Rng& stream) {
    return PoseLabel::make(stream.uniform(-geometry::kPi, geometry::kPi),
                           stream.uniform(-1.4, 1.4),
                           stream.uniform(-geometry::kPi, geometry::kPi));
}

ContrastBatch random_batch(rng::Rng& stream, std::size_t n, std::size_t dim) {
    ContrastBatch b;
    b.size = n;
    b.dim = dim;
    b.query_embeddings.resize(n * dim);
    b.key_embeddings.resize(n * dim);
    auto fill_unit_rows = [&](std::vector<double>& v) {
        for (std::size_t r = 0; r < n; ++r) {
            double sq = 0.0;
            for (std::size_t i = 0; i < dim; ++i) {
                v[r * dim + i] = stream.normal();
                sq += v[r * dim + i] * v[r * dim + i];
            }
            const double inv = 1.0 / std::sqrt(sq);
            for (std::size_t i = 0; i < dim; ++i) v[r * dim + i] *= inv;
        }
    };
    fill_unit_rows(b.query_embeddings);
    fill_unit_rows(b.key_embeddings);
    b.poses.resize(n);
    for (auto& p : b.poses) p = geometry::euler_to_matrix(random_pose(stream));
    return b;
}

CheckResult check_smooth_l1(const Options& opt) {
    CheckResult result{"smooth_l1", opt.instances, 0, 0.0, opt.tol_loss, false};
    rng::Rng stream = rng::substream(opt.seed, "gc_smooth_l1");
    FdProbe probe{opt.fd_step_loss};
    const double thresholds[] = {1.0, 0.5, 2.0};
    for (int inst = 0; inst < opt.instances; ++inst) {
        const double t = thresholds[inst % 3];
        double x = stream.uniform(-3.0, 3.0);
        while (std::abs(std::abs(x) - t) < 1e-4) { // stay away from the C2 kink
            x = stream.uniform(-3.0, 3.0);
        }
        std::vector<double> coords{x};
        std::vector<double> grad{losses::smooth_l1_grad(x, t)};
        if (opt.inject_sign_flip) flip_first_nonzero(grad);
        probe.run_all_coords(coords, grad, [&] { return losses::smooth_l1(coords[0], t); });
    }
    result.coords = probe.coords;
    result.max_rel_err = probe.max_rel;
    result.pass = probe.max_rel <= result.tolerance;
    return result;
}

CheckResult check_angle_loss(const Options& opt) {
    CheckResult result{"angle_loss", opt.instances, 0, 0.0, opt.tol_loss, false};
    rng::Rng stream = rng::substream(opt.seed, "gc_angle_loss");
    FdProbe probe{opt.fd_step_loss};
    for (int inst = 0; inst < opt.instances; ++inst) {
        losses::AngleLossConfig cfg;
        cfg.lambda = (inst % 2 == 0) ? 1.0 : 0.5;
        const PoseLabel target = random_pose(stream);
        std::vector<double> x(2 * geometry::kScoreDim);
        for (int i = 0; i < geometry::kScoreDim; ++i) {
            x[static_cast<std::size_t>(i)] = stream.normal() * 2.0;
            x[static_cast<std::size_t>(geometry::kScoreDim + i)] = stream.uniform(0.05, 0.95);
        }
        std::vector<double> grad(2 * geometry::kScoreDim, 0.0);
        losses::angle_loss_row(x.data(), x.data() + geometry::kScoreDim, target, cfg,
                               grad.data(), grad.data() + geometry::kScoreDim);
        if (opt.inject_sign_flip) flip_first_nonzero(grad);
        probe.run_all_coords(x, grad, [&] {
            return losses::angle_loss_row(x.data(), x.data() + geometry::kScoreDim, target, cfg,
                                          nullptr, nullptr);
        });
    }
    result.coords = probe.coords;
    result.max_rel_err = probe.max_rel;
    result.pass = probe.max_rel <= result.tolerance;
    return result;
}

// Shared body for the per-query contrastive checks. `use_info` switches the
// loss under test between info_nce and pose_nce.
CheckResult check_query_loss(const Options& opt, const std::string& name, bool use_info,
                             WeightMode mode) {
    CheckResult result{name, opt.instances, 0, 0.0, opt.tol_loss, false};
    rng::Rng stream = rng::substream(opt.seed, "gc_" + name);
    FdProbe probe{opt.fd_step_loss};
    const double taus[] = {0.5, 0.2, 1.0};
    for (int inst = 0; inst < opt.instances; ++inst) {
        const std::size_t n = 2 + stream.below(9);  // [2, 10]
        const std::size_t dim = 4 + stream.below(9); // [4, 12]
        ContrastBatch batch = random_batch(stream, n, dim);
        ContrastiveConfig cfg;
        cfg.tau = taus[inst % 3];
        cfg.weight_mode = mode;
        cfg.include_positive_in_denominator = use_info || (inst % 2 == 1);
        const auto q = static_cast<std::size_t>(stream.below(n));

        losses::ContrastGrad grad;
        if (use_info) {
            losses::info_nce(batch, q, cfg, &grad);
        } else {
            losses::pose_nce(batch, q, cfg, &grad);
        }
        // One flat coordinate vector: queries then keys.
        std::vector<double> x = batch.query_embeddings;
        x.insert(x.end(), batch.key_embeddings.begin(), batch.key_embeddings.end());
        std::vector<double> g = grad.d_query;
        g.insert(g.end(), grad.d_keys.begin(), grad.d_keys.end());
        if (opt.inject_sign_flip) flip_first_nonzero(g);
        auto eval = [&] {
            std::copy(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(n * dim),
                      batch.query_embeddings.begin());
            std::copy(x.begin() + static_cast<std::ptrdiff_t>(n * dim), x.end(),
                      batch.key_embeddings.begin());
            return use_info ? losses::info_nce(batch, q, cfg, nullptr)
                            : losses::pose_nce(batch, q, cfg, nullptr);
        };
        probe.run_all_coords(x, g, eval);
    }
    result.coords = probe.coords;
    result.max_rel_err = probe.max_rel;
    result.pass = probe.max_rel <= result.tolerance;
    return result;
}

CheckResult check_batch_loss(const Options& opt) {
    CheckResult result{"batch_contrastive_loss", opt.instances, 0, 0.0, opt.tol_loss, false};
    rng::Rng stream = rng::substream(opt.seed, "gc_batch");
    FdProbe probe{opt.fd_step_loss};
    const WeightMode modes[] = {WeightMode::linear, WeightMode::sqrt, WeightMode::square,
                                WeightMode::constant_one};
    for (int inst = 0; inst < opt.instances; ++inst) {
        const std::size_t n = 2 + stream.below(7);
        const std::size_t dim = 4 + stream.below(7);
        ContrastBatch batch = random_batch(stream, n, dim);
        ContrastiveConfig cfg;
        cfg.tau = 0.5;
        cfg.weight_mode = modes[inst % 4];
        cfg.include_positive_in_denominator = cfg.weight_mode == WeightMode::constant_one;

        losses::ContrastGrad grad;
        losses::batch_contrastive_loss(batch, cfg, &grad);
        std::vector<double> x = batch.query_embeddings;
        x.insert(x.end(), batch.key_embeddings.begin(), batch.key_embeddings.end());
        std::vector<double> g = grad.d_query;
        g.insert(g.end(), grad.d_keys.begin(), grad.d_keys.end());
        if (opt.inject_sign_flip) flip_first_nonzero(g);
        auto eval = [&] {
            std::copy(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(n * dim),
                      batch.query_embeddings.begin());
            std::copy(x.begin() + static_cast<std::ptrdiff_t>(n * dim), x.end(),
                      batch.key_embeddings.begin());
            return losses::batch_contrastive_loss(batch, cfg, nullptr);
        };
        probe.run_all_coords(x, g, eval);
    }
    result.coords = probe.coords;
    result.max_rel_err = probe.max_rel;
    result.pass = probe.max_rel <= result.tolerance;
    return result;
}

CheckResult check_total_loss(const Options& opt) {
    CheckResult result{"total_loss", opt.instances, 0, 0.0, opt.tol_loss, false};
    rng::Rng stream = rng::substream(opt.seed, "gc_total");
    FdProbe probe{opt.fd_step_loss};
    for (int inst = 0; inst < opt.instances; ++inst) {
        losses::TotalLossConfig cfg;
        cfg.kappa = stream.uniform(-2.0, 2.0);
        std::vector<double> x{stream.uniform(-3.0, 3.0), stream.uniform(-3.0, 3.0)};
        std::vector<double> grad{1.0, cfg.kappa};
        if (opt.inject_sign_flip) flip_first_nonzero(grad);
        probe.run_all_coords(x, grad, [&] { return losses::total_loss(x[0], x[1], cfg); });
    }
    result.coords = probe.coords;
    result.max_rel_err = probe.max_rel;
    result.pass = probe.max_rel <= result.tolerance;
    return result;
}

// Whole model: mean angle loss over the query view plus kappa * batch
// contrastive loss over both views, differentiated w.r.t. every parameter.
CheckResult check_whole_model(const Options& opt) {
    CheckResult result{"whole_model", opt.instances, 0, 0.0, opt.tol_model, false};
    rng::Rng stream = rng::substream(opt.seed, "gc_model");
    FdProbe probe{opt.fd_step_model};

    nn::ArchitectureConfig arch;
    arch.input_dim = 10;
    arch.encoder_hidden = {12};
    arch.feature_dim = 8;
    arch.predictor_hidden = {10};

    for (int inst = 0; inst < opt.instances; ++inst) {
        nn::ModelParams params = nn::init_params(arch, stream.next_u64());
        const std::int64_t n = 5;
        nn::Tensor xq = nn::Tensor::zeros({n, arch.input_dim});
        nn::Tensor xk = nn::Tensor::zeros({n, arch.input_dim});
        for (auto& v : xq.values) v = stream.normal();
        for (auto& v : xk.values) v = stream.normal();
        std::vector<PoseLabel> targets(static_cast<std::size_t>(n));
        std::vector<geometry::RotationMatrix> poses(static_cast<std::size_t>(n));
        for (std::size_t i = 0; i < targets.size(); ++i) {
            targets[i] = random_pose(stream);
            poses[i] = geometry::euler_to_matrix(targets[i]);
        }
        losses::AngleLossConfig angle_cfg;
        ContrastiveConfig ccfg;
        ccfg.weight_mode = static_cast<WeightMode>(inst % 3); // linear/sqrt/square
        losses::TotalLossConfig tcfg;
        tcfg.kappa = 1.0;

        const double inv_n = 1.0 / static_cast<double>(n);
        auto eval_loss = [&](bool with_grad) {
            nn::ForwardTrace tq, tk;
            const nn::ForwardResult oq = nn::forward(params, xq, with_grad ? &tq : nullptr);
            const nn::ForwardResult ok = nn::forward(params, xk, with_grad ? &tk : nullptr);

            nn::Tensor d_scores = nn::Tensor::zeros({n, geometry::kScoreDim});
            nn::Tensor d_offsets = nn::Tensor::zeros({n, geometry::kScoreDim});
            double angle_sum = 0.0;
            for (std::int64_t r = 0; r < n; ++r) {
                angle_sum += losses::angle_loss_row(
                    oq.head_scores.data() + r * geometry::kScoreDim,
                    oq.head_offsets.data() + r * geometry::kScoreDim,
                    targets[static_cast<std::size_t>(r)], angle_cfg,
                    with_grad ? d_scores.data() + r * geometry::kScoreDim : nullptr,
                    with_grad ? d_offsets.data() + r * geometry::kScoreDim : nullptr);
            }
            const double angle_loss = angle_sum * inv_n;

            ContrastBatch batch;
            batch.size = static_cast<std::size_t>(n);
            batch.dim = static_cast<std::size_t>(arch.feature_dim);
            batch.query_embeddings = oq.embeddings.values;
            batch.key_embeddings = ok.embeddings.values;
            batch.poses = poses;
            losses::ContrastGrad cgrad;
            const double closs =
                losses::batch_contrastive_loss(batch, ccfg, with_grad ? &cgrad : nullptr);

            if (with_grad) {
                for (auto& v : d_scores.values) v *= inv_n;
                for (auto& v : d_offsets.values) v *= inv_n;
                nn::Tensor d_emb_q = nn::Tensor::zeros({n, arch.feature_dim});
                nn::Tensor d_emb_k = nn::Tensor::zeros({n, arch.feature_dim});
                for (std::size_t i = 0; i < cgrad.d_query.size(); ++i) {
                    d_emb_q.values[i] = tcfg.kappa * cgrad.d_query[i];
                    d_emb_k.values[i] = tcfg.kappa * cgrad.d_keys[i];
                }
                params.zero_grads();
                nn::backward(params, tq, d_emb_q, d_scores, d_offsets);
                const nn::Tensor zero_heads = nn::Tensor::zeros({n, geometry::kScoreDim});
                nn::backward(params, tk, d_emb_k, zero_heads, zero_heads);
            }
            return losses::total_loss(angle_loss, closs, tcfg);
        };

        eval_loss(true); // fill parameter gradients

        // Flatten parameters and gradients; sample a few coordinates.
        std::vector<double> flat;
        std::vector<double> grad;
        for (const auto& t : params.tensors) {
            flat.insert(flat.end(), t.values.begin(), t.values.end());
            grad.insert(grad.end(), t.grad.begin(), t.grad.end());
        }
        std::vector<std::size_t> idx(static_cast<std::size_t>(opt.model_coords));
        for (auto& i : idx) i = static_cast<std::size_t>(stream.below(flat.size()));
        if (opt.inject_sign_flip) {
            // Corrupt a coordinate the probe will actually look at.
            double& g = grad[idx[0]];
            g = g != 0.0 ? -g : 1.0;
        }

        auto scatter = [&] {
            std::size_t pos = 0;
            for (auto& t : params.tensors) {
                std::copy(flat.begin() + static_cast<std::ptrdiff_t>(pos),
                          flat.begin() + static_cast<std::ptrdiff_t>(pos + t.values.size()),
                          t.values.begin());
                pos += t.values.size();
            }
        };
        probe.run(flat, grad,
                  [&] {
                      scatter();
                      return eval_loss(false);
                  },
                  idx);
        scatter(); // restore exactly
    }
    result.coords = probe.coords;
    result.max_rel_err = probe.max_rel;
    result.pass = probe.max_rel <= result.tolerance;
    return result;
}

} // namespace

std::vector<CheckResult> run_all(const Options& opt) {
    std::vector<CheckResult> results;
    results.push_back(check_smooth_l1(opt));
    results.push_back(check_angle_loss(opt));
    results.push_back(check_query_loss(opt, "info_nce", true, WeightMode::constant_one));
    results.push_back(check_query_loss(opt, "pose_nce[linear]", false, WeightMode::linear));
    results.push_back(check_query_loss(opt, "pose_nce[sqrt]", false, WeightMode::sqrt));
    results.push_back(check_query_loss(opt, "pose_nce[square]", false, WeightMode::square));
    results.push_back(check_batch_loss(opt));
    results.push_back(check_total_loss(opt));
    results.push_back(check_whole_model(opt));
    return results;
}

bool all_passed(const std::vector<CheckResult>& results) {
    for (const auto& r : results) {
        if (!r.pass) return false;
    }
    return !results.empty();
}

void print_results(std::ostream& out, const std::vector<CheckResult>& results) {
    char buf[192];
    for (const auto& r : results) {
        std::snprintf(buf, sizeof(buf),
                      "[%s] %-24s max_rel=%.3e tol=%.0e instances=%d coords=%lld",
                      r.pass ? "PASS" : "FAIL", r.name.c_str(), r.max_rel_err, r.tolerance,
                      r.instances, static_cast<long long>(r.coords));
        out << buf << '\n';
    }
}

} // namespace posebench::gradcheck
