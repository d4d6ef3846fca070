#include "posebench/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <ostream>
#include <set>

#include "posebench/parallel.hpp"
#include "posebench/rng.hpp"

namespace posebench::pipeline {

namespace {

using geometry::PoseLabel;
using synthdata::SampleRecord;
using synthdata::Split;

constexpr std::int64_t kEvalChunk = 512;

void check_finite_cfg(double v, const char* what) {
    if (!std::isfinite(v)) {
        throw ConfigError(std::string("train config: ") + what + " must be finite");
    }
}

// One training phase over a fixed record list. Streams are derived from
// cfg.seed as substream(seed, <label>, epoch or global batch index), so any
// phase can be re-entered from a checkpoint and replay identically.
struct PhaseSpec {
    const std::vector<const SampleRecord*>* records = nullptr;
    int epochs = 0;               // epochs in this phase
    std::int64_t step_base = 0;   // params.step when the phase started
    std::int64_t total_steps = 0; // 0 = pin progress to 1.0 (decayed LR)
    const char* shuffle_label = "shuffle";
    const char* augment_label = "augment";
    const char* views_label = "views";
    int stop_after_epoch = 0; // 0 = run to spec.epochs
};

void run_phase(nn::ModelParams& params, const synthdata::Renderer& renderer,
               const TrainConfig& cfg, const PhaseSpec& spec, std::vector<EpochLog>* log) {
    const auto& records = *spec.records;
    const auto batch = static_cast<std::size_t>(cfg.batch_size);
    const std::int64_t bpe = static_cast<std::int64_t>(records.size() / batch);
    if (bpe < 1) {
        throw DatasetTooSmallError("training needs at least one full batch (" +
                                   std::to_string(cfg.batch_size) + " records, have " +
                                   std::to_string(records.size()) + ")");
    }
    const std::int64_t phase_steps = static_cast<std::int64_t>(spec.epochs) * bpe;
    const std::int64_t done = params.step - spec.step_base;
    if (done < 0 || done > phase_steps) {
        throw UserError("checkpoint step " + std::to_string(params.step) +
                        " does not fit the requested schedule");
    }
    const int first_epoch = static_cast<int>(done / bpe);
    const std::int64_t first_batch = done % bpe;
    const int last_epoch = spec.stop_after_epoch > 0
                               ? std::min(spec.stop_after_epoch, spec.epochs)
                               : spec.epochs;

    const bool use_contrast = cfg.total.kappa != 0.0;
    const auto dim = static_cast<std::size_t>(params.arch.feature_dim);

    for (int epoch = first_epoch; epoch < last_epoch; ++epoch) {
        std::vector<std::size_t> order(records.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        rng::Rng shuffle_stream =
            rng::substream(cfg.seed, spec.shuffle_label, static_cast<std::uint64_t>(epoch));
        shuffle_stream.shuffle(order);

        double angle_sum = 0.0, contrast_sum = 0.0, total_sum = 0.0, last_lr = 0.0;
        std::int64_t batches_done = 0;

        for (std::int64_t b = (epoch == first_epoch ? first_batch : 0); b < bpe; ++b) {
            const std::int64_t global = spec.step_base + static_cast<std::int64_t>(epoch) * bpe + b;

            std::vector<const SampleRecord*> chunk(batch);
            for (std::size_t i = 0; i < batch; ++i) {
                chunk[i] = records[order[static_cast<std::size_t>(b) * batch + i]];
            }

            rng::Rng aug_stream = rng::substream(cfg.seed, spec.augment_label,
                                                 static_cast<std::uint64_t>(global));
            synthdata::AugmentedBatch aug =
                synthdata::batch_augment(renderer, chunk, cfg.augment, aug_stream);
            rng::Rng view_stream = rng::substream(cfg.seed, spec.views_label,
                                                  static_cast<std::uint64_t>(global));
            synthdata::ContrastViews views =
                synthdata::contrast_views(renderer, chunk, aug.poses, cfg.augment, view_stream);

            nn::ForwardTrace trace_q;
            const nn::ForwardResult out_q = nn::forward(params, views.query, &trace_q);

            // Angle loss (+ gradients) per row on the query view.
            const auto n = static_cast<std::int64_t>(batch);
            nn::Tensor d_scores = nn::Tensor::zeros({n, geometry::kScoreDim});
            nn::Tensor d_offsets = nn::Tensor::zeros({n, geometry::kScoreDim});
            std::vector<double> row_losses(batch, 0.0);
            par::for_each_index(n, [&](std::int64_t r) {
                const auto i = static_cast<std::size_t>(r);
                row_losses[i] = losses::angle_loss_row(
                    out_q.head_scores.data() + r * geometry::kScoreDim,
                    out_q.head_offsets.data() + r * geometry::kScoreDim, aug.poses[i], cfg.angle,
                    d_scores.data() + r * geometry::kScoreDim,
                    d_offsets.data() + r * geometry::kScoreDim);
            });
            const double inv_b = 1.0 / static_cast<double>(batch);
            double angle_loss = 0.0;
            for (double l : row_losses) angle_loss += l;
            angle_loss *= inv_b;
            for (auto& v : d_scores.values) v *= inv_b;
            for (auto& v : d_offsets.values) v *= inv_b;

            // Contrastive branch on (query, key) embeddings.
            double contrast_loss = 0.0;
            nn::Tensor d_emb_q = nn::Tensor::zeros({n, params.arch.feature_dim});
            nn::ForwardTrace trace_k;
            nn::ForwardResult out_k;
            nn::Tensor d_emb_k;
            if (use_contrast) {
                out_k = nn::forward(params, views.key, &trace_k);
                losses::ContrastBatch cbatch;
                cbatch.size = batch;
                cbatch.dim = dim;
                cbatch.query_embeddings = out_q.embeddings.values;
                cbatch.key_embeddings = out_k.embeddings.values;
                cbatch.poses.resize(batch);
                for (std::size_t i = 0; i < batch; ++i) {
                    cbatch.poses[i] = geometry::euler_to_matrix(aug.poses[i]);
                }
                losses::ContrastGrad cgrad;
                contrast_loss = losses::batch_contrastive_loss(cbatch, cfg.contrastive, &cgrad);
                d_emb_k = nn::Tensor::zeros({n, params.arch.feature_dim});
                for (std::size_t i = 0; i < cgrad.d_query.size(); ++i) {
                    d_emb_q.values[i] = cfg.total.kappa * cgrad.d_query[i];
                    d_emb_k.values[i] = cfg.total.kappa * cgrad.d_keys[i];
                }
            }

            const double step_total = losses::total_loss(angle_loss, contrast_loss, cfg.total);
            if (!std::isfinite(step_total)) {
                throw NonFiniteLossError(
                    "non-finite loss at step " + std::to_string(global) + " (angle=" +
                    std::to_string(angle_loss) + ", contrastive=" + std::to_string(contrast_loss) +
                    ")");
            }

            params.zero_grads();
            nn::backward(params, trace_q, d_emb_q, d_scores, d_offsets);
            if (use_contrast) {
                const nn::Tensor zero_heads = nn::Tensor::zeros({n, geometry::kScoreDim});
                nn::backward(params, trace_k, d_emb_k, zero_heads, zero_heads);
            }

            const double progress =
                spec.total_steps > 0
                    ? static_cast<double>(global) / static_cast<double>(spec.total_steps)
                    : 1.0;
            nn::adam_step(params, cfg.optimizer, progress);

            angle_sum += angle_loss;
            contrast_sum += contrast_loss;
            total_sum += step_total;
            last_lr = nn::effective_learning_rate(cfg.optimizer, progress);
            ++batches_done;
        }

        if (log != nullptr && batches_done > 0) {
            EpochLog row;
            row.epoch = epoch;
            row.steps_done = params.step;
            const double inv = 1.0 / static_cast<double>(batches_done);
            row.angle_loss = angle_sum * inv;
            row.contrastive_loss = contrast_sum * inv;
            row.total_loss = total_sum * inv;
            row.learning_rate = last_lr;
            log->push_back(row);
        }
    }
}

std::ofstream open_csv(const std::filesystem::path& path) {
    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) {
        throw IoError("cannot open output file: " + path.string());
    }
    return file;
}

void write_comment(std::ofstream& file, const std::string& comment) {
    if (!comment.empty()) {
        file << "# " << comment << '\n';
    }
}

double parse_double_value(const std::string& text) {
    try {
        std::size_t used = 0;
        const double v = std::stod(text, &used);
        if (used != text.size()) throw std::invalid_argument(text);
        return v;
    } catch (const std::exception&) {
        throw UserError("cannot parse numeric sweep value '" + text + "'");
    }
}

} // namespace

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("train config: epochs must be >= 1");
    if (batch_size < 2) throw ConfigError("train config: batch_size must be >= 2");
    if (finetune_epochs < 0) throw ConfigError("train config: finetune_epochs must be >= 0");
    arch.validate();
    if (!(optimizer.learning_rate > 0.0)) {
        throw ConfigError("train config: learning_rate must be > 0");
    }
    if (!(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0) ||
        !(optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0)) {
        throw ConfigError("train config: beta1/beta2 must be in [0, 1)");
    }
    if (!(optimizer.epsilon > 0.0)) throw ConfigError("train config: epsilon must be > 0");
    if (!(optimizer.decay_point >= 0.0 && optimizer.decay_point <= 1.0)) {
        throw ConfigError("train config: decay_point must be in [0, 1]");
    }
    if (!(contrastive.tau > 0.0)) throw ConfigError("train config: tau must be > 0");
    if (!(angle.lambda >= 0.0)) throw ConfigError("train config: lambda must be >= 0");
    if (!(angle.smooth_l1_threshold > 0.0)) {
        throw ConfigError("train config: smooth_l1_threshold must be > 0");
    }
    check_finite_cfg(total.kappa, "kappa");
    if (!(augment.flip_probability >= 0.0 && augment.flip_probability <= 1.0)) {
        throw ConfigError("train config: flip_probability must be in [0, 1]");
    }
    if (!(augment.rotation_range_deg >= 0.0)) {
        throw ConfigError("train config: rotation_range_deg must be >= 0");
    }
    if (!(augment.pose_invariant_noise >= 0.0) || !(augment.nuisance_jitter >= 0.0)) {
        throw ConfigError("train config: view noise levels must be >= 0");
    }
}

TrainResult train(const synthdata::Dataset& dataset, const TrainConfig& cfg) {
    return continue_train(nn::init_params(cfg.arch, cfg.seed), dataset, cfg, 0);
}

TrainResult continue_train(nn::ModelParams params, const synthdata::Dataset& dataset,
                           const TrainConfig& cfg, int stop_after_epoch) {
    cfg.validate();
    if (cfg.arch.input_dim != dataset.renderer.input_dim) {
        throw ConfigError("train config: architecture input_dim " +
                          std::to_string(cfg.arch.input_dim) + " != renderer input_dim " +
                          std::to_string(dataset.renderer.input_dim));
    }
    if (!(params.arch == cfg.arch)) {
        throw ShapeMismatchError("continue_train: checkpoint architecture differs from config");
    }
    const synthdata::Renderer renderer(dataset.renderer);
    const auto records = dataset.select(Split::train, dataset.split.seen_classes);

    const auto batch = static_cast<std::size_t>(cfg.batch_size);
    const std::int64_t bpe = static_cast<std::int64_t>(records.size() / batch);
    if (bpe < 1) {
        throw DatasetTooSmallError("training needs at least one full batch (" +
                                   std::to_string(cfg.batch_size) + " records, have " +
                                   std::to_string(records.size()) + " seen-class train records)");
    }

    PhaseSpec spec;
    spec.records = &records;
    spec.epochs = cfg.epochs;
    spec.step_base = 0;
    spec.total_steps = static_cast<std::int64_t>(cfg.epochs) * bpe;
    spec.stop_after_epoch = stop_after_epoch;

    TrainResult result;
    run_phase(params, renderer, cfg, spec, &result.log);
    result.params = std::move(params);
    return result;
}

std::vector<std::size_t> select_shots(const synthdata::Dataset& dataset, int shots,
                                      const std::vector<int>& classes, std::uint64_t seed) {
    if (shots < 0) throw UserError("shots must be >= 0");
    std::vector<int> ordered = classes;
    std::sort(ordered.begin(), ordered.end());
    ordered.erase(std::unique(ordered.begin(), ordered.end()), ordered.end());

    std::vector<std::size_t> picked;
    for (int c : ordered) {
        if (c < 0 || c >= dataset.renderer.num_classes) {
            throw BadClassIdError("few-shot class " + std::to_string(c) + " out of range");
        }
        std::vector<std::size_t> pool;
        for (std::size_t i = 0; i < dataset.records.size(); ++i) {
            if (dataset.records[i].split == Split::train && dataset.records[i].class_id == c) {
                pool.push_back(i);
            }
        }
        if (pool.size() < static_cast<std::size_t>(shots)) {
            throw NotEnoughShotsError("class " + std::to_string(c) + " has " +
                                      std::to_string(pool.size()) + " train records, need " +
                                      std::to_string(shots));
        }
        rng::Rng stream = rng::substream(seed, "fewshot", static_cast<std::uint64_t>(c));
        stream.shuffle(pool);
        picked.insert(picked.end(), pool.begin(), pool.begin() + shots);
    }
    return picked;
}

nn::ModelParams finetune_fewshot(nn::ModelParams params, const synthdata::Dataset& dataset,
                                 int shots, const std::vector<int>& novel_classes,
                                 const TrainConfig& cfg) {
    cfg.validate();
    if (shots == 0) {
        return params; // nothing to adapt with; callers warn
    }
    const std::vector<std::size_t> shot_indices =
        select_shots(dataset, shots, novel_classes, cfg.seed);

    auto records = dataset.select(Split::train, dataset.split.seen_classes);
    for (std::size_t idx : shot_indices) {
        records.push_back(&dataset.records[idx]);
    }

    const synthdata::Renderer renderer(dataset.renderer);
    PhaseSpec spec;
    spec.records = &records;
    spec.epochs = cfg.finetune_epochs;
    spec.step_base = params.step;
    spec.total_steps = 0; // decayed LR throughout
    spec.shuffle_label = "ft_shuffle";
    spec.augment_label = "ft_augment";
    spec.views_label = "ft_views";

    if (cfg.finetune_epochs > 0) {
        run_phase(params, renderer, cfg, spec, nullptr);
    }
    return params;
}

std::vector<PoseLabel> predict_poses(const nn::ModelParams& params,
                                     const synthdata::Dataset& dataset,
                                     const std::vector<const SampleRecord*>& records) {
    const synthdata::Renderer renderer(dataset.renderer);
    nn::Tensor features;
    renderer.render_records(records, features);

    const auto n = static_cast<std::int64_t>(records.size());
    std::vector<PoseLabel> preds(records.size());
    for (std::int64_t start = 0; start < n; start += kEvalChunk) {
        const std::int64_t stop = std::min(n, start + kEvalChunk);
        nn::Tensor chunk = nn::Tensor::zeros({stop - start, params.arch.input_dim});
        std::copy(features.values.begin() + start * params.arch.input_dim,
                  features.values.begin() + stop * params.arch.input_dim, chunk.values.begin());
        const nn::ForwardResult out = nn::forward(params, chunk);
        for (std::int64_t r = 0; r < stop - start; ++r) {
            preds[static_cast<std::size_t>(start + r)] =
                geometry::decode_head(nn::head_output_at(out, r));
        }
    }
    return preds;
}

EvalReport report_from_predictions(const std::vector<const SampleRecord*>& records,
                                   const std::vector<PoseLabel>& predictions, bool strict) {
    if (records.empty()) {
        throw EmptySplitError("evaluation split has no records");
    }
    if (records.size() != predictions.size()) {
        throw ShapeMismatchError("report_from_predictions: record/prediction count mismatch");
    }

    EvalReport report;
    report.total_count = static_cast<int>(records.size());
    report.per_sample.resize(records.size());
    std::vector<double> errors(records.size(), 0.0);
    par::for_each_index(static_cast<std::int64_t>(records.size()), [&](std::int64_t i) {
        const auto idx = static_cast<std::size_t>(i);
        const geometry::RotationMatrix truth = geometry::euler_to_matrix(records[idx]->pose);
        const geometry::RotationMatrix pred = geometry::euler_to_matrix(predictions[idx]);
        errors[idx] = geometry::rad2deg(geometry::geodesic_delta(truth, pred));
        report.per_sample[idx] = {records[idx]->id, records[idx]->class_id, errors[idx]};
    });

    auto hit = [strict](double err) { return strict ? err < 30.0 : err <= 30.0; };
    auto median_of_sorted = [](const std::vector<double>& v) {
        return v[(v.size() - 1) / 2]; // lower middle for even counts
    };

    std::map<int, std::vector<double>> by_class;
    for (std::size_t i = 0; i < records.size(); ++i) {
        by_class[records[i]->class_id].push_back(errors[i]);
    }
    double acc_sum = 0.0, med_sum = 0.0;
    for (auto& [class_id, errs] : by_class) {
        std::sort(errs.begin(), errs.end());
        ClassStats stats;
        stats.class_id = class_id;
        stats.count = static_cast<int>(errs.size());
        int hits = 0;
        for (double e : errs) hits += hit(e) ? 1 : 0;
        stats.acc30 = static_cast<double>(hits) / static_cast<double>(errs.size());
        stats.mederr_deg = median_of_sorted(errs);
        acc_sum += stats.acc30;
        med_sum += stats.mederr_deg;
        report.per_class.push_back(stats);
    }
    const double inv_classes = 1.0 / static_cast<double>(report.per_class.size());
    report.mean_acc30 = acc_sum * inv_classes;
    report.mean_mederr_deg = med_sum * inv_classes;

    std::vector<double> all = errors;
    std::sort(all.begin(), all.end());
    int hits = 0;
    for (double e : all) hits += hit(e) ? 1 : 0;
    report.global_acc30 = static_cast<double>(hits) / static_cast<double>(all.size());
    report.global_mederr_deg = median_of_sorted(all);
    return report;
}

EvalReport evaluate(const nn::ModelParams& params, const synthdata::Dataset& dataset,
                    Split split, bool strict) {
    const auto records = dataset.select(split);
    if (records.empty()) {
        throw EmptySplitError("split '" + std::string(synthdata::split_name(split)) +
                              "' has no records");
    }
    return report_from_predictions(records, predict_poses(params, dataset, records), strict);
}

double subset_mean_acc30(const EvalReport& report, const std::vector<int>& classes) {
    double sum = 0.0;
    int found = 0;
    for (const auto& stats : report.per_class) {
        if (std::find(classes.begin(), classes.end(), stats.class_id) != classes.end()) {
            sum += stats.acc30;
            ++found;
        }
    }
    if (found == 0) return std::numeric_limits<double>::quiet_NaN();
    return sum / static_cast<double>(found);
}

double subset_mean_mederr(const EvalReport& report, const std::vector<int>& classes) {
    double sum = 0.0;
    int found = 0;
    for (const auto& stats : report.per_class) {
        if (std::find(classes.begin(), classes.end(), stats.class_id) != classes.end()) {
            sum += stats.mederr_deg;
            ++found;
        }
    }
    if (found == 0) return std::numeric_limits<double>::quiet_NaN();
    return sum / static_cast<double>(found);
}

std::vector<ClassHistogram> error_histogram(const nn::ModelParams& params,
                                            const synthdata::Dataset& dataset, Split split) {
    const auto records = dataset.select(split);
    if (records.empty()) {
        throw EmptySplitError("split '" + std::string(synthdata::split_name(split)) +
                              "' has no records");
    }
    const auto preds = predict_poses(params, dataset, records);

    std::map<int, ClassHistogram> by_class;
    for (std::size_t i = 0; i < records.size(); ++i) {
        ClassHistogram& h = by_class[records[i]->class_id];
        h.class_id = records[i]->class_id;
        ++h.count;

        const double az_err =
            geometry::wrap_angle(preds[i].azimuth - records[i]->pose.azimuth); // [-pi, pi)
        auto sbin = static_cast<int>(std::floor((az_err + geometry::kPi) / geometry::kBinWidth));
        sbin = std::clamp(sbin, 0, 23);
        ++h.signed_azimuth[static_cast<std::size_t>(sbin)];

        const double geo_err = geometry::geodesic_delta(
            geometry::euler_to_matrix(records[i]->pose), geometry::euler_to_matrix(preds[i]));
        auto gbin = static_cast<int>(std::floor(geo_err / geometry::kBinWidth));
        gbin = std::clamp(gbin, 0, 11); // err == pi lands in the top bin
        ++h.geodesic[static_cast<std::size_t>(gbin)];
    }
    std::vector<ClassHistogram> out;
    for (auto& [class_id, h] : by_class) out.push_back(h);
    return out;
}

void export_embeddings(const nn::ModelParams& params, const synthdata::Dataset& dataset,
                       Split split, const std::filesystem::path& path,
                       const std::string& comment) {
    const auto records = dataset.select(split);
    if (records.empty()) {
        throw EmptySplitError("split '" + std::string(synthdata::split_name(split)) +
                              "' has no records");
    }
    const synthdata::Renderer renderer(dataset.renderer);
    nn::Tensor features;
    renderer.render_records(records, features);

    std::ofstream file = open_csv(path);
    write_comment(file, comment);
    file << "id,class_id,az_deg,el_deg,in_deg";
    for (int i = 0; i < params.arch.feature_dim; ++i) file << ",e" << i;
    file << '\n';

    const auto n = static_cast<std::int64_t>(records.size());
    char buf[64];
    for (std::int64_t start = 0; start < n; start += kEvalChunk) {
        const std::int64_t stop = std::min(n, start + kEvalChunk);
        nn::Tensor chunk = nn::Tensor::zeros({stop - start, params.arch.input_dim});
        std::copy(features.values.begin() + start * params.arch.input_dim,
                  features.values.begin() + stop * params.arch.input_dim, chunk.values.begin());
        const nn::ForwardResult out = nn::forward(params, chunk);
        for (std::int64_t r = 0; r < stop - start; ++r) {
            const auto& rec = *records[static_cast<std::size_t>(start + r)];
            file << rec.id << ',' << rec.class_id;
            std::snprintf(buf, sizeof(buf), ",%.9f,%.9f,%.9f",
                          geometry::rad2deg(rec.pose.azimuth),
                          geometry::rad2deg(rec.pose.elevation),
                          geometry::rad2deg(rec.pose.inplane));
            file << buf;
            for (std::int64_t i = 0; i < params.arch.feature_dim; ++i) {
                std::snprintf(buf, sizeof(buf), ",%.9g", out.embeddings.at(r, i));
                file << buf;
            }
            file << '\n';
        }
    }
    if (!file) {
        throw IoError("failed writing embeddings: " + path.string());
    }
}

std::vector<SweepRow> sweep(const std::string& param, const std::vector<std::string>& values,
                            const synthdata::Dataset& dataset, const TrainConfig& base) {
    if (values.empty()) {
        throw UserError("sweep needs at least one value");
    }
    std::vector<SweepRow> rows;
    for (const std::string& value : values) {
        TrainConfig cfg = base;
        if (param == "tau") {
            cfg.contrastive.tau = parse_double_value(value);
        } else if (param == "kappa") {
            cfg.total.kappa = parse_double_value(value);
        } else if (param == "lambda") {
            cfg.angle.lambda = parse_double_value(value);
        } else if (param == "weight_mode") {
            cfg.contrastive.weight_mode = losses::parse_weight_mode(value);
            cfg.contrastive.include_positive_in_denominator =
                cfg.contrastive.weight_mode == losses::WeightMode::constant_one;
        } else {
            throw UnknownParameterError("sweep parameter '" + param +
                                        "' (expected tau|kappa|lambda|weight_mode)");
        }
        TrainResult trained = train(dataset, cfg);
        SweepRow row;
        row.param = param;
        row.value = value;
        row.report = evaluate(trained.params, dataset, Split::val, base.acc30_strict);
        row.seen_acc30 = subset_mean_acc30(row.report, dataset.split.seen_classes);
        row.seen_mederr_deg = subset_mean_mederr(row.report, dataset.split.seen_classes);
        row.unseen_acc30 = subset_mean_acc30(row.report, dataset.split.unseen_classes);
        row.unseen_mederr_deg = subset_mean_mederr(row.report, dataset.split.unseen_classes);
        rows.push_back(std::move(row));
    }
    return rows;
}

void write_train_log_csv(const std::vector<EpochLog>& log, const std::filesystem::path& path,
                         const std::string& comment) {
    std::ofstream file = open_csv(path);
    write_comment(file, comment);
    file << "epoch,steps,angle_loss,contrastive_loss,total_loss,learning_rate\n";
    char buf[160];
    for (const auto& row : log) {
        std::snprintf(buf, sizeof(buf), "%d,%lld,%.12g,%.12g,%.12g,%.12g", row.epoch,
                      static_cast<long long>(row.steps_done), row.angle_loss,
                      row.contrastive_loss, row.total_loss, row.learning_rate);
        file << buf << '\n';
    }
    if (!file) throw IoError("failed writing train log: " + path.string());
}

void write_report_csv(const EvalReport& report, const std::filesystem::path& path,
                      const std::string& comment) {
    std::ofstream file = open_csv(path);
    write_comment(file, comment);
    file << "class,count,acc30,mederr_deg\n";
    char buf[128];
    for (const auto& stats : report.per_class) {
        std::snprintf(buf, sizeof(buf), "%d,%d,%.6f,%.6f", stats.class_id, stats.count,
                      stats.acc30, stats.mederr_deg);
        file << buf << '\n';
    }
    std::snprintf(buf, sizeof(buf), "mean,%d,%.6f,%.6f", report.total_count, report.mean_acc30,
                  report.mean_mederr_deg);
    file << buf << '\n';
    std::snprintf(buf, sizeof(buf), "global,%d,%.6f,%.6f", report.total_count,
                  report.global_acc30, report.global_mederr_deg);
    file << buf << '\n';
    if (!file) throw IoError("failed writing report: " + path.string());
}

void write_histogram_csv(const std::vector<ClassHistogram>& histograms,
                         const std::filesystem::path& path, const std::string& comment) {
    std::ofstream file = open_csv(path);
    write_comment(file, comment);
    file << "class_id,bin_kind,bin_index,lo_deg,hi_deg,count\n";
    for (const auto& h : histograms) {
        for (std::size_t i = 0; i < h.signed_azimuth.size(); ++i) {
            const double lo = -180.0 + 15.0 * static_cast<double>(i);
            file << h.class_id << ",signed_azimuth," << i << ',' << lo << ',' << lo + 15.0 << ','
                 << h.signed_azimuth[i] << '\n';
        }
        for (std::size_t i = 0; i < h.geodesic.size(); ++i) {
            const double lo = 15.0 * static_cast<double>(i);
            file << h.class_id << ",geodesic," << i << ',' << lo << ',' << lo + 15.0 << ','
                 << h.geodesic[i] << '\n';
        }
    }
    if (!file) throw IoError("failed writing histogram: " + path.string());
}

void write_sweep_csv(const std::vector<SweepRow>& rows, const std::filesystem::path& path,
                     const std::string& comment) {
    std::ofstream file = open_csv(path);
    write_comment(file, comment);
    file << "param,value,seen_acc30,seen_mederr_deg,unseen_acc30,unseen_mederr_deg,"
            "mean_acc30,mean_mederr_deg,global_acc30,global_mederr_deg\n";
    char buf[256];
    for (const auto& row : rows) {
        std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f",
                      row.seen_acc30, row.seen_mederr_deg, row.unseen_acc30,
                      row.unseen_mederr_deg, row.report.mean_acc30, row.report.mean_mederr_deg,
                      row.report.global_acc30, row.report.global_mederr_deg);
        file << row.param << ',' << row.value << ',' << buf << '\n';
    }
    if (!file) throw IoError("failed writing sweep results: " + path.string());
}

void print_report(std::ostream& out, const EvalReport& report) {
    char buf[160];
    out << "class  count  acc30   mederr_deg\n";
    for (const auto& stats : report.per_class) {
        std::snprintf(buf, sizeof(buf), "%5d  %5d  %.4f  %.3f", stats.class_id, stats.count,
                      stats.acc30, stats.mederr_deg);
        out << buf << '\n';
    }
    std::snprintf(buf, sizeof(buf), "mean over classes: acc30=%.4f mederr=%.3f deg",
                  report.mean_acc30, report.mean_mederr_deg);
    out << buf << '\n';
    std::snprintf(buf, sizeof(buf), "global (%d samples): acc30=%.4f mederr=%.3f deg",
                  report.total_count, report.global_acc30, report.global_mederr_deg);
    out << buf << '\n';
}

} // namespace posebench::pipeline
