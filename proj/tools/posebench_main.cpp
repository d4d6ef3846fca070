// posebench CLI: dataset generation, training, few-shot fine-tuning,
// evaluation, gradient checking, and parameter sweeps over one synthetic
// pose benchmark. Exit codes: 0 success, 1 internal error, 2 user error.

#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "posebench/config.hpp"
#include "posebench/errors.hpp"
#include "posebench/gradcheck.hpp"
#include "posebench/nn.hpp"
#include "posebench/parallel.hpp"
#include "posebench/pipeline.hpp"
#include "posebench/synthdata.hpp"

namespace {

using namespace posebench;

// Options shared by every subcommand. `seed` overrides both the renderer
// master seed and the training seed when given; every random choice in the
// pipeline descends from those two through named substreams.
struct CommonOpts {
    std::string config_path;
    std::uint64_t seed = 0;
    bool seed_given = false;
    int threads = 0;
};

void add_common(CLI::App* sub, CommonOpts& opts, bool with_config = true) {
    if (with_config) {
        sub->add_option("--config", opts.config_path, "Run-config JSON file");
    }
    sub->add_option("--seed", opts.seed, "Master seed (overrides the config)")
        ->each([&opts](const std::string&) { opts.seed_given = true; });
    sub->add_option("--threads", opts.threads, "Worker threads (0 = library default)");
}

cfg::RunConfig resolve_config(const CommonOpts& opts) {
    cfg::RunConfig config =
        opts.config_path.empty() ? cfg::default_run_config() : cfg::parse_run_config(opts.config_path);
    if (opts.seed_given) {
        config.renderer.master_seed = opts.seed;
        config.train.seed = opts.seed;
    }
    if (opts.threads > 0) par::set_threads(opts.threads);
    return config;
}

// Training-knob flags that win over the config file.
struct TrainOverrides {
    int epochs = 0;
    int batch_size = 0;
    double kappa = 0.0;
    double tau = 0.0;
    double lambda = 0.0;
    std::string weight_mode;

    CLI::App* sub = nullptr;

    void add(CLI::App* s) {
        sub = s;
        s->add_option("--epochs", epochs, "Training epochs");
        s->add_option("--batch-size", batch_size, "Batch size");
        s->add_option("--kappa", kappa, "Contrastive loss weight");
        s->add_option("--tau", tau, "Contrastive temperature");
        s->add_option("--lambda", lambda, "Offset loss weight");
        s->add_option("--weight-mode", weight_mode,
                      "Negative weighting: linear|sqrt|square|constant_one");
    }

    void apply(pipeline::TrainConfig& train) const {
        if (sub->count("--epochs")) train.epochs = epochs;
        if (sub->count("--batch-size")) train.batch_size = batch_size;
        if (sub->count("--kappa")) train.total.kappa = kappa;
        if (sub->count("--tau")) train.contrastive.tau = tau;
        if (sub->count("--lambda")) train.angle.lambda = lambda;
        if (sub->count("--weight-mode")) {
            train.contrastive.weight_mode = losses::parse_weight_mode(weight_mode);
            if (train.contrastive.weight_mode == losses::WeightMode::constant_one) {
                train.contrastive.include_positive_in_denominator = true;
            }
        }
    }
};

// Match the configured model width to the dataset actually in use; the input
// width is determined by the data, not a free knob.
void fit_arch_to_dataset(cfg::RunConfig& config, const synthdata::Dataset& dataset) {
    config.renderer = dataset.renderer;
    config.split = dataset.split;
    config.train.arch.input_dim = dataset.renderer.input_dim;
}

int cmd_generate(const CommonOpts& opts, const std::string& out_path) {
    cfg::RunConfig config = resolve_config(opts);
    synthdata::Dataset dataset = synthdata::generate_dataset(config.renderer, config.split);
    for (int c : dataset.warnings.isolated_unseen_classes) {
        std::cerr << "warning: unseen class " << c
                  << " shares no geometry group with any seen class\n";
    }
    synthdata::write_dataset(dataset, out_path);
    std::cout << "wrote " << dataset.records.size() << " records to " << out_path << "\n";
    return 0;
}

int cmd_train(const CommonOpts& opts, const TrainOverrides& over, const std::string& data_path,
              const std::string& out_checkpoint, const std::string& log_path, bool resume,
              int stop_after_epoch) {
    cfg::RunConfig config = resolve_config(opts);
    synthdata::Dataset dataset = synthdata::load_dataset(data_path);
    fit_arch_to_dataset(config, dataset);
    over.apply(config.train);

    nn::ModelParams params;
    if (resume) {
        nn::Checkpoint ck = nn::load_checkpoint(out_checkpoint, &config.train.arch);
        params = std::move(ck.params);
        std::cout << "resuming from " << out_checkpoint << " at step " << params.step << "\n";
    } else {
        params = nn::init_params(config.train.arch, config.train.seed);
    }

    pipeline::TrainResult result =
        pipeline::continue_train(std::move(params), dataset, config.train, stop_after_epoch);

    nn::save_checkpoint(result.params, config.train.optimizer, out_checkpoint);
    const std::string log_file = log_path.empty() ? out_checkpoint + ".log.csv" : log_path;
    pipeline::write_train_log_csv(result.log, log_file, cfg::csv_comment(config));

    if (!result.log.empty()) {
        const pipeline::EpochLog& last = result.log.back();
        std::printf("epoch %d/%d  total_loss=%.6f  angle=%.6f  contrastive=%.6f\n",
                    last.epoch + 1, config.train.epochs, last.total_loss, last.angle_loss,
                    last.contrastive_loss);
    }
    std::cout << "wrote checkpoint " << out_checkpoint << " (step " << result.params.step
              << ") and log " << log_file << "\n";
    return 0;
}

// The effective configuration behind an eval/finetune run is reconstructed
// from the checkpoint and dataset so CSV comment lines stay meaningful.
cfg::RunConfig config_from_state(const nn::Checkpoint& ck, const synthdata::Dataset& dataset) {
    cfg::RunConfig config = cfg::default_run_config();
    config.renderer = dataset.renderer;
    config.split = dataset.split;
    config.train.arch = ck.params.arch;
    config.train.optimizer = ck.optimizer;
    config.train.seed = ck.params.seed;
    return config;
}

int cmd_eval(const CommonOpts& opts, const std::string& checkpoint_path,
             const std::string& data_path, const std::string& split_name,
             const std::string& report_path, const std::string& histogram_path,
             const std::string& embeddings_path, bool strict) {
    if (opts.threads > 0) par::set_threads(opts.threads);
    nn::Checkpoint ck = nn::load_checkpoint(checkpoint_path);
    synthdata::Dataset dataset = synthdata::load_dataset(data_path);
    const synthdata::Split split = synthdata::parse_split(split_name);
    const std::string comment = cfg::csv_comment(config_from_state(ck, dataset));

    pipeline::EvalReport report = pipeline::evaluate(ck.params, dataset, split, strict);
    pipeline::print_report(std::cout, report);

    if (!report_path.empty()) {
        pipeline::write_report_csv(report, report_path, comment);
        std::cout << "wrote report " << report_path << "\n";
    }
    if (!histogram_path.empty()) {
        pipeline::write_histogram_csv(pipeline::error_histogram(ck.params, dataset, split),
                                      histogram_path, comment);
        std::cout << "wrote histogram " << histogram_path << "\n";
    }
    if (!embeddings_path.empty()) {
        pipeline::export_embeddings(ck.params, dataset, split, embeddings_path, comment);
        std::cout << "wrote embeddings " << embeddings_path << "\n";
    }
    return 0;
}

int cmd_finetune(const CommonOpts& opts, const TrainOverrides& over,
                 const std::string& checkpoint_path, const std::string& data_path, int shots,
                 std::vector<int> classes, const std::string& out_checkpoint) {
    nn::Checkpoint ck = nn::load_checkpoint(checkpoint_path);
    synthdata::Dataset dataset = synthdata::load_dataset(data_path);

    cfg::RunConfig config;
    if (opts.config_path.empty()) {
        config = config_from_state(ck, dataset);
    } else {
        config = cfg::parse_run_config(opts.config_path);
        config.renderer = dataset.renderer;
        config.split = dataset.split;
    }
    if (opts.seed_given) config.train.seed = opts.seed;
    if (opts.threads > 0) par::set_threads(opts.threads);
    config.train.arch = ck.params.arch; // architecture is baked into the checkpoint
    over.apply(config.train);

    if (classes.empty()) classes = dataset.split.unseen_classes;
    if (shots == 0) {
        std::cerr << "warning: --shots 0 leaves the checkpoint unchanged\n";
    }

    nn::ModelParams params = pipeline::finetune_fewshot(std::move(ck.params), dataset, shots,
                                                        classes, config.train);
    nn::save_checkpoint(params, config.train.optimizer, out_checkpoint);
    std::cout << "wrote checkpoint " << out_checkpoint << " (step " << params.step << ")\n";
    return 0;
}

int cmd_gradcheck(const CommonOpts& opts, int instances, bool inject_sign_flip) {
    gradcheck::Options gopt;
    if (opts.seed_given) gopt.seed = opts.seed;
    if (instances > 0) gopt.instances = instances;
    gopt.inject_sign_flip = inject_sign_flip;
    if (opts.threads > 0) par::set_threads(opts.threads);

    std::vector<gradcheck::CheckResult> results = gradcheck::run_all(gopt);
    gradcheck::print_results(std::cout, results);
    return gradcheck::all_passed(results) ? 0 : 1;
}

int cmd_sweep(const CommonOpts& opts, const TrainOverrides& over, const std::string& param,
              const std::vector<std::string>& values, const std::string& data_path,
              const std::string& out_path) {
    cfg::RunConfig config = resolve_config(opts);
    synthdata::Dataset dataset = data_path.empty()
                                     ? synthdata::generate_dataset(config.renderer, config.split)
                                     : synthdata::load_dataset(data_path);
    fit_arch_to_dataset(config, dataset);
    over.apply(config.train);

    std::vector<pipeline::SweepRow> rows = pipeline::sweep(param, values, dataset, config.train);
    pipeline::write_sweep_csv(rows, out_path, cfg::csv_comment(config));
    for (const pipeline::SweepRow& row : rows) {
        std::printf("%s=%s  seen acc30=%.4f mederr=%.2f  unseen acc30=%.4f mederr=%.2f\n",
                    row.param.c_str(), row.value.c_str(), row.seen_acc30, row.seen_mederr_deg,
                    row.unseen_acc30, row.unseen_mederr_deg);
    }
    std::cout << "wrote sweep " << out_path << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"posebench: pose losses and ablations on a synthetic benchmark"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(posebench::kToolVersion));

    CLI::App* generate = app.add_subcommand("generate", "Render a dataset file");
    CommonOpts gen_opts;
    std::string gen_out;
    add_common(generate, gen_opts);
    generate->add_option("--out", gen_out, "Output dataset path")->required();

    CLI::App* train = app.add_subcommand("train", "Train a model");
    CommonOpts train_opts;
    TrainOverrides train_over;
    std::string train_data, train_ckpt, train_log;
    bool train_resume = false;
    int train_stop_after = 0;
    add_common(train, train_opts);
    train_over.add(train);
    train->add_option("--data", train_data, "Dataset file")->required();
    train->add_option("--out-checkpoint", train_ckpt, "Checkpoint path")->required();
    train->add_option("--log", train_log, "Training-log CSV (default <checkpoint>.log.csv)");
    train->add_flag("--resume", train_resume, "Continue from the checkpoint at --out-checkpoint");
    train->add_option("--stop-after-epoch", train_stop_after,
                      "Pause after this many epochs (0 = run to completion)");

    CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
    CommonOpts eval_opts;
    std::string eval_ckpt, eval_data, eval_split = "val";
    std::string eval_report, eval_hist, eval_emb;
    bool eval_strict = false;
    add_common(eval, eval_opts, /*with_config=*/false);
    eval->add_option("--checkpoint", eval_ckpt, "Checkpoint file")->required();
    eval->add_option("--data", eval_data, "Dataset file")->required();
    eval->add_option("--split", eval_split, "train or val (default val)");
    eval->add_option("--report", eval_report, "Per-class report CSV");
    eval->add_option("--histogram", eval_hist, "Error-histogram CSV");
    eval->add_option("--embeddings", eval_emb, "Embeddings CSV");
    eval->add_flag("--strict", eval_strict, "Count exactly-30-degree errors as misses");

    CLI::App* finetune = app.add_subcommand("finetune", "Few-shot fine-tune on novel classes");
    CommonOpts ft_opts;
    TrainOverrides ft_over;
    std::string ft_ckpt, ft_data, ft_out;
    int ft_shots = 0;
    std::vector<int> ft_classes;
    add_common(finetune, ft_opts);
    ft_over.add(finetune);
    finetune->add_option("--checkpoint", ft_ckpt, "Starting checkpoint")->required();
    finetune->add_option("--data", ft_data, "Dataset file")->required();
    finetune->add_option("--shots", ft_shots, "Train records per novel class")->required();
    finetune->add_option("--classes", ft_classes, "Novel classes (default: dataset unseen)")
        ->delimiter(',');
    finetune->add_option("--out-checkpoint", ft_out, "Checkpoint path")->required();

    CLI::App* gradcheckcmd = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
    CommonOpts gc_opts;
    int gc_instances = 0;
    bool gc_flip = false;
    add_common(gradcheckcmd, gc_opts, /*with_config=*/false);
    gradcheckcmd->add_option("--instances", gc_instances, "Random instances per check");
    gradcheckcmd->add_flag("--inject-sign-flip", gc_flip,
                           "Negative control: corrupt one analytic gradient");

    CLI::App* sweep = app.add_subcommand("sweep", "Train/eval once per parameter value");
    CommonOpts sweep_opts;
    TrainOverrides sweep_over;
    std::string sweep_param, sweep_data, sweep_out;
    std::vector<std::string> sweep_values;
    add_common(sweep, sweep_opts);
    sweep_over.add(sweep);
    sweep->add_option("--param", sweep_param, "tau|kappa|lambda|weight_mode")->required();
    sweep->add_option("--values", sweep_values, "Comma-separated values")
        ->required()
        ->delimiter(',');
    sweep->add_option("--data", sweep_data, "Dataset file (default: generate from config)");
    sweep->add_option("--out", sweep_out, "Sweep CSV path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e); // --help / --version
        app.exit(e);
        return 2;
    }

    try {
        if (*generate) return cmd_generate(gen_opts, gen_out);
        if (*train) {
            return cmd_train(train_opts, train_over, train_data, train_ckpt, train_log,
                             train_resume, train_stop_after);
        }
        if (*eval) {
            return cmd_eval(eval_opts, eval_ckpt, eval_data, eval_split, eval_report, eval_hist,
                            eval_emb, eval_strict);
        }
        if (*finetune) {
            return cmd_finetune(ft_opts, ft_over, ft_ckpt, ft_data, ft_shots, ft_classes, ft_out);
        }
        if (*gradcheckcmd) return cmd_gradcheck(gc_opts, gc_instances, gc_flip);
        if (*sweep) {
            return cmd_sweep(sweep_opts, sweep_over, sweep_param, sweep_values, sweep_data,
                             sweep_out);
        }
    } catch (const posebench::UserError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
