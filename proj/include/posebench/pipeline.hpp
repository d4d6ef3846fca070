#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "posebench/losses.hpp"
#include "posebench/nn.hpp"
#include "posebench/synthdata.hpp"

namespace posebench::pipeline {

struct TrainConfig {
    int epochs = 15;
    int batch_size = 32;
    std::uint64_t seed = 0;
    int finetune_epochs = 15;
    bool acc30_strict = false; // strict '<' instead of '<=' at exactly 30 degrees

    nn::ArchitectureConfig arch;
    nn::OptimizerConfig optimizer;
    losses::AngleLossConfig angle;
    losses::ContrastiveConfig contrastive;
    losses::TotalLossConfig total;
    synthdata::AugmentationConfig augment;

    void validate() const; // ConfigError
};

struct EpochLog {
    int epoch = 0;               // 0-based
    std::int64_t steps_done = 0; // params.step after this epoch
    double angle_loss = 0.0;     // means over this epoch's batches
    double contrastive_loss = 0.0;
    double total_loss = 0.0;
    double learning_rate = 0.0; // effective LR at the epoch's last step
};

struct TrainResult {
    nn::ModelParams params;
    std::vector<EpochLog> log;
};

// Base training on the seen-class train records. Batches are drawn from a
// per-epoch shuffle; per-(epoch, batch) RNG substreams of cfg.seed drive
// augmentation, so a reloaded checkpoint replays the identical sequence.
// Throws DatasetTooSmallError when the records cannot fill one batch.
TrainResult train(const synthdata::Dataset& dataset, const TrainConfig& cfg);

// Resume from an existing state (params.step says where). stop_after_epoch
// bounds this call (0 = run to cfg.epochs); the LR schedule always spans the
// full cfg.epochs, so split runs match a single run bit-for-bit.
TrainResult continue_train(nn::ModelParams params, const synthdata::Dataset& dataset,
                           const TrainConfig& cfg, int stop_after_epoch = 0);

// Deterministic K-shot selection from the train-split records of each class
// (ascending class order, per-class substreams of `seed`). Returns indices
// into dataset.records. Throws NotEnoughShotsError.
std::vector<std::size_t> select_shots(const synthdata::Dataset& dataset, int shots,
                                      const std::vector<int>& classes, std::uint64_t seed);

// Continue training on seen-class train records plus `shots` train records of
// each novel class, for cfg.finetune_epochs at the decayed learning rate.
// shots == 0 returns the params unchanged.
nn::ModelParams finetune_fewshot(nn::ModelParams params, const synthdata::Dataset& dataset,
                                 int shots, const std::vector<int>& novel_classes,
                                 const TrainConfig& cfg);

struct SampleError {
    std::string id;
    int class_id = 0;
    double error_deg = 0.0; // geodesic angle between truth and prediction
};

struct ClassStats {
    int class_id = 0;
    int count = 0;
    double acc30 = 0.0;      // fraction with error <= 30 deg (or < when strict)
    double mederr_deg = 0.0; // lower-middle median
};

struct EvalReport {
    std::vector<ClassStats> per_class; // ascending class id
    double mean_acc30 = 0.0;           // mean over classes
    double mean_mederr_deg = 0.0;
    double global_acc30 = 0.0; // over all samples
    double global_mederr_deg = 0.0;
    int total_count = 0;
    std::vector<SampleError> per_sample; // record order
};

std::vector<geometry::PoseLabel> predict_poses(
    const nn::ModelParams& params, const synthdata::Dataset& dataset,
    const std::vector<const synthdata::SampleRecord*>& records);

// Metrics from precomputed predictions (also the hook for oracle predictors
// in tests). Throws EmptySplitError on an empty record list.
EvalReport report_from_predictions(const std::vector<const synthdata::SampleRecord*>& records,
                                   const std::vector<geometry::PoseLabel>& predictions,
                                   bool strict);

EvalReport evaluate(const nn::ModelParams& params, const synthdata::Dataset& dataset,
                    synthdata::Split split, bool strict = false);

// Mean metric over the per-class rows restricted to `classes`; NaN when none
// of them appear in the report.
double subset_mean_acc30(const EvalReport& report, const std::vector<int>& classes);
double subset_mean_mederr(const EvalReport& report, const std::vector<int>& classes);

struct ClassHistogram {
    int class_id = 0;
    int count = 0;
    std::array<std::int64_t, 24> signed_azimuth{}; // [-180, 180) in 15-degree bins
    std::array<std::int64_t, 12> geodesic{};       // [0, 180] in 15-degree bins
};

std::vector<ClassHistogram> error_histogram(const nn::ModelParams& params,
                                            const synthdata::Dataset& dataset,
                                            synthdata::Split split);

// CSV: "# <comment>" (when non-empty), header row, then
// id,class_id,az_deg,el_deg,in_deg,e0..e{feature_dim-1}.
void export_embeddings(const nn::ModelParams& params, const synthdata::Dataset& dataset,
                       synthdata::Split split, const std::filesystem::path& path,
                       const std::string& comment = {});

struct SweepRow {
    std::string param;
    std::string value;
    EvalReport report;
    double seen_acc30 = 0.0;
    double seen_mederr_deg = 0.0;
    double unseen_acc30 = 0.0;
    double unseen_mederr_deg = 0.0;
};

// Trains one model per value (same seed/data for every point) and evaluates
// on val. param is one of tau|kappa|lambda|weight_mode; weight_mode
// additionally sets include_positive_in_denominator for constant_one so that
// point reproduces the unweighted loss exactly.
std::vector<SweepRow> sweep(const std::string& param, const std::vector<std::string>& values,
                            const synthdata::Dataset& dataset, const TrainConfig& base);

void write_train_log_csv(const std::vector<EpochLog>& log, const std::filesystem::path& path,
                         const std::string& comment = {});
void write_report_csv(const EvalReport& report, const std::filesystem::path& path,
                      const std::string& comment = {});
void write_histogram_csv(const std::vector<ClassHistogram>& histograms,
                         const std::filesystem::path& path, const std::string& comment = {});
void write_sweep_csv(const std::vector<SweepRow>& rows, const std::filesystem::path& path,
                     const std::string& comment = {});

void print_report(std::ostream& out, const EvalReport& report);

} // namespace posebench::pipeline
