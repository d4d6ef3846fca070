#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "posebench/geometry.hpp"
#include "posebench/rng.hpp"
#include "posebench/tensor.hpp"

namespace posebench::synthdata {

// Synthetic pose "renderer". A sample of class c at rotation R is
//   x = B_c * phi(R) + C_c * z + noise_sigma * eta
// where phi stacks the 9 matrix entries with cos/sin of fourier_dim random
// projections of them, B_c = G_{group(c)} + class_perturbation_scale * P_c
// shares structure within a geometry group, C_c spans per-class nuisance
// directions, and (z, eta) are standard-normal latents derived from the
// sample's nuisance seed. All tables derive from master_seed alone, so one
// config renders identically everywhere.
struct RendererConfig {
    std::uint64_t master_seed = 0;
    int num_classes = 10;
    int num_geometry_groups = 4;
    int input_dim = 64;
    int fourier_dim = 32;
    int nuisance_dim = 8;
    double class_perturbation_scale = 0.1;
    double noise_sigma = 0.05;
    // Per-class group ids; empty picks class c -> group c % num_geometry_groups.
    std::vector<int> class_to_group;

    std::vector<int> resolved_groups() const;
    void validate() const; // ConfigError on inconsistent values

    bool operator==(const RendererConfig& other) const = default;
};

enum class Split { train, val };

std::string_view split_name(Split s);
Split parse_split(std::string_view name); // UserError on unknown

struct SampleRecord {
    std::string id;
    int class_id = 0;
    int geometry_group = 0;
    Split split = Split::train;
    geometry::PoseLabel pose;
    std::uint64_t nuisance_seed = 0;
};

// Which classes count as seen (base training) vs unseen (evaluation /
// few-shot pool), plus record counts per split.
struct SplitSpec {
    std::vector<int> seen_classes;
    std::vector<int> unseen_classes;
    int train_count = 5000;
    int val_count = 1000;

    bool operator==(const SplitSpec& other) const = default;
};

struct AugmentationConfig {
    double flip_probability = 0.5;
    double rotation_range_deg = 15.0;  // in-plane delta drawn uniform in +-range
    double pose_invariant_noise = 0.02;
    double nuisance_jitter = 0.1;

    bool operator==(const AugmentationConfig& other) const = default;
};

class Renderer {
public:
    explicit Renderer(const RendererConfig& cfg);

    const RendererConfig& config() const { return cfg_; }
    int feature_map_dim() const { return 9 + 2 * cfg_.fourier_dim; }
    int group_of(int class_id) const;

    // phi(R): out must hold feature_map_dim() doubles.
    void pose_features(const geometry::PoseLabel& pose, double* out) const;

    // Standard-normal latents for one sample, derived from its nuisance seed.
    void latents_for(std::uint64_t nuisance_seed, std::vector<double>& z,
                     std::vector<double>& eta) const;

    // z has nuisance_dim entries, eta input_dim. Throws BadClassIdError.
    std::vector<double> render_with_latents(int class_id, const geometry::PoseLabel& pose,
                                            const double* z, const double* eta) const;

    std::vector<double> render(int class_id, const geometry::PoseLabel& pose,
                               std::uint64_t nuisance_seed) const;

    // Parallel row renders; out is resized to [n, input_dim].
    void render_records(const std::vector<const SampleRecord*>& records, nn::Tensor& out) const;
    void render_rows(const std::vector<int>& class_ids,
                     const std::vector<geometry::PoseLabel>& poses,
                     const std::vector<std::uint64_t>& nuisance_seeds, nn::Tensor& out) const;

private:
    RendererConfig cfg_;
    std::vector<int> groups_;
    std::vector<double> fourier_dirs_;   // [fourier_dim, 9]
    std::vector<double> class_basis_;    // [num_classes, input_dim, feature_map_dim]
    std::vector<double> nuisance_basis_; // [num_classes, input_dim, nuisance_dim]
};

struct DatasetWarnings {
    // Unseen classes whose geometry group contains no seen class; generalizing
    // to them is not supported by shared structure.
    std::vector<int> isolated_unseen_classes;
};

struct Dataset {
    RendererConfig renderer;
    SplitSpec split;
    DatasetWarnings warnings;
    std::vector<SampleRecord> records;

    std::vector<const SampleRecord*> select(Split split) const;
    std::vector<const SampleRecord*> select(Split split, const std::vector<int>& classes) const;
};

// Samples record lists for both splits over seen+unseen classes: class ids
// uniform over the union, azimuth uniform [-pi, pi), elevation uniform
// [-pi/3, pi/3], in-plane uniform [-pi/12, pi/12], fresh nuisance seed per
// record. Throws InvalidSplitError on a bad split spec.
Dataset generate_dataset(const RendererConfig& renderer, const SplitSpec& split);

// JSONL: one header line (renderer config, split spec, warnings, counts),
// then one record per line with poses in degrees (%.9f). Byte-stable for a
// given dataset.
void write_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

// Pose-variant augmentation core: optional mirror flip, then in-plane
// rotation by delta (radians). The label moves with the sample.
geometry::PoseLabel augment_pose(const geometry::PoseLabel& pose, bool flip, double delta);

struct AugmentedBatch {
    std::vector<geometry::PoseLabel> poses; // post-augmentation labels
    nn::Tensor features;                    // rendered at the augmented poses
};

// Draws (flip, delta) per record from `stream` in record order, then renders
// rows in parallel at the augmented poses with the records' nuisance seeds.
AugmentedBatch batch_augment(const Renderer& renderer,
                             const std::vector<const SampleRecord*>& records,
                             const AugmentationConfig& cfg, rng::Rng& stream);

struct ContrastViews {
    nn::Tensor query; // [n, input_dim]
    nn::Tensor key;
};

// Pose-invariant two-view construction at fixed poses: per sample, query and
// key share the pose but get independently jittered nuisance latents plus
// additive noise. Draw order per sample: query jitter (nuisance_dim), query
// noise (input_dim), then the key's. Poses/labels are not touched.
ContrastViews contrast_views(const Renderer& renderer,
                             const std::vector<const SampleRecord*>& records,
                             const std::vector<geometry::PoseLabel>& poses,
                             const AugmentationConfig& cfg, rng::Rng& stream);

} // namespace posebench::synthdata
