#include "posebench/synthdata.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <string>

#include "json_helpers.hpp"
#include "posebench/parallel.hpp"

namespace posebench::synthdata {

namespace {

using geometry::PoseLabel;

// Internal renderer shape constants. Fourier projection frequencies are
// N(0, kFreqScale^2) per matrix entry; nuisance directions get an extra
// kNuisanceScale on top of the 1/sqrt(dim) normalization so pose signal
// stays dominant but nuisance is not negligible.
constexpr double kFreqScale = 1.5;
constexpr double kNuisanceScale = 2.0;

void fill_normal(rng::Rng& stream, double scale, std::vector<double>& out, std::size_t offset,
                 std::size_t count) {
    for (std::size_t i = 0; i < count; ++i) {
        out[offset + i] = stream.normal() * scale;
    }
}

} // namespace

std::vector<int> RendererConfig::resolved_groups() const {
    if (!class_to_group.empty()) return class_to_group;
    std::vector<int> groups(static_cast<std::size_t>(num_classes));
    for (int c = 0; c < num_classes; ++c) {
        groups[static_cast<std::size_t>(c)] = c % num_geometry_groups;
    }
    return groups;
}

void RendererConfig::validate() const {
    if (num_classes < 1) throw ConfigError("renderer: num_classes must be >= 1");
    if (num_geometry_groups < 1) throw ConfigError("renderer: num_geometry_groups must be >= 1");
    if (input_dim < 1) throw ConfigError("renderer: input_dim must be >= 1");
    if (fourier_dim < 0) throw ConfigError("renderer: fourier_dim must be >= 0");
    if (nuisance_dim < 1) throw ConfigError("renderer: nuisance_dim must be >= 1");
    if (!(class_perturbation_scale >= 0.0)) {
        throw ConfigError("renderer: class_perturbation_scale must be >= 0");
    }
    if (!(noise_sigma >= 0.0)) throw ConfigError("renderer: noise_sigma must be >= 0");
    if (!class_to_group.empty()) {
        if (class_to_group.size() != static_cast<std::size_t>(num_classes)) {
            throw ConfigError("renderer: class_to_group must list every class");
        }
        for (int g : class_to_group) {
            if (g < 0 || g >= num_geometry_groups) {
                throw ConfigError("renderer: class_to_group entry out of range");
            }
        }
    }
}

std::string_view split_name(Split s) {
    return s == Split::train ? "train" : "val";
}

Split parse_split(std::string_view name) {
    if (name == "train") return Split::train;
    if (name == "val") return Split::val;
    throw UserError("unknown split '" + std::string(name) + "' (expected train|val)");
}

Renderer::Renderer(const RendererConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    groups_ = cfg_.resolved_groups();
    const auto classes = static_cast<std::size_t>(cfg_.num_classes);
    const auto phi_dim = static_cast<std::size_t>(feature_map_dim());
    const auto in_dim = static_cast<std::size_t>(cfg_.input_dim);
    const auto nui_dim = static_cast<std::size_t>(cfg_.nuisance_dim);

    fourier_dirs_.assign(static_cast<std::size_t>(cfg_.fourier_dim) * 9, 0.0);
    {
        rng::Rng stream = rng::substream(cfg_.master_seed, "fourier");
        fill_normal(stream, kFreqScale, fourier_dirs_, 0, fourier_dirs_.size());
    }

    // Group tables first, then per-class perturbations on top.
    const double basis_scale = 1.0 / std::sqrt(static_cast<double>(phi_dim));
    std::vector<double> group_tables(static_cast<std::size_t>(cfg_.num_geometry_groups) *
                                     in_dim * phi_dim);
    for (int g = 0; g < cfg_.num_geometry_groups; ++g) {
        rng::Rng stream = rng::substream(cfg_.master_seed, "group", static_cast<std::uint64_t>(g));
        fill_normal(stream, basis_scale, group_tables, static_cast<std::size_t>(g) * in_dim * phi_dim,
                    in_dim * phi_dim);
    }
    class_basis_.assign(classes * in_dim * phi_dim, 0.0);
    for (int c = 0; c < cfg_.num_classes; ++c) {
        rng::Rng stream =
            rng::substream(cfg_.master_seed, "class_perturb", static_cast<std::uint64_t>(c));
        const std::size_t dst = static_cast<std::size_t>(c) * in_dim * phi_dim;
        const std::size_t src = static_cast<std::size_t>(groups_[static_cast<std::size_t>(c)]) *
                                in_dim * phi_dim;
        for (std::size_t i = 0; i < in_dim * phi_dim; ++i) {
            class_basis_[dst + i] = group_tables[src + i] +
                                    cfg_.class_perturbation_scale * stream.normal() * basis_scale;
        }
    }

    // The nuisance directions C_c follow the class's geometry group, so the
    // suppression a model learns on seen classes carries over to an unseen
    // group-mate; a small per-class component keeps classes distinguishable.
    const double nuisance_scale = kNuisanceScale / std::sqrt(static_cast<double>(nui_dim));
    std::vector<double> group_nuisance(static_cast<std::size_t>(cfg_.num_geometry_groups) *
                                       in_dim * nui_dim);
    for (int g = 0; g < cfg_.num_geometry_groups; ++g) {
        rng::Rng stream =
            rng::substream(cfg_.master_seed, "group_nuisance", static_cast<std::uint64_t>(g));
        fill_normal(stream, nuisance_scale, group_nuisance,
                    static_cast<std::size_t>(g) * in_dim * nui_dim, in_dim * nui_dim);
    }
    nuisance_basis_.assign(classes * in_dim * nui_dim, 0.0);
    for (int c = 0; c < cfg_.num_classes; ++c) {
        rng::Rng stream =
            rng::substream(cfg_.master_seed, "nuisance_basis", static_cast<std::uint64_t>(c));
        const std::size_t dst = static_cast<std::size_t>(c) * in_dim * nui_dim;
        const std::size_t src = static_cast<std::size_t>(groups_[static_cast<std::size_t>(c)]) *
                                in_dim * nui_dim;
        for (std::size_t i = 0; i < in_dim * nui_dim; ++i) {
            nuisance_basis_[dst + i] = group_nuisance[src + i] +
                                       cfg_.class_perturbation_scale * stream.normal() *
                                           nuisance_scale;
        }
    }
}

int Renderer::group_of(int class_id) const {
    if (class_id < 0 || class_id >= cfg_.num_classes) {
        throw BadClassIdError("class id " + std::to_string(class_id) + " out of range");
    }
    return groups_[static_cast<std::size_t>(class_id)];
}

void Renderer::pose_features(const PoseLabel& pose, double* out) const {
    const geometry::RotationMatrix r = geometry::euler_to_matrix(pose);
    for (std::size_t i = 0; i < 9; ++i) out[i] = r.m[i];
    for (int j = 0; j < cfg_.fourier_dim; ++j) {
        double t = 0.0;
        const double* dir = fourier_dirs_.data() + static_cast<std::size_t>(j) * 9;
        for (std::size_t i = 0; i < 9; ++i) t += dir[i] * r.m[i];
        out[9 + 2 * j] = std::cos(t);
        out[9 + 2 * j + 1] = std::sin(t);
    }
}

void Renderer::latents_for(std::uint64_t nuisance_seed, std::vector<double>& z,
                           std::vector<double>& eta) const {
    rng::Rng stream = rng::substream(cfg_.master_seed, "latents", nuisance_seed);
    z.resize(static_cast<std::size_t>(cfg_.nuisance_dim));
    for (auto& v : z) v = stream.normal();
    eta.resize(static_cast<std::size_t>(cfg_.input_dim));
    for (auto& v : eta) v = stream.normal();
}

std::vector<double> Renderer::render_with_latents(int class_id, const PoseLabel& pose,
                                                  const double* z, const double* eta) const {
    if (class_id < 0 || class_id >= cfg_.num_classes) {
        throw BadClassIdError("class id " + std::to_string(class_id) + " out of range");
    }
    const auto phi_dim = static_cast<std::size_t>(feature_map_dim());
    const auto in_dim = static_cast<std::size_t>(cfg_.input_dim);
    const auto nui_dim = static_cast<std::size_t>(cfg_.nuisance_dim);

    std::vector<double> phi(phi_dim);
    pose_features(pose, phi.data());

    std::vector<double> x(in_dim, 0.0);
    const double* basis = class_basis_.data() + static_cast<std::size_t>(class_id) * in_dim * phi_dim;
    const double* nbasis =
        nuisance_basis_.data() + static_cast<std::size_t>(class_id) * in_dim * nui_dim;
    for (std::size_t i = 0; i < in_dim; ++i) {
        double acc = 0.0;
        const double* row = basis + i * phi_dim;
        for (std::size_t p = 0; p < phi_dim; ++p) acc += row[p] * phi[p];
        const double* nrow = nbasis + i * nui_dim;
        for (std::size_t j = 0; j < nui_dim; ++j) acc += nrow[j] * z[j];
        x[i] = acc + cfg_.noise_sigma * eta[i];
    }
    return x;
}

std::vector<double> Renderer::render(int class_id, const PoseLabel& pose,
                                     std::uint64_t nuisance_seed) const {
    std::vector<double> z, eta;
    latents_for(nuisance_seed, z, eta);
    return render_with_latents(class_id, pose, z.data(), eta.data());
}

void Renderer::render_rows(const std::vector<int>& class_ids,
                           const std::vector<geometry::PoseLabel>& poses,
                           const std::vector<std::uint64_t>& nuisance_seeds,
                           nn::Tensor& out) const {
    const std::size_t n = class_ids.size();
    if (poses.size() != n || nuisance_seeds.size() != n) {
        throw ShapeMismatchError("render_rows: class/pose/seed lists differ in length");
    }
    for (int c : class_ids) {
        (void)group_of(c); // validate before entering the parallel region
    }
    out = nn::Tensor::zeros({static_cast<std::int64_t>(n), cfg_.input_dim});
    par::for_each_index(static_cast<std::int64_t>(n), [&](std::int64_t i) {
        const auto idx = static_cast<std::size_t>(i);
        const std::vector<double> x =
            render(class_ids[idx], poses[idx], nuisance_seeds[idx]);
        std::copy(x.begin(), x.end(), out.values.begin() + i * cfg_.input_dim);
    });
}

void Renderer::render_records(const std::vector<const SampleRecord*>& records,
                              nn::Tensor& out) const {
    std::vector<int> class_ids(records.size());
    std::vector<PoseLabel> poses(records.size());
    std::vector<std::uint64_t> seeds(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        class_ids[i] = records[i]->class_id;
        poses[i] = records[i]->pose;
        seeds[i] = records[i]->nuisance_seed;
    }
    render_rows(class_ids, poses, seeds, out);
}

std::vector<const SampleRecord*> Dataset::select(Split s) const {
    std::vector<const SampleRecord*> out;
    for (const auto& r : records) {
        if (r.split == s) out.push_back(&r);
    }
    return out;
}

std::vector<const SampleRecord*> Dataset::select(Split s, const std::vector<int>& classes) const {
    std::vector<const SampleRecord*> out;
    for (const auto& r : records) {
        if (r.split == s &&
            std::find(classes.begin(), classes.end(), r.class_id) != classes.end()) {
            out.push_back(&r);
        }
    }
    return out;
}

namespace {

void validate_split_spec(const RendererConfig& renderer, const SplitSpec& spec) {
    if (spec.train_count < 0 || spec.val_count < 0) {
        throw InvalidSplitError("split: negative record count");
    }
    auto check_list = [&](const std::vector<int>& classes, const char* name) {
        std::set<int> seen;
        for (int c : classes) {
            if (c < 0 || c >= renderer.num_classes) {
                throw InvalidSplitError(std::string("split: ") + name + " class " +
                                        std::to_string(c) + " out of range");
            }
            if (!seen.insert(c).second) {
                throw InvalidSplitError(std::string("split: duplicate class in ") + name);
            }
        }
    };
    check_list(spec.seen_classes, "seen");
    check_list(spec.unseen_classes, "unseen");
    if (spec.seen_classes.empty()) {
        throw InvalidSplitError("split: seen_classes must not be empty");
    }
    for (int c : spec.unseen_classes) {
        if (std::find(spec.seen_classes.begin(), spec.seen_classes.end(), c) !=
            spec.seen_classes.end()) {
            throw InvalidSplitError("split: class " + std::to_string(c) +
                                    " is both seen and unseen");
        }
    }
}

} // namespace

Dataset generate_dataset(const RendererConfig& renderer, const SplitSpec& split) {
    renderer.validate();
    validate_split_spec(renderer, split);

    Dataset ds;
    ds.renderer = renderer;
    ds.split = split;

    const std::vector<int> groups = renderer.resolved_groups();
    std::set<int> seen_groups;
    for (int c : split.seen_classes) seen_groups.insert(groups[static_cast<std::size_t>(c)]);
    for (int c : split.unseen_classes) {
        if (seen_groups.count(groups[static_cast<std::size_t>(c)]) == 0) {
            ds.warnings.isolated_unseen_classes.push_back(c);
        }
    }
    std::sort(ds.warnings.isolated_unseen_classes.begin(),
              ds.warnings.isolated_unseen_classes.end());

    std::vector<int> all_classes = split.seen_classes;
    all_classes.insert(all_classes.end(), split.unseen_classes.begin(),
                       split.unseen_classes.end());
    std::sort(all_classes.begin(), all_classes.end());

    rng::Rng stream = rng::substream(renderer.master_seed, "dataset");
    char idbuf[32];
    auto emit = [&](Split s, const char* prefix, int count) {
        for (int i = 0; i < count; ++i) {
            SampleRecord rec;
            std::snprintf(idbuf, sizeof(idbuf), "%s-%06d", prefix, i);
            rec.id = idbuf;
            rec.class_id =
                all_classes[static_cast<std::size_t>(stream.below(all_classes.size()))];
            rec.geometry_group = groups[static_cast<std::size_t>(rec.class_id)];
            rec.split = s;
            const double az = stream.uniform(-geometry::kPi, geometry::kPi);
            const double el = stream.uniform(-geometry::kPi / 3.0, geometry::kPi / 3.0);
            const double in = stream.uniform(-geometry::kPi / 12.0, geometry::kPi / 12.0);
            rec.pose = PoseLabel::make(az, el, in);
            rec.nuisance_seed = stream.next_u64();
            ds.records.push_back(std::move(rec));
        }
    };
    emit(Split::train, "train", split.train_count);
    emit(Split::val, "val", split.val_count);
    return ds;
}

void write_dataset(const Dataset& dataset, const std::filesystem::path& path) {
    nlohmann::json header{
        {"format", "posebench-dataset"},
        {"version", 1},
        {"renderer", renderer_to_json(dataset.renderer)},
        {"split", split_to_json(dataset.split)},
        {"warnings",
         nlohmann::json{{"isolated_unseen_classes", dataset.warnings.isolated_unseen_classes}}},
        {"record_count", dataset.records.size()}};

    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) {
        throw IoError("cannot open dataset for writing: " + path.string());
    }
    file << header.dump() << '\n';

    char line[256];
    for (const auto& rec : dataset.records) {
        std::snprintf(line, sizeof(line),
                      "{\"id\":\"%s\",\"class_id\":%d,\"geometry_group\":%d,\"split\":\"%s\","
                      "\"pose_deg\":{\"az\":%.9f,\"el\":%.9f,\"in\":%.9f},"
                      "\"nuisance_seed\":%" PRIu64 "}",
                      rec.id.c_str(), rec.class_id, rec.geometry_group,
                      std::string(split_name(rec.split)).c_str(),
                      geometry::rad2deg(rec.pose.azimuth), geometry::rad2deg(rec.pose.elevation),
                      geometry::rad2deg(rec.pose.inplane), rec.nuisance_seed);
        file << line << '\n';
    }
    if (!file) {
        throw IoError("failed writing dataset: " + path.string());
    }
}

Dataset load_dataset(const std::filesystem::path& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) {
        throw IoError("cannot open dataset: " + path.string());
    }
    std::string line;
    if (!std::getline(file, line)) {
        throw FormatError(path.string() + ": empty dataset file");
    }

    Dataset ds;
    try {
        const nlohmann::json header = nlohmann::json::parse(line);
        if (header.at("format").get<std::string>() != "posebench-dataset") {
            throw FormatError(path.string() + ": not a posebench dataset");
        }
        if (header.at("version").get<int>() != 1) {
            throw FormatError(path.string() + ": unsupported dataset version");
        }
        ds.renderer = renderer_from_json(header.at("renderer"));
        ds.split = split_from_json(header.at("split"));
        ds.warnings.isolated_unseen_classes =
            header.at("warnings").at("isolated_unseen_classes").get<std::vector<int>>();
        const auto count = header.at("record_count").get<std::size_t>();
        ds.records.reserve(count);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": bad dataset header: " + e.what());
    }

    const std::vector<int> groups = ds.renderer.resolved_groups();
    std::size_t line_no = 1;
    while (std::getline(file, line)) {
        ++line_no;
        if (line.empty()) continue;
        SampleRecord rec;
        try {
            const nlohmann::json j = nlohmann::json::parse(line);
            rec.id = j.at("id").get<std::string>();
            rec.class_id = j.at("class_id").get<int>();
            rec.geometry_group = j.at("geometry_group").get<int>();
            rec.split = parse_split(j.at("split").get<std::string>());
            const auto& pose = j.at("pose_deg");
            rec.pose = PoseLabel::make(geometry::deg2rad(pose.at("az").get<double>()),
                                       geometry::deg2rad(pose.at("el").get<double>()),
                                       geometry::deg2rad(pose.at("in").get<double>()));
            rec.nuisance_seed = j.at("nuisance_seed").get<std::uint64_t>();
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(path.string() + ":" + std::to_string(line_no) +
                              ": bad record: " + e.what());
        }
        if (rec.class_id < 0 || rec.class_id >= ds.renderer.num_classes) {
            throw FormatError(path.string() + ":" + std::to_string(line_no) +
                              ": class id out of range");
        }
        if (rec.geometry_group != groups[static_cast<std::size_t>(rec.class_id)]) {
            throw FormatError(path.string() + ":" + std::to_string(line_no) +
                              ": geometry_group disagrees with the renderer header");
        }
        ds.records.push_back(std::move(rec));
    }
    return ds;
}

geometry::PoseLabel augment_pose(const geometry::PoseLabel& pose, bool flip, double delta) {
    const geometry::PoseLabel base = flip ? geometry::flip_pose(pose) : pose;
    return geometry::rotate_inplane(base, delta);
}

AugmentedBatch batch_augment(const Renderer& renderer,
                             const std::vector<const SampleRecord*>& records,
                             const AugmentationConfig& cfg, rng::Rng& stream) {
    const std::size_t n = records.size();
    AugmentedBatch batch;
    batch.poses.resize(n);
    std::vector<int> class_ids(n);
    std::vector<std::uint64_t> seeds(n);
    const double range = geometry::deg2rad(cfg.rotation_range_deg);
    for (std::size_t i = 0; i < n; ++i) {
        // Fixed two draws per record regardless of outcome.
        const bool flip = stream.bernoulli(cfg.flip_probability);
        const double delta = stream.uniform(-range, range);
        batch.poses[i] = augment_pose(records[i]->pose, flip, delta);
        class_ids[i] = records[i]->class_id;
        seeds[i] = records[i]->nuisance_seed;
    }
    renderer.render_rows(class_ids, batch.poses, seeds, batch.features);
    return batch;
}

ContrastViews contrast_views(const Renderer& renderer,
                             const std::vector<const SampleRecord*>& records,
                             const std::vector<geometry::PoseLabel>& poses,
                             const AugmentationConfig& cfg, rng::Rng& stream) {
    const std::size_t n = records.size();
    if (poses.size() != n) {
        throw ShapeMismatchError("contrast_views: pose list does not match records");
    }
    const auto nui = static_cast<std::size_t>(renderer.config().nuisance_dim);
    const auto dim = static_cast<std::size_t>(renderer.config().input_dim);
    for (const auto* rec : records) {
        (void)renderer.group_of(rec->class_id);
    }

    // All randomness is drawn serially up front (query jitter, query noise,
    // key jitter, key noise per sample); rendering then parallelizes.
    std::vector<double> jitter_q(n * nui), jitter_k(n * nui);
    std::vector<double> noise_q(n * dim), noise_k(n * dim);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < nui; ++j) jitter_q[i * nui + j] = stream.normal();
        for (std::size_t j = 0; j < dim; ++j) noise_q[i * dim + j] = stream.normal();
        for (std::size_t j = 0; j < nui; ++j) jitter_k[i * nui + j] = stream.normal();
        for (std::size_t j = 0; j < dim; ++j) noise_k[i * dim + j] = stream.normal();
    }

    ContrastViews views;
    views.query = nn::Tensor::zeros({static_cast<std::int64_t>(n), renderer.config().input_dim});
    views.key = nn::Tensor::zeros({static_cast<std::int64_t>(n), renderer.config().input_dim});
    par::for_each_index(static_cast<std::int64_t>(n), [&](std::int64_t i) {
        const auto idx = static_cast<std::size_t>(i);
        std::vector<double> z, eta;
        renderer.latents_for(records[idx]->nuisance_seed, z, eta);
        std::vector<double> zv(nui);
        auto render_view = [&](const double* jitter, const double* noise, nn::Tensor& out) {
            for (std::size_t j = 0; j < nui; ++j) {
                zv[j] = z[j] + cfg.nuisance_jitter * jitter[j];
            }
            const std::vector<double> x = renderer.render_with_latents(
                records[idx]->class_id, poses[idx], zv.data(), eta.data());
            for (std::size_t j = 0; j < dim; ++j) {
                out.values[idx * dim + j] = x[j] + cfg.pose_invariant_noise * noise[j];
            }
        };
        render_view(jitter_q.data() + idx * nui, noise_q.data() + idx * dim, views.query);
        render_view(jitter_k.data() + idx * nui, noise_k.data() + idx * dim, views.key);
    });
    return views;
}

} // namespace posebench::synthdata
