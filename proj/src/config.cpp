#include "posebench/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <string>

#include <json.hpp>

#include "json_helpers.hpp"
#include "posebench/rng.hpp"

namespace posebench::cfg {

namespace {

using json = nlohmann::json;

// Field-path-aware accessors: every failure names the offending key.

[[noreturn]] void bad_field(const std::string& path, const char* expected) {
    throw ConfigError("config: field '" + path + "' must be " + expected);
}

void reject_unknown(const json& section, const std::string& path,
                    const std::set<std::string>& known) {
    for (const auto& [key, value] : section.items()) {
        (void)value;
        if (known.count(key) == 0) {
            throw ConfigError("config: unknown key '" + (path.empty() ? key : path + "." + key) +
                              "'");
        }
    }
}

template <typename T>
void read_int_like(const json& section, const std::string& path, const char* key, T& out) {
    if (!section.contains(key)) return;
    const json& v = section.at(key);
    if (!v.is_number_integer() && !v.is_number_unsigned()) {
        bad_field(path + "." + key, "an integer");
    }
    out = v.get<T>();
}

void read_double(const json& section, const std::string& path, const char* key, double& out) {
    if (!section.contains(key)) return;
    const json& v = section.at(key);
    if (!v.is_number()) bad_field(path + "." + key, "a number");
    out = v.get<double>();
}

void read_bool(const json& section, const std::string& path, const char* key, bool& out) {
    if (!section.contains(key)) return;
    const json& v = section.at(key);
    if (!v.is_boolean()) bad_field(path + "." + key, "a boolean");
    out = v.get<bool>();
}

void read_int_list(const json& section, const std::string& path, const char* key,
                   std::vector<int>& out) {
    if (!section.contains(key)) return;
    const json& v = section.at(key);
    if (!v.is_array()) bad_field(path + "." + key, "an array of integers");
    std::vector<int> values;
    for (const auto& item : v) {
        if (!item.is_number_integer() && !item.is_number_unsigned()) {
            bad_field(path + "." + key, "an array of integers");
        }
        values.push_back(item.get<int>());
    }
    out = std::move(values);
}

void read_string(const json& section, const std::string& path, const char* key,
                 std::string& out) {
    if (!section.contains(key)) return;
    const json& v = section.at(key);
    if (!v.is_string()) bad_field(path + "." + key, "a string");
    out = v.get<std::string>();
}

json train_to_json(const pipeline::TrainConfig& t) {
    return json{{"epochs", t.epochs},
                {"batch_size", t.batch_size},
                {"seed", t.seed},
                {"finetune_epochs", t.finetune_epochs},
                {"learning_rate", t.optimizer.learning_rate},
                {"beta1", t.optimizer.beta1},
                {"beta2", t.optimizer.beta2},
                {"epsilon", t.optimizer.epsilon},
                {"decay_point", t.optimizer.decay_point},
                {"lambda", t.angle.lambda},
                {"smooth_l1_threshold", t.angle.smooth_l1_threshold},
                {"kappa", t.total.kappa},
                {"encoder_hidden", t.arch.encoder_hidden},
                {"feature_dim", t.arch.feature_dim},
                {"predictor_hidden", t.arch.predictor_hidden},
                {"large_predictor", t.arch.large_predictor}};
}

json full_to_json(const RunConfig& c) {
    return json{
        {"renderer", synthdata::renderer_to_json(c.renderer)},
        {"split", synthdata::split_to_json(c.split)},
        {"train", train_to_json(c.train)},
        {"augment", json{{"flip_probability", c.train.augment.flip_probability},
                         {"rotation_range_deg", c.train.augment.rotation_range_deg},
                         {"pose_invariant_noise", c.train.augment.pose_invariant_noise},
                         {"nuisance_jitter", c.train.augment.nuisance_jitter}}},
        {"contrastive",
         json{{"tau", c.train.contrastive.tau},
              {"weight_mode", std::string(losses::weight_mode_name(c.train.contrastive.weight_mode))},
              {"include_positive_in_denominator",
               c.train.contrastive.include_positive_in_denominator}}},
        {"eval", json{{"acc30_strict", c.train.acc30_strict}}}};
}

} // namespace

RunConfig default_run_config() {
    RunConfig c;
    c.split.seen_classes = {0, 1, 2, 3, 4, 5, 6, 7};
    c.split.unseen_classes = {8, 9};
    return c;
}

RunConfig parse_run_config(const std::filesystem::path& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) {
        throw IoError("cannot open config: " + path.string());
    }
    json doc;
    try {
        doc = json::parse(file);
    } catch (const json::exception& e) {
        throw ConfigError(path.string() + ": invalid JSON: " + e.what());
    }
    if (!doc.is_object()) {
        throw ConfigError(path.string() + ": config root must be a JSON object");
    }
    reject_unknown(doc, "", {"renderer", "split", "train", "augment", "contrastive", "eval"});

    RunConfig c = default_run_config();

    if (doc.contains("renderer")) {
        const json& r = doc.at("renderer");
        if (!r.is_object()) bad_field("renderer", "an object");
        reject_unknown(r, "renderer",
                       {"master_seed", "num_classes", "num_geometry_groups", "input_dim",
                        "fourier_dim", "nuisance_dim", "class_perturbation_scale", "noise_sigma",
                        "class_to_group"});
        read_int_like(r, "renderer", "master_seed", c.renderer.master_seed);
        read_int_like(r, "renderer", "num_classes", c.renderer.num_classes);
        read_int_like(r, "renderer", "num_geometry_groups", c.renderer.num_geometry_groups);
        read_int_like(r, "renderer", "input_dim", c.renderer.input_dim);
        read_int_like(r, "renderer", "fourier_dim", c.renderer.fourier_dim);
        read_int_like(r, "renderer", "nuisance_dim", c.renderer.nuisance_dim);
        read_double(r, "renderer", "class_perturbation_scale",
                    c.renderer.class_perturbation_scale);
        read_double(r, "renderer", "noise_sigma", c.renderer.noise_sigma);
        read_int_list(r, "renderer", "class_to_group", c.renderer.class_to_group);
    }
    if (doc.contains("split")) {
        const json& s = doc.at("split");
        if (!s.is_object()) bad_field("split", "an object");
        reject_unknown(s, "split",
                       {"seen_classes", "unseen_classes", "train_count", "val_count"});
        read_int_list(s, "split", "seen_classes", c.split.seen_classes);
        read_int_list(s, "split", "unseen_classes", c.split.unseen_classes);
        read_int_like(s, "split", "train_count", c.split.train_count);
        read_int_like(s, "split", "val_count", c.split.val_count);
    }
    if (doc.contains("train")) {
        const json& t = doc.at("train");
        if (!t.is_object()) bad_field("train", "an object");
        reject_unknown(t, "train",
                       {"epochs", "batch_size", "seed", "finetune_epochs", "learning_rate",
                        "beta1", "beta2", "epsilon", "decay_point", "lambda",
                        "smooth_l1_threshold", "kappa", "encoder_hidden", "feature_dim",
                        "predictor_hidden", "large_predictor"});
        read_int_like(t, "train", "epochs", c.train.epochs);
        read_int_like(t, "train", "batch_size", c.train.batch_size);
        read_int_like(t, "train", "seed", c.train.seed);
        read_int_like(t, "train", "finetune_epochs", c.train.finetune_epochs);
        read_double(t, "train", "learning_rate", c.train.optimizer.learning_rate);
        read_double(t, "train", "beta1", c.train.optimizer.beta1);
        read_double(t, "train", "beta2", c.train.optimizer.beta2);
        read_double(t, "train", "epsilon", c.train.optimizer.epsilon);
        read_double(t, "train", "decay_point", c.train.optimizer.decay_point);
        read_double(t, "train", "lambda", c.train.angle.lambda);
        read_double(t, "train", "smooth_l1_threshold", c.train.angle.smooth_l1_threshold);
        read_double(t, "train", "kappa", c.train.total.kappa);
        read_int_list(t, "train", "encoder_hidden", c.train.arch.encoder_hidden);
        read_int_like(t, "train", "feature_dim", c.train.arch.feature_dim);
        read_int_list(t, "train", "predictor_hidden", c.train.arch.predictor_hidden);
        read_bool(t, "train", "large_predictor", c.train.arch.large_predictor);
    }
    if (doc.contains("augment")) {
        const json& a = doc.at("augment");
        if (!a.is_object()) bad_field("augment", "an object");
        reject_unknown(a, "augment",
                       {"flip_probability", "rotation_range_deg", "pose_invariant_noise",
                        "nuisance_jitter"});
        read_double(a, "augment", "flip_probability", c.train.augment.flip_probability);
        read_double(a, "augment", "rotation_range_deg", c.train.augment.rotation_range_deg);
        read_double(a, "augment", "pose_invariant_noise", c.train.augment.pose_invariant_noise);
        read_double(a, "augment", "nuisance_jitter", c.train.augment.nuisance_jitter);
    }
    if (doc.contains("contrastive")) {
        const json& k = doc.at("contrastive");
        if (!k.is_object()) bad_field("contrastive", "an object");
        reject_unknown(k, "contrastive",
                       {"tau", "weight_mode", "include_positive_in_denominator"});
        read_double(k, "contrastive", "tau", c.train.contrastive.tau);
        std::string mode(losses::weight_mode_name(c.train.contrastive.weight_mode));
        read_string(k, "contrastive", "weight_mode", mode);
        try {
            c.train.contrastive.weight_mode = losses::parse_weight_mode(mode);
        } catch (const UnknownParameterError& e) {
            throw ConfigError(std::string("config: field 'contrastive.weight_mode': ") +
                              e.what());
        }
        read_bool(k, "contrastive", "include_positive_in_denominator",
                  c.train.contrastive.include_positive_in_denominator);
    }
    if (doc.contains("eval")) {
        const json& e = doc.at("eval");
        if (!e.is_object()) bad_field("eval", "an object");
        reject_unknown(e, "eval", {"acc30_strict"});
        read_bool(e, "eval", "acc30_strict", c.train.acc30_strict);
    }

    // The model consumes rendered rows directly, so its input width is not an
    // independent knob.
    c.train.arch.input_dim = c.renderer.input_dim;

    c.renderer.validate();
    c.train.validate();
    return c;
}

std::string config_hash_hex(const RunConfig& config) {
    const std::string canonical = full_to_json(config).dump();
    const std::uint64_t h = rng::fnv1a64(canonical);
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string csv_comment(const RunConfig& config) {
    return "posebench " + std::string(kToolVersion) + " seed=" +
           std::to_string(config.train.seed) + " config=" + config_hash_hex(config);
}

} // namespace posebench::cfg
