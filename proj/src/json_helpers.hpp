#pragma once

// Shared JSON (de)serialization for config-like structs, used by both the
// dataset header and the run-config parser. Not installed as public API.

#include <json.hpp>

#include "posebench/errors.hpp"
#include "posebench/synthdata.hpp"

namespace posebench::synthdata {

inline nlohmann::json renderer_to_json(const RendererConfig& cfg) {
    return nlohmann::json{{"master_seed", cfg.master_seed},
                          {"num_classes", cfg.num_classes},
                          {"num_geometry_groups", cfg.num_geometry_groups},
                          {"input_dim", cfg.input_dim},
                          {"fourier_dim", cfg.fourier_dim},
                          {"nuisance_dim", cfg.nuisance_dim},
                          {"class_perturbation_scale", cfg.class_perturbation_scale},
                          {"noise_sigma", cfg.noise_sigma},
                          {"class_to_group", cfg.resolved_groups()}};
}

inline RendererConfig renderer_from_json(const nlohmann::json& j) {
    RendererConfig cfg;
    cfg.master_seed = j.at("master_seed").get<std::uint64_t>();
    cfg.num_classes = j.at("num_classes").get<int>();
    cfg.num_geometry_groups = j.at("num_geometry_groups").get<int>();
    cfg.input_dim = j.at("input_dim").get<int>();
    cfg.fourier_dim = j.at("fourier_dim").get<int>();
    cfg.nuisance_dim = j.at("nuisance_dim").get<int>();
    cfg.class_perturbation_scale = j.at("class_perturbation_scale").get<double>();
    cfg.noise_sigma = j.at("noise_sigma").get<double>();
    if (j.contains("class_to_group")) {
        cfg.class_to_group = j.at("class_to_group").get<std::vector<int>>();
    }
    cfg.validate();
    return cfg;
}

inline nlohmann::json split_to_json(const SplitSpec& spec) {
    return nlohmann::json{{"seen_classes", spec.seen_classes},
                          {"unseen_classes", spec.unseen_classes},
                          {"train_count", spec.train_count},
                          {"val_count", spec.val_count}};
}

inline SplitSpec split_from_json(const nlohmann::json& j) {
    SplitSpec spec;
    spec.seen_classes = j.at("seen_classes").get<std::vector<int>>();
    spec.unseen_classes = j.at("unseen_classes").get<std::vector<int>>();
    spec.train_count = j.at("train_count").get<int>();
    spec.val_count = j.at("val_count").get<int>();
    return spec;
}

} // namespace posebench::synthdata
