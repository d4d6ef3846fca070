#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "posebench/pipeline.hpp"
#include "posebench/synthdata.hpp"

namespace posebench {

inline constexpr std::string_view kToolVersion = "0.1.0";

namespace cfg {

// Everything a run needs: what to render, how to split it, how to train.
struct RunConfig {
    synthdata::RendererConfig renderer;
    synthdata::SplitSpec split;
    pipeline::TrainConfig train;
};

// The standard benchmark: 10 classes in 4 groups, classes 8/9 held out
// (both share a group with seen classes), 5000 train / 1000 val records.
RunConfig default_run_config();

// JSON with sections renderer/split/train/augment/contrastive/eval; every
// field optional (module defaults apply), unknown keys rejected. Throws
// ConfigError with a field path, or IoError.
RunConfig parse_run_config(const std::filesystem::path& path);

// Canonical hash over every config field; stable across runs.
std::string config_hash_hex(const RunConfig& config);

// "posebench <version> seed=<seed> config=<hash>" comment for CSV outputs.
std::string csv_comment(const RunConfig& config);

} // namespace cfg
} // namespace posebench
