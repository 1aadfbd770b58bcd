// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "xtcdr/eval/report.hpp"
#include "xtcdr/model/model.hpp"

namespace xtcdr::cli {

struct SplitConfig {
    std::string mode = "holdout";  // "ratio" | "holdout"
    std::array<double, 3> ratios = {0.8, 0.1, 0.1};
    std::vector<std::string> test_perturbations;
    double val_fraction = 0.1;
};

struct DataConfig {
    std::string dataset_path;
    SplitConfig split;
    std::optional<double> dose_filter;
    bool log1p = false;
};

struct TrainConfig {
    std::uint64_t seed = 0;
    std::string checkpoint_dir = "run";
};

/// Full training/evaluation configuration. Parsing rejects unknown keys;
/// `to_json` always writes every field, so a resolved copy reproduces a run.
struct RunConfig {
    model::ModelConfig model;
    DataConfig data;
    TrainConfig train;
    eval::DegOptions eval;
};

RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& config);

}  // namespace xtcdr::cli
