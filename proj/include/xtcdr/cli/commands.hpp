// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "xtcdr/cli/run_config.hpp"
#include "xtcdr/data/split.hpp"
#include "xtcdr/synth/synth.hpp"

namespace xtcdr::cli {

struct GenSynthArgs {
    synth::SynthConfig synth;
    std::filesystem::path out_dir = "data";
};

/// Writes `dataset.tsv`, `ground_truth.json` and `synth_config.json` into
/// `out_dir`.
void cmd_gen_synth(const GenSynthArgs& args, std::ostream& out);

struct TrainArgs {
    std::filesystem::path config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::filesystem::path> out_dir;
    std::vector<std::string> ablate;
};

/// Applies the command-line overrides to a loaded configuration.
RunConfig resolve_train_config(RunConfig config, const TrainArgs& args);

struct PreparedData {
    data::SplitResult split;
    data::PairingResult train;
    data::PairingResult val;
};

/// Drug-level split by the configured mode, then fixed pairings of the train
/// and validation rows, all derived from `train.seed`.
PreparedData prepare_data(const RunConfig& config, const data::ExpressionDataset& ds);

/// Trains into `checkpoint_dir`: `best/`, `last/`, `run_manifest.json` and
/// `resolved_config.json`. The manifest is rewritten after every epoch.
void cmd_train(const TrainArgs& args, std::ostream& out);

struct PredictArgs {
    std::filesystem::path checkpoint;
    std::filesystem::path dataset;
    std::string source_pert;
    std::optional<std::string> source_cell_line;
    std::string target_cell_line;
    std::filesystem::path output;
    bool log1p = false;
};

void cmd_predict(const PredictArgs& args, std::ostream& out);

struct PredictComboArgs {
    std::filesystem::path checkpoint;
    std::filesystem::path dataset;
    std::string pert_a;
    std::string pert_b;
    std::string cell_line;
    std::filesystem::path output;
    bool log1p = false;
};

void cmd_predict_combo(const PredictComboArgs& args, std::ostream& out);

struct EvaluateArgs {
    std::filesystem::path predictions;
    std::filesystem::path actual;
    std::filesystem::path controls;
    std::filesystem::path output_prefix = "report";
    eval::EvalOptions options;
};

/// Writes `<prefix>.json`, `<prefix>.csv` and `<prefix>.config.json`.
void cmd_evaluate(const EvaluateArgs& args, std::ostream& out);

/// Parses arguments, runs one command and maps failures onto exit codes.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace xtcdr::cli
