// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>

#include "json.hpp"

#include "xtcdr/model/model.hpp"

namespace xtcdr::model {

inline constexpr int kCheckpointFormatVersion = 1;

/// Strict conversion: unknown keys are configuration errors, missing keys
/// keep their defaults.
ModelConfig model_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ModelConfig& config);
nlohmann::json to_json(const LossBreakdown& losses);

struct Checkpoint {
    ModelParams params;
    ModelConfig config;
};

/// Writes `manifest.json` and `params.bin` into `dir`. Tensors are stored as
/// little-endian f32, concatenated in the order basal, perturbation, decoder,
/// and the manifest records each tensor's name, shape, byte offset and
/// length plus the FNV-1a 64 digest of params.bin.
void save_checkpoint(const ModelParams& params, const ModelConfig& config, const std::filesystem::path& dir);

/// Validates the manifest, the digest and every tensor shape against the
/// architecture the stored config implies. Any mismatch is a format error.
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace xtcdr::model
