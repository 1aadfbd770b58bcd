// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "xtcdr/data/dataset.hpp"

namespace xtcdr::synth {

enum class Nonlinearity { Identity, Softplus };

Nonlinearity parse_nonlinearity(const std::string& name);
const char* to_string(Nonlinearity f);

struct SynthConfig {
    std::size_t genes = 200;
    std::size_t latent = 16;
    std::size_t perturbations = 24;
    std::size_t cell_lines = 2;
    std::size_t cells_per_condition = 40;
    double noise_sigma = 0.05;
    Nonlinearity nonlinearity = Nonlinearity::Softplus;
    std::uint64_t seed = 1;

    void validate() const;
};

/// Latent generative model behind a synthetic dataset:
/// profile(c, K) = f(W (basal_c + sum_{k in K} pert_k) + bias).
struct GroundTruth {
    std::vector<std::string> cell_line_names;     // C
    std::vector<std::string> perturbation_names;  // K
    std::vector<std::vector<double>> basal;       // C x d
    std::vector<std::vector<double>> pert;        // K x d
    std::vector<std::vector<double>> map_weights; // G x d
    std::vector<double> map_bias;                 // G
    Nonlinearity nonlinearity = Nonlinearity::Softplus;

    std::size_t genes() const { return map_bias.size(); }
    std::size_t latent() const { return basal.empty() ? 0 : basal.front().size(); }
};

/// Samples latent factors (standard normal), W ~ N(0, 1/d) and bias ~ N(0, 1).
GroundTruth sample_ground_truth(const SynthConfig& config);

std::string cell_line_name(std::size_t c);
std::string perturbation_name(std::size_t k);
std::vector<std::string> gene_names(std::size_t genes);

/// Renders cells from a ground truth: per cell line, `cells_per_condition`
/// control rows, then the same count per perturbation, each with i.i.d.
/// N(0, noise_sigma^2) noise added after the nonlinearity.
data::ExpressionDataset render(const GroundTruth& truth, const SynthConfig& config);

struct Generated {
    data::ExpressionDataset dataset;
    GroundTruth truth;
};

Generated generate(const SynthConfig& config);

/// Noiseless profile of `cell_line` under the summed latent effect of
/// `perturbations`; an empty list gives the control profile. Names may be
/// dual labels ("A+B"), which expand into their parts.
std::vector<double> oracle_profile(const GroundTruth& truth, const std::string& cell_line,
                                   const std::vector<std::string>& perturbations);

nlohmann::json to_json(const GroundTruth& truth);
GroundTruth ground_truth_from_json(const nlohmann::json& j);

}  // namespace xtcdr::synth
