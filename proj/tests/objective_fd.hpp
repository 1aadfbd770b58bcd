// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <random>
#include <string>

#include "support.hpp"
#include "xtcdr/model/model.hpp"

namespace xtcdr::test {

struct FdReport {
    double worst = 0;
    std::size_t checked = 0;
    std::size_t refined = 0;  // needed a smaller step to stay off a ReLU kink
    std::size_t kinked = 0;   // no smooth step found; not compared
    std::string worst_entry;
    double worst_analytic = 0, worst_numeric = 0;
};

/// Central-difference check of every trainable parameter of the weighted
/// objective, run in f64 with dropout disabled. A difference is only valid
/// when both probes see the same ReLU pattern as the base point. If `step`
/// crosses a kink, the probe retries at step/10 and step/100 before
/// recording the entry as kinked.
inline FdReport check_objective_gradients(model::ModelConfig config, std::uint64_t seed, double step = 1e-3,
                                          std::size_t batch_rows = 16) {
    config.dropout_rate = 0.0;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> weight(0.25, 1.5);
    model::LossWeights w{weight(rng), weight(rng), weight(rng), weight(rng), weight(rng)};
    const model::Architecture arch(config);
    auto params = model::init_model(config).cast<double>();
    const std::size_t n = batch_rows;
    const model::BasicPairBatch<double> batch{random_tensor<double>(n, config.gene_dim, rng),
                                              random_tensor<double>(n, config.gene_dim, rng),
                                              random_tensor<double>(n, config.gene_dim, rng)};
    const auto eval = [&] { return model::objective<double>(arch, params, batch, w, nn::Mode::Train, seed, false); };
    const auto base = model::objective<double>(arch, params, batch, w, nn::Mode::Train, seed, true);
    const auto& analytic = base.grads;

    FdReport report;
    const auto sweep = [&](nn::BasicParamSet<double>& set, const nn::BasicParamSet<double>& grads) {
        for (auto& e : set.entries()) {
            if (!e.trainable) continue;
            const auto& g = grads.at(e.name);
            for (std::size_t i = 0; i < e.value.size(); ++i) {
                const double orig = e.value[i];
                bool smooth = false;
                double h = step;
                for (int attempt = 0; attempt < 3 && !smooth; ++attempt, h /= 10) {
                    e.value[i] = orig + h;
                    const auto up = eval();
                    e.value[i] = orig - h;
                    const auto down = eval();
                    e.value[i] = orig;
                    if (up.relu_digest != base.relu_digest || down.relu_digest != base.relu_digest) continue;
                    smooth = true;
                    if (attempt > 0) ++report.refined;
                    const double numeric = (up.losses.total - down.losses.total) / (2 * h);
                    const double err = relative_error(g[i], numeric);
                    if (err > report.worst) {
                        report.worst = err;
                        report.worst_entry = e.name + "[" + std::to_string(i) + "]";
                        report.worst_analytic = g[i];
                        report.worst_numeric = numeric;
                    }
                    ++report.checked;
                }
                if (!smooth) ++report.kinked;
            }
        }
    };
    sweep(params.basal, analytic.basal);
    sweep(params.perturbation, analytic.perturbation);
    sweep(params.decoder, analytic.decoder);
    return report;
}

/// Random small architecture: G <= 12, up to two hidden layers of width
/// <= 16 and <= 8, latent <= 4.
inline model::ModelConfig random_small_config(std::mt19937_64& rng) {
    model::ModelConfig c;
    c.gene_dim = 2 + rng() % 11;
    c.encoder_hidden.clear();
    const std::size_t depth = rng() % 3;
    if (depth >= 1) c.encoder_hidden.push_back(2 + rng() % 15);
    if (depth >= 2) c.encoder_hidden.push_back(2 + rng() % 7);
    c.latent_dim = 1 + rng() % 4;
    c.dropout_rate = 0.0;
    c.seed = rng();
    return c;
}

}  // namespace xtcdr::test
