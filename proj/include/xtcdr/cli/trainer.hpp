// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <string>
#include <vector>

#include "xtcdr/data/dataset.hpp"
#include "xtcdr/data/split.hpp"
#include "xtcdr/model/model.hpp"

namespace xtcdr::cli {

struct EpochRecord {
    std::size_t epoch = 0;
    model::LossBreakdown train;
    model::LossBreakdown val;
    bool has_val = false;
    double seconds = 0;
};

struct TrainOutcome {
    model::ModelParams best;
    model::ModelParams last;
    std::size_t best_epoch = 0;
    std::vector<EpochRecord> history;
};

/// Called after every epoch with the record, the current parameters, and
/// whether this epoch became the new best.
using EpochCallback = std::function<void(const EpochRecord&, const model::ModelParams&, bool)>;

/// Runs `config.epochs` epochs of mini-batch training over `train_pairs`.
/// The best epoch is the one with the lowest weighted validation loss (the
/// training loss when there are no validation pairs).
TrainOutcome train_model(const model::ModelConfig& config, const std::vector<data::PairedSample>& train_pairs,
                         const std::vector<data::PairedSample>& val_pairs, std::uint64_t run_seed,
                         const EpochCallback& on_epoch = {});

/// Eval-mode mean loss over `pairs`, in chunks of `batch_size`.
model::LossBreakdown evaluate_loss(const model::Architecture& arch, const model::ModelParams& params,
                                   const std::vector<data::PairedSample>& pairs, const model::ModelConfig& config);

/// Copies rows into a [rows.size(), G] tensor.
nn::Tensor rows_tensor(const data::ExpressionDataset& ds, const std::vector<std::size_t>& rows);
nn::Tensor row_tensor(std::span<const float> values);

/// Mean perturbation embedding over `rows`, shape [1, latent].
nn::Tensor mean_perturbation_embedding(const model::Architecture& arch, const model::ModelParams& params,
                                       const data::ExpressionDataset& ds, const std::vector<std::size_t>& rows);

/// decode(E_s(control) + mean E_p(rows of A) + mean E_p(rows of B)), one row.
std::vector<float> predict_combo_mean(const model::Architecture& arch, const model::ModelParams& params,
                                      const data::ExpressionDataset& ds, const std::vector<std::size_t>& rows_a,
                                      const std::vector<std::size_t>& rows_b, std::span<const float> control);

}  // namespace xtcdr::cli
