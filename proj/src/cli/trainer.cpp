// SPDX-License-Identifier: Apache-2.0
#include "xtcdr/cli/trainer.hpp"

#include <chrono>
#include <limits>

#include "xtcdr/rng.hpp"

namespace xtcdr::cli {

using model::LossBreakdown;

namespace {

void add_scaled(LossBreakdown& acc, const LossBreakdown& l, double w) {
    acc.sim += w * l.sim;
    acc.orth += w * l.orth;
    acc.reco1 += w * l.reco1;
    acc.reco2 += w * l.reco2;
    acc.cross += w * l.cross;
    acc.total += w * l.total;
}

}  // namespace

LossBreakdown evaluate_loss(const model::Architecture& arch, const model::ModelParams& params,
                            const std::vector<data::PairedSample>& pairs, const model::ModelConfig& config) {
    LossBreakdown acc;
    if (pairs.empty()) return acc;
    for (std::size_t start = 0; start < pairs.size(); start += config.batch_size) {
        std::vector<std::size_t> idx;
        for (std::size_t i = start; i < std::min(pairs.size(), start + config.batch_size); ++i) idx.push_back(i);
        const auto batch = model::make_batch(pairs, idx);
        const auto res = model::objective<float>(arch, params, batch, config.loss_weights, nn::Mode::Eval, 0, false);
        add_scaled(acc, res.losses, double(idx.size()) / double(pairs.size()));
    }
    return acc;
}

TrainOutcome train_model(const model::ModelConfig& config, const std::vector<data::PairedSample>& train_pairs,
                         const std::vector<data::PairedSample>& val_pairs, std::uint64_t run_seed,
                         const EpochCallback& on_epoch) {
    config.validate();
    if (train_pairs.size() < 2) fail(ErrorKind::Data, "training needs at least 2 paired samples");
    const model::Architecture arch(config);
    TrainOutcome out;
    out.last = model::init_model(config);
    auto opt = model::OptimizerStates::fresh(out.last, config.lr);
    double best = std::numeric_limits<double>::infinity();

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        EpochRecord rec;
        rec.epoch = epoch;
        const auto batches = data::batch_pairs(train_pairs.size(), config.batch_size, run_seed, epoch);
        for (std::size_t b = 0; b < batches.size(); ++b) {
            const auto batch = model::make_batch(train_pairs, batches[b]);
            LossBreakdown step;
            model::training_step_inplace(arch, out.last, opt, batch, config, derive_seed(run_seed, {epoch, b}), step);
            add_scaled(rec.train, step, double(batches[b].size()) / double(train_pairs.size()));
        }
        rec.has_val = !val_pairs.empty();
        if (rec.has_val) rec.val = evaluate_loss(arch, out.last, val_pairs, config);
        const double score = rec.has_val ? rec.val.total : rec.train.total;
        const bool improved = score < best;
        if (improved) {
            best = score;
            out.best = out.last;
            out.best_epoch = epoch;
        }
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        out.history.push_back(rec);
        if (on_epoch) on_epoch(rec, out.last, improved);
    }
    if (out.best_epoch == 0) out.best = out.last;
    return out;
}

nn::Tensor rows_tensor(const data::ExpressionDataset& ds, const std::vector<std::size_t>& rows) {
    nn::Tensor t({rows.size(), ds.gene_count()});
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto v = ds.values(rows[r]);
        std::copy(v.begin(), v.end(), t.row(r).begin());
    }
    return t;
}

nn::Tensor row_tensor(std::span<const float> values) {
    return nn::Tensor({1, values.size()}, std::vector<float>(values.begin(), values.end()));
}

nn::Tensor mean_perturbation_embedding(const model::Architecture& arch, const model::ModelParams& params,
                                       const data::ExpressionDataset& ds, const std::vector<std::size_t>& rows) {
    if (rows.empty()) fail(ErrorKind::Data, "no cells to embed");
    const auto p = model::encode_perturbation(arch, params, rows_tensor(ds, rows));
    nn::Tensor mean({1, p.values.cols()});
    std::vector<double> acc(p.values.cols(), 0.0);
    for (std::size_t r = 0; r < p.values.rows(); ++r)
        for (std::size_t c = 0; c < acc.size(); ++c) acc[c] += p.values.at(r, c);
    for (std::size_t c = 0; c < acc.size(); ++c) mean[c] = float(acc[c] / double(rows.size()));
    return mean;
}

std::vector<float> predict_combo_mean(const model::Architecture& arch, const model::ModelParams& params,
                                      const data::ExpressionDataset& ds, const std::vector<std::size_t>& rows_a,
                                      const std::vector<std::size_t>& rows_b, std::span<const float> control) {
    const auto s = model::encode_basal(arch, params, row_tensor(control));
    const auto pa = mean_perturbation_embedding(arch, params, ds, rows_a);
    const auto pb = mean_perturbation_embedding(arch, params, ds, rows_b);
    const auto out = model::decode(arch, params, s.values + pa + pb);
    return out.to_vector();
}

}  // namespace xtcdr::cli
