// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

namespace xtcdr::eval {

// All metrics accumulate in double. Constant inputs where a metric is
// undefined raise ErrorKind::UndefinedMetric rather than returning 0.

/// 1 - SS_res / SS_tot.
double r_squared(std::span<const double> pred, std::span<const double> actual);

/// 1 - Var(actual - pred) / Var(actual), population variances.
double explained_variance(std::span<const double> pred, std::span<const double> actual);

double pearson(std::span<const double> pred, std::span<const double> actual);

/// Pearson correlation of average ranks.
double spearman(std::span<const double> pred, std::span<const double> actual);

/// 1-based ranks; tied values share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> values);

struct DegSet {
    std::vector<std::size_t> genes;
    std::vector<double> lfc;
};

struct DegOptions {
    std::size_t k = 50;
    double threshold = 1.0;
    double epsilon = 1e-6;
};

/// log2((pert + eps) / (ctrl + eps)) per gene; keeps |lfc| >= threshold,
/// sorted by |lfc| descending with ties by gene index, truncated to k.
/// Inputs must be non-negative (linear expression space).
DegSet select_degs(std::span<const double> ctrl_mean, std::span<const double> pert_mean, DegOptions options = {});

}  // namespace xtcdr::eval
