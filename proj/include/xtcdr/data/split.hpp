// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "xtcdr/data/dataset.hpp"

namespace xtcdr::data {

enum class Split { Train, Val, Test };

const char* to_string(Split s);

/// Row-index views over one dataset. Control rows appear in every split.
struct SplitResult {
    std::vector<std::size_t> train, val, test;
    std::map<std::string, Split> drug_assignment;

    const std::vector<std::size_t>& rows(Split s) const;
};

/// Shuffles perturbation labels by seed and assigns them by ratio
/// (rounded, each split keeps at least one drug).
SplitResult drug_level_split(const ExpressionDataset& ds, std::array<double, 3> ratios, std::uint64_t seed);

/// Named perturbations form the test split; the remaining drugs are divided
/// into train/val at drug level with round(val_fraction * n) val drugs.
SplitResult holdout_split(const ExpressionDataset& ds, const std::vector<std::string>& test_perturbations,
                          double val_fraction, std::uint64_t seed);

struct PairedSample {
    std::vector<float> x_control;
    std::vector<float> x_a;
    std::vector<float> x_b;
    std::string pert_a;
    std::string pert_b;
    std::string cell_line;
};

struct PairingResult {
    std::vector<PairedSample> pairs;
    /// Cell lines with fewer than two perturbations, which cannot be paired.
    std::vector<std::string> skipped_cell_lines;
    /// Per cell line: (group A row count, group B row count).
    std::map<std::string, std::pair<std::size_t, std::size_t>> group_sizes;
};

/// Per cell line: drugs shuffled and cut into two near-equal groups, rows
/// of each group shuffled, then zipped one-from-each until the shorter side
/// runs out. Each pair carries the mean of the cell line's control rows
/// among `rows`.
PairingResult build_pairs(const ExpressionDataset& ds, const std::vector<std::size_t>& rows, std::uint64_t seed);

/// Epoch-seeded shuffle cut into batches; a final batch smaller than two is
/// merged into the previous one.
std::vector<std::vector<std::size_t>> batch_pairs(std::size_t pair_count, std::size_t batch_size,
                                                  std::uint64_t seed, std::uint64_t epoch);

}  // namespace xtcdr::data
