// SPDX-License-Identifier: Apache-2.0
#include "xtcdr/data/split.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "xtcdr/error.hpp"
#include "xtcdr/rng.hpp"

namespace xtcdr::data {

namespace {

SplitResult assign_rows(const ExpressionDataset& ds, std::map<std::string, Split> assignment) {
    SplitResult out;
    for (std::size_t r = 0; r < ds.row_count(); ++r) {
        const auto& m = ds.meta(r);
        if (m.is_control()) {
            out.train.push_back(r);
            out.val.push_back(r);
            out.test.push_back(r);
            continue;
        }
        switch (assignment.at(m.perturbation)) {
            case Split::Train: out.train.push_back(r); break;
            case Split::Val: out.val.push_back(r); break;
            case Split::Test: out.test.push_back(r); break;
        }
    }
    out.drug_assignment = std::move(assignment);
    return out;
}

}  // namespace

const char* to_string(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
    }
    return "?";
}

const std::vector<std::size_t>& SplitResult::rows(Split s) const {
    switch (s) {
        case Split::Train: return train;
        case Split::Val: return val;
        default: return test;
    }
}

SplitResult drug_level_split(const ExpressionDataset& ds, std::array<double, 3> ratios, std::uint64_t seed) {
    for (double r : ratios)
        if (!(r > 0.0)) fail(ErrorKind::Config, "split ratios must be positive");
    if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9)
        fail(ErrorKind::Config, "split ratios must sum to 1");
    auto drugs = ds.perturbations();
    const std::size_t n = drugs.size();
    if (n < 3) fail(ErrorKind::Config, "drug-level split needs at least 3 perturbations, found " + std::to_string(n));

    const std::size_t n_val = std::max<std::size_t>(1, std::size_t(std::llround(ratios[1] * double(n))));
    const std::size_t n_test = std::max<std::size_t>(1, std::size_t(std::llround(ratios[2] * double(n))));
    if (n_val + n_test >= n) fail(ErrorKind::Config, "split ratios leave no training perturbations");

    std::mt19937_64 rng(derive_seed(seed, {0x5317}));
    std::shuffle(drugs.begin(), drugs.end(), rng);
    std::map<std::string, Split> assignment;
    const std::size_t n_train = n - n_val - n_test;
    for (std::size_t i = 0; i < n; ++i)
        assignment[drugs[i]] = i < n_train ? Split::Train : i < n_train + n_val ? Split::Val : Split::Test;
    return assign_rows(ds, std::move(assignment));
}

SplitResult holdout_split(const ExpressionDataset& ds, const std::vector<std::string>& test_perturbations,
                          double val_fraction, std::uint64_t seed) {
    if (test_perturbations.empty()) fail(ErrorKind::Config, "holdout split needs at least one test perturbation");
    if (!(val_fraction >= 0.0 && val_fraction < 1.0)) fail(ErrorKind::Config, "val_fraction must lie in [0, 1)");
    const auto all = ds.perturbations();
    const std::set<std::string> known(all.begin(), all.end());
    std::set<std::string> held;
    for (const auto& p : test_perturbations) {
        if (!known.contains(p)) fail(ErrorKind::Config, "unknown test perturbation '" + p + "'");
        held.insert(p);
    }
    std::vector<std::string> rest;
    for (const auto& p : all)
        if (!held.contains(p)) rest.push_back(p);
    if (rest.empty()) fail(ErrorKind::Config, "holdout split leaves no training perturbations");

    const std::size_t n_val = std::size_t(std::llround(val_fraction * double(rest.size())));
    if (n_val >= rest.size()) fail(ErrorKind::Config, "val_fraction leaves no training perturbations");

    std::mt19937_64 rng(derive_seed(seed, {0x401d}));
    std::shuffle(rest.begin(), rest.end(), rng);
    std::map<std::string, Split> assignment;
    for (const auto& p : held) assignment[p] = Split::Test;
    for (std::size_t i = 0; i < rest.size(); ++i) assignment[rest[i]] = i < n_val ? Split::Val : Split::Train;
    return assign_rows(ds, std::move(assignment));
}

PairingResult build_pairs(const ExpressionDataset& ds, const std::vector<std::size_t>& rows, std::uint64_t seed) {
    std::map<std::string, std::map<std::string, std::vector<std::size_t>>> by_line;  // line -> drug -> rows
    std::map<std::string, std::vector<std::size_t>> controls;
    for (std::size_t r : rows) {
        const auto& m = ds.meta(r);
        if (m.is_control())
            controls[m.cell_line].push_back(r);
        else
            by_line[m.cell_line][m.perturbation].push_back(r);
    }

    PairingResult out;
    std::uint64_t line_index = 0;
    for (const auto& [line, drugs_rows] : by_line) {
        ++line_index;
        if (drugs_rows.size() < 2) {
            out.skipped_cell_lines.push_back(line);
            continue;
        }
        const auto ctrl_it = controls.find(line);
        if (ctrl_it == controls.end())
            fail(ErrorKind::Data, "no control rows for cell line '" + line + "'");
        const auto control = mean_profile(ds, ctrl_it->second);

        std::vector<std::string> drugs;
        for (const auto& kv : drugs_rows) drugs.push_back(kv.first);
        std::mt19937_64 rng(derive_seed(seed, {0xa11, line_index}));
        std::shuffle(drugs.begin(), drugs.end(), rng);
        const std::size_t cut = (drugs.size() + 1) / 2;

        std::vector<std::size_t> group_a, group_b;
        for (std::size_t i = 0; i < drugs.size(); ++i) {
            auto& dst = i < cut ? group_a : group_b;
            const auto& src = drugs_rows.at(drugs[i]);
            dst.insert(dst.end(), src.begin(), src.end());
        }
        std::shuffle(group_a.begin(), group_a.end(), rng);
        std::shuffle(group_b.begin(), group_b.end(), rng);
        out.group_sizes[line] = {group_a.size(), group_b.size()};

        const std::size_t n = std::min(group_a.size(), group_b.size());
        for (std::size_t i = 0; i < n; ++i) {
            const auto a = ds.values(group_a[i]);
            const auto b = ds.values(group_b[i]);
            out.pairs.push_back({control, {a.begin(), a.end()}, {b.begin(), b.end()},
                                 ds.meta(group_a[i]).perturbation, ds.meta(group_b[i]).perturbation, line});
        }
    }
    return out;
}

std::vector<std::vector<std::size_t>> batch_pairs(std::size_t pair_count, std::size_t batch_size,
                                                  std::uint64_t seed, std::uint64_t epoch) {
    if (batch_size < 2) fail(ErrorKind::Config, "batch size must be >= 2");
    std::vector<std::size_t> order(pair_count);
    for (std::size_t i = 0; i < pair_count; ++i) order[i] = i;
    std::mt19937_64 rng(derive_seed(seed, {0xba7c, epoch}));
    std::shuffle(order.begin(), order.end(), rng);

    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < pair_count; start += batch_size) {
        const std::size_t end = std::min(pair_count, start + batch_size);
        std::vector<std::size_t> b(order.begin() + std::ptrdiff_t(start), order.begin() + std::ptrdiff_t(end));
        if (b.size() < 2 && !batches.empty())
            batches.back().insert(batches.back().end(), b.begin(), b.end());
        else
            batches.push_back(std::move(b));
    }
    return batches;
}

}  // namespace xtcdr::data
