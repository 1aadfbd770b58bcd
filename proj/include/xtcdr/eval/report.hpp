// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "xtcdr/data/dataset.hpp"
#include "xtcdr/eval/metrics.hpp"

namespace xtcdr::eval {

struct EvalOptions {
    DegOptions deg;
    /// Stored values are log1p-transformed; fold changes are taken after expm1.
    bool log1p_data = false;
};

/// Metrics of one (perturbation, cell line) condition. DEG-subset fields are
/// empty when fewer than two genes qualify or the metric is undefined there.
struct ConditionMetrics {
    std::string perturbation;
    std::string cell_line;
    std::size_t n_cells = 0;
    double r2_all = 0, ev_all = 0, pcc_all = 0, spearman_all = 0, baseline_r2_all = 0;
    std::optional<double> r2_deg, ev_deg, pcc_deg, spearman_deg, baseline_r2_deg;
    std::size_t deg_count = 0;
};

struct ConditionInput {
    std::string perturbation;
    std::string cell_line;
    std::size_t n_cells = 0;
    std::vector<double> pred_mean;
    std::vector<double> actual_mean;
    std::vector<double> control_mean;
};

ConditionMetrics evaluate_condition(const ConditionInput& input, const EvalOptions& options = {});

struct Aggregate {
    double mean = 0;
    double median = 0;
    std::size_t count = 0;
};

/// Fixed metric column order shared by the CSV and the aggregate table.
inline constexpr std::array<const char*, 10> kMetricColumns = {
    "r2_all", "r2_deg", "ev_all", "ev_deg", "pcc_all", "pcc_deg", "spearman_all", "spearman_deg",
    "baseline_r2_all", "baseline_r2_deg"};

std::optional<double> metric_value(const ConditionMetrics& m, const std::string& column);

struct MetricsReport {
    std::vector<ConditionMetrics> conditions;  // sorted by (cell_line, perturbation)
    std::map<std::string, Aggregate> aggregates;
};

MetricsReport summarize(std::vector<ConditionMetrics> conditions);

/// Evaluates every non-control (cell_line, perturbation) condition in
/// `predictions` against the same-keyed rows of `actual` and the control
/// mean of its cell line from `controls`, comparing condition means.
/// Baseline columns score the control mean as the prediction.
MetricsReport evaluate(const data::ExpressionDataset& predictions, const data::ExpressionDataset& actual,
                       const data::ExpressionDataset& controls, const EvalOptions& options = {});

nlohmann::json to_json(const MetricsReport& report);
std::string to_csv(const MetricsReport& report);

std::vector<double> to_double(std::span<const float> v);

}  // namespace xtcdr::eval
