// SPDX-License-Identifier: Apache-2.0
#include "xtcdr/eval/report.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "xtcdr/error.hpp"

namespace xtcdr::eval {

using nlohmann::json;

std::vector<double> to_double(std::span<const float> v) { return {v.begin(), v.end()}; }

namespace {

std::vector<double> gather(const std::vector<double>& v, const std::vector<std::size_t>& idx) {
    std::vector<double> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(v[i]);
    return out;
}

// Fold changes need linear, non-negative expression. Condition means of
// noisy near-zero genes can dip slightly below zero; those floor at zero.
std::vector<double> linear_space(const std::vector<double>& v, bool log1p_data) {
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::max(0.0, log1p_data ? std::expm1(v[i]) : v[i]);
    return out;
}

template <class F>
std::optional<double> maybe(F&& f) {
    try {
        return f();
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::UndefinedMetric) return std::nullopt;
        throw;
    }
}

}  // namespace

ConditionMetrics evaluate_condition(const ConditionInput& in, const EvalOptions& opt) {
    const std::size_t g = in.actual_mean.size();
    if (in.pred_mean.size() != g || in.control_mean.size() != g)
        fail(ErrorKind::Shape, "evaluate: prediction, actual and control gene counts differ");
    ConditionMetrics m;
    m.perturbation = in.perturbation;
    m.cell_line = in.cell_line;
    m.n_cells = in.n_cells;
    m.r2_all = r_squared(in.pred_mean, in.actual_mean);
    m.ev_all = explained_variance(in.pred_mean, in.actual_mean);
    m.pcc_all = pearson(in.pred_mean, in.actual_mean);
    m.spearman_all = spearman(in.pred_mean, in.actual_mean);
    m.baseline_r2_all = r_squared(in.control_mean, in.actual_mean);

    const auto degs = select_degs(linear_space(in.control_mean, opt.log1p_data),
                                  linear_space(in.actual_mean, opt.log1p_data), opt.deg);
    m.deg_count = degs.genes.size();
    if (m.deg_count >= 2) {
        const auto p = gather(in.pred_mean, degs.genes);
        const auto a = gather(in.actual_mean, degs.genes);
        const auto c = gather(in.control_mean, degs.genes);
        m.r2_deg = maybe([&] { return r_squared(p, a); });
        m.ev_deg = maybe([&] { return explained_variance(p, a); });
        m.pcc_deg = maybe([&] { return pearson(p, a); });
        m.spearman_deg = maybe([&] { return spearman(p, a); });
        m.baseline_r2_deg = maybe([&] { return r_squared(c, a); });
    }
    return m;
}

std::optional<double> metric_value(const ConditionMetrics& m, const std::string& col) {
    if (col == "r2_all") return m.r2_all;
    if (col == "r2_deg") return m.r2_deg;
    if (col == "ev_all") return m.ev_all;
    if (col == "ev_deg") return m.ev_deg;
    if (col == "pcc_all") return m.pcc_all;
    if (col == "pcc_deg") return m.pcc_deg;
    if (col == "spearman_all") return m.spearman_all;
    if (col == "spearman_deg") return m.spearman_deg;
    if (col == "baseline_r2_all") return m.baseline_r2_all;
    if (col == "baseline_r2_deg") return m.baseline_r2_deg;
    fail(ErrorKind::Usage, "unknown metric column " + col);
}

MetricsReport summarize(std::vector<ConditionMetrics> conditions) {
    std::sort(conditions.begin(), conditions.end(), [](const auto& a, const auto& b) {
        return std::tie(a.cell_line, a.perturbation) < std::tie(b.cell_line, b.perturbation);
    });
    MetricsReport r;
    for (const char* col : kMetricColumns) {
        std::vector<double> vals;
        for (const auto& c : conditions)
            if (auto v = metric_value(c, col)) vals.push_back(*v);
        Aggregate agg;
        agg.count = vals.size();
        if (!vals.empty()) {
            double s = 0;
            for (double v : vals) s += v;
            agg.mean = s / double(vals.size());
            std::sort(vals.begin(), vals.end());
            const std::size_t n = vals.size();
            agg.median = n % 2 ? vals[n / 2] : 0.5 * (vals[n / 2 - 1] + vals[n / 2]);
        }
        r.aggregates[col] = agg;
    }
    r.conditions = std::move(conditions);
    return r;
}

MetricsReport evaluate(const data::ExpressionDataset& predictions, const data::ExpressionDataset& actual,
                       const data::ExpressionDataset& controls, const EvalOptions& opt) {
    if (predictions.gene_ids() != actual.gene_ids() || controls.gene_ids() != actual.gene_ids())
        fail(ErrorKind::Data, "evaluate: gene headers differ between predictions, actual and controls");
    using Key = std::pair<std::string, std::string>;  // (cell_line, perturbation)
    std::map<Key, std::vector<std::size_t>> actual_groups, pred_groups;
    for (std::size_t r = 0; r < actual.row_count(); ++r)
        if (!actual.meta(r).is_control())
            actual_groups[{actual.meta(r).cell_line, actual.meta(r).perturbation}].push_back(r);
    for (std::size_t r = 0; r < predictions.row_count(); ++r)
        if (!predictions.meta(r).is_control())
            pred_groups[{predictions.meta(r).cell_line, predictions.meta(r).perturbation}].push_back(r);

    std::map<std::string, std::vector<double>> control_cache;
    std::vector<ConditionMetrics> out;
    if (pred_groups.empty()) fail(ErrorKind::Data, "evaluate: predictions contain no perturbed rows");
    for (const auto& [key, pred_rows] : pred_groups) {
        const auto ait = actual_groups.find(key);
        if (ait == actual_groups.end())
            fail(ErrorKind::Data, "no actual profiles for predicted condition " + key.second + " in " + key.first);
        const auto& rows = ait->second;
        auto cit = control_cache.find(key.first);
        if (cit == control_cache.end())
            cit = control_cache.emplace(key.first, to_double(data::control_profile(controls, key.first))).first;
        ConditionInput in{key.second,
                          key.first,
                          rows.size(),
                          to_double(data::mean_profile(predictions, pred_rows)),
                          to_double(data::mean_profile(actual, rows)),
                          cit->second};
        out.push_back(evaluate_condition(in, opt));
    }
    return summarize(std::move(out));
}

namespace {

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

json to_json(const MetricsReport& r) {
    json conds = json::array();
    for (const auto& c : r.conditions) {
        json row{{"perturbation", c.perturbation}, {"cell_line", c.cell_line}, {"n_cells", c.n_cells}};
        for (const char* col : kMetricColumns) row[col] = optional_json(metric_value(c, col));
        row["deg_count"] = c.deg_count;
        conds.push_back(std::move(row));
    }
    json aggs = json::object();
    for (const char* col : kMetricColumns) {
        const auto& a = r.aggregates.at(col);
        aggs[col] = a.count ? json{{"mean", a.mean}, {"median", a.median}, {"count", a.count}}
                            : json{{"mean", nullptr}, {"median", nullptr}, {"count", 0}};
    }
    return json{{"conditions", conds}, {"aggregates", aggs}};
}

std::string to_csv(const MetricsReport& r) {
    std::ostringstream os;
    os.precision(17);
    os << "perturbation,cell_line,n_cells";
    for (const char* col : kMetricColumns) os << ',' << col;
    os << ",deg_count\n";
    for (const auto& c : r.conditions) {
        os << c.perturbation << ',' << c.cell_line << ',' << c.n_cells;
        for (const char* col : kMetricColumns) {
            os << ',';
            if (auto v = metric_value(c, col)) os << *v;
        }
        os << ',' << c.deg_count << '\n';
    }
    return os.str();
}

}  // namespace xtcdr::eval
