// SPDX-License-Identifier: Apache-2.0
#include "xtcdr/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "xtcdr/error.hpp"

namespace xtcdr::eval {

namespace {

void require_pair(std::span<const double> a, std::span<const double> b, const char* what) {
    if (a.size() != b.size())
        fail(ErrorKind::Shape, std::string(what) + ": length mismatch " + std::to_string(a.size()) + " vs " +
                                   std::to_string(b.size()));
    if (a.size() < 2) fail(ErrorKind::UndefinedMetric, std::string(what) + ": needs at least 2 values");
}

double mean(std::span<const double> v) { return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size()); }

double sum_sq_dev(std::span<const double> v) {
    const double m = mean(v);
    double s = 0;
    for (double x : v) s += (x - m) * (x - m);
    return s;
}

}  // namespace

double r_squared(std::span<const double> pred, std::span<const double> actual) {
    require_pair(pred, actual, "r_squared");
    const double ss_tot = sum_sq_dev(actual);
    if (ss_tot == 0.0) fail(ErrorKind::UndefinedMetric, "r_squared: actual values are constant");
    double ss_res = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) ss_res += (actual[i] - pred[i]) * (actual[i] - pred[i]);
    return 1.0 - ss_res / ss_tot;
}

double explained_variance(std::span<const double> pred, std::span<const double> actual) {
    require_pair(pred, actual, "explained_variance");
    const double var_actual = sum_sq_dev(actual);
    if (var_actual == 0.0) fail(ErrorKind::UndefinedMetric, "explained_variance: actual values are constant");
    std::vector<double> residual(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) residual[i] = actual[i] - pred[i];
    return 1.0 - sum_sq_dev(residual) / var_actual;
}

double pearson(std::span<const double> pred, std::span<const double> actual) {
    require_pair(pred, actual, "pearson");
    const double mp = mean(pred), ma = mean(actual);
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double dx = pred[i] - mp, dy = actual[i] - ma;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) fail(ErrorKind::UndefinedMetric, "pearson: constant input");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<double> average_ranks(std::span<const double> values) {
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(values.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
        const double r = (double(i) + double(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

double spearman(std::span<const double> pred, std::span<const double> actual) {
    require_pair(pred, actual, "spearman");
    const auto rp = average_ranks(pred);
    const auto ra = average_ranks(actual);
    return pearson(rp, ra);
}

DegSet select_degs(std::span<const double> ctrl, std::span<const double> pert, DegOptions opt) {
    if (ctrl.size() != pert.size()) fail(ErrorKind::Shape, "select_degs: length mismatch");
    std::vector<std::pair<std::size_t, double>> passing;
    for (std::size_t g = 0; g < ctrl.size(); ++g) {
        if (ctrl[g] < 0.0 || pert[g] < 0.0)
            fail(ErrorKind::Domain, "select_degs: negative expression at gene " + std::to_string(g));
        const double lfc = std::log2((pert[g] + opt.epsilon) / (ctrl[g] + opt.epsilon));
        if (std::abs(lfc) >= opt.threshold) passing.emplace_back(g, lfc);
    }
    std::sort(passing.begin(), passing.end(), [](const auto& a, const auto& b) {
        const double fa = std::abs(a.second), fb = std::abs(b.second);
        return fa != fb ? fa > fb : a.first < b.first;
    });
    if (passing.size() > opt.k) passing.resize(opt.k);
    DegSet out;
    for (const auto& [g, lfc] : passing) {
        out.genes.push_back(g);
        out.lfc.push_back(lfc);
    }
    return out;
}

}  // namespace xtcdr::eval
