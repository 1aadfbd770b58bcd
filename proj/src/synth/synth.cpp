// SPDX-License-Identifier: Apache-2.0
#include "xtcdr/synth/synth.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <random>

#include "xtcdr/error.hpp"
#include "xtcdr/rng.hpp"

namespace xtcdr::synth {

using nlohmann::json;

Nonlinearity parse_nonlinearity(const std::string& name) {
    if (name == "identity") return Nonlinearity::Identity;
    if (name == "softplus") return Nonlinearity::Softplus;
    fail(ErrorKind::Config, "unknown nonlinearity '" + name + "' (expected identity or softplus)");
}

const char* to_string(Nonlinearity f) { return f == Nonlinearity::Identity ? "identity" : "softplus"; }

void SynthConfig::validate() const {
    if (latent < 1) fail(ErrorKind::Config, "latent dimension must be >= 1");
    if (genes < latent) fail(ErrorKind::Config, "gene count must be >= latent dimension");
    if (perturbations < 4) fail(ErrorKind::Config, "need at least 4 perturbations");
    if (cell_lines < 1) fail(ErrorKind::Config, "need at least 1 cell line");
    if (cells_per_condition < 1) fail(ErrorKind::Config, "cells per condition must be >= 1");
    if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) fail(ErrorKind::Config, "noise sigma must be >= 0");
}

namespace {

std::string numbered(const char* fmt, std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, fmt, i);
    return buf;
}

double apply(Nonlinearity f, double x) {
    if (f == Nonlinearity::Identity) return x;
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

std::vector<std::vector<double>> normal_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols,
                                               double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    std::vector<std::vector<double>> m(rows, std::vector<double>(cols));
    for (auto& r : m)
        for (auto& v : r) v = dist(rng);
    return m;
}

std::vector<double> render_latent(const GroundTruth& t, const std::vector<double>& z) {
    std::vector<double> out(t.genes());
    for (std::size_t g = 0; g < out.size(); ++g) {
        double s = t.map_bias[g];
        for (std::size_t k = 0; k < z.size(); ++k) s += t.map_weights[g][k] * z[k];
        out[g] = apply(t.nonlinearity, s);
    }
    return out;
}

std::size_t index_of(const std::vector<std::string>& names, const std::string& name, const char* what) {
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return i;
    fail(ErrorKind::Config, std::string("unknown ") + what + " '" + name + "'");
}

std::string encode_double(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return {buf, res.ptr};
}

double decode_double(const json& j) {
    const auto s = j.get<std::string>();
    double v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        fail(ErrorKind::Format, "ground truth: bad number '" + s + "'");
    return v;
}

json encode_matrix(const std::vector<std::vector<double>>& m) {
    json out = json::array();
    for (const auto& r : m) {
        json row = json::array();
        for (double v : r) row.push_back(encode_double(v));
        out.push_back(std::move(row));
    }
    return out;
}

std::vector<std::vector<double>> decode_matrix(const json& j) {
    std::vector<std::vector<double>> out;
    for (const auto& r : j) {
        std::vector<double> row;
        for (const auto& v : r) row.push_back(decode_double(v));
        out.push_back(std::move(row));
    }
    return out;
}

}  // namespace

std::string cell_line_name(std::size_t c) { return numbered("line_%02zu", c); }
std::string perturbation_name(std::size_t k) { return numbered("pert_%03zu", k); }

std::vector<std::string> gene_names(std::size_t genes) {
    std::vector<std::string> out;
    for (std::size_t g = 0; g < genes; ++g) out.push_back(numbered("gene_%04zu", g));
    return out;
}

GroundTruth sample_ground_truth(const SynthConfig& config) {
    config.validate();
    std::mt19937_64 rng(derive_seed(config.seed, {0x6e7}));
    GroundTruth t;
    for (std::size_t c = 0; c < config.cell_lines; ++c) t.cell_line_names.push_back(cell_line_name(c));
    for (std::size_t k = 0; k < config.perturbations; ++k) t.perturbation_names.push_back(perturbation_name(k));
    t.basal = normal_matrix(rng, config.cell_lines, config.latent, 1.0);
    t.pert = normal_matrix(rng, config.perturbations, config.latent, 1.0);
    t.map_weights = normal_matrix(rng, config.genes, config.latent, 1.0 / std::sqrt(double(config.latent)));
    t.map_bias = normal_matrix(rng, 1, config.genes, 1.0).front();
    t.nonlinearity = config.nonlinearity;
    return t;
}

data::ExpressionDataset render(const GroundTruth& t, const SynthConfig& config) {
    config.validate();
    if (t.genes() != config.genes || t.latent() != config.latent || t.basal.size() != config.cell_lines ||
        t.pert.size() != config.perturbations)
        fail(ErrorKind::Config, "ground truth does not match synth config dimensions");
    data::ExpressionDataset ds(gene_names(config.genes));
    std::mt19937_64 rng(derive_seed(config.seed, {0x401}));
    std::normal_distribution<double> noise(0.0, 1.0);
    std::vector<float> row(config.genes);
    for (std::size_t c = 0; c < config.cell_lines; ++c) {
        for (std::size_t k = 0; k <= config.perturbations; ++k) {
            const bool control = k == 0;
            std::vector<double> z = t.basal[c];
            if (!control)
                for (std::size_t i = 0; i < z.size(); ++i) z[i] += t.pert[k - 1][i];
            const auto mean = render_latent(t, z);
            const std::string label = control ? data::kControlLabel : t.perturbation_names[k - 1];
            for (std::size_t cell = 0; cell < config.cells_per_condition; ++cell) {
                for (std::size_t g = 0; g < row.size(); ++g)
                    row[g] = float(mean[g] + (config.noise_sigma > 0 ? config.noise_sigma * noise(rng) : 0.0));
                data::CellMeta meta{t.cell_line_names[c] + ":" + label + ":" + numbered("%04zu", cell),
                                    t.cell_line_names[c], label, control ? 0.0 : 1.0};
                ds.add_row(std::move(meta), row);
            }
        }
    }
    return ds;
}

Generated generate(const SynthConfig& config) {
    auto truth = sample_ground_truth(config);
    auto ds = render(truth, config);
    return {std::move(ds), std::move(truth)};
}

std::vector<double> oracle_profile(const GroundTruth& t, const std::string& cell_line,
                                   const std::vector<std::string>& perturbations) {
    std::vector<double> z = t.basal.at(index_of(t.cell_line_names, cell_line, "cell line"));
    for (const auto& label : perturbations) {
        std::size_t start = 0;
        while (start <= label.size()) {
            const auto plus = label.find('+', start);
            const auto name = label.substr(start, plus == std::string::npos ? std::string::npos : plus - start);
            const auto& p = t.pert[index_of(t.perturbation_names, name, "perturbation")];
            for (std::size_t i = 0; i < z.size(); ++i) z[i] += p[i];
            if (plus == std::string::npos) break;
            start = plus + 1;
        }
    }
    return render_latent(t, z);
}

json to_json(const GroundTruth& t) {
    json bias = json::array();
    for (double v : t.map_bias) bias.push_back(encode_double(v));
    return json{{"cell_lines", t.cell_line_names},
                {"perturbations", t.perturbation_names},
                {"nonlinearity", to_string(t.nonlinearity)},
                {"basal", encode_matrix(t.basal)},
                {"pert", encode_matrix(t.pert)},
                {"map_weights", encode_matrix(t.map_weights)},
                {"map_bias", bias}};
}

GroundTruth ground_truth_from_json(const json& j) {
    GroundTruth t;
    try {
        t.cell_line_names = j.at("cell_lines").get<std::vector<std::string>>();
        t.perturbation_names = j.at("perturbations").get<std::vector<std::string>>();
        t.nonlinearity = parse_nonlinearity(j.at("nonlinearity").get<std::string>());
        t.basal = decode_matrix(j.at("basal"));
        t.pert = decode_matrix(j.at("pert"));
        t.map_weights = decode_matrix(j.at("map_weights"));
        for (const auto& v : j.at("map_bias")) t.map_bias.push_back(decode_double(v));
    } catch (const json::exception& e) {
        fail(ErrorKind::Format, std::string("malformed ground truth: ") + e.what());
    }
    return t;
}

}  // namespace xtcdr::synth
