// SPDX-License-Identifier: Apache-2.0
#include "xtcdr/cli/run_config.hpp"

#include <set>

#include "xtcdr/io.hpp"
#include "xtcdr/model/checkpoint.hpp"

namespace xtcdr::cli {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
    if (!j.is_object()) fail(ErrorKind::Config, where + " must be a JSON object");
    const std::set<std::string> allowed(keys.begin(), keys.end());
    for (const auto& [k, v] : j.items())
        if (!allowed.contains(k)) fail(ErrorKind::Config, "unknown key '" + k + "' in " + where);
}

template <class V>
void read_key(const json& j, const char* key, V& out, const std::string& where) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<V>();
    } catch (const json::exception& e) {
        fail(ErrorKind::Config, where + "." + key + ": " + e.what());
    }
}

}  // namespace

RunConfig run_config_from_json(const json& j) {
    reject_unknown(j, {"model", "data", "train", "eval"}, "config");
    RunConfig c;
    if (j.contains("model")) c.model = model::model_config_from_json(j.at("model"));
    if (j.contains("data")) {
        const auto& d = j.at("data");
        reject_unknown(d, {"dataset_path", "split", "dose_filter", "log1p"}, "data");
        read_key(d, "dataset_path", c.data.dataset_path, "data");
        read_key(d, "log1p", c.data.log1p, "data");
        if (d.contains("dose_filter") && !d.at("dose_filter").is_null()) {
            double dose = 0;
            read_key(d, "dose_filter", dose, "data");
            c.data.dose_filter = dose;
        }
        if (d.contains("split")) {
            const auto& s = d.at("split");
            reject_unknown(s, {"mode", "ratios", "test_perturbations", "val_fraction"}, "data.split");
            read_key(s, "mode", c.data.split.mode, "data.split");
            read_key(s, "ratios", c.data.split.ratios, "data.split");
            read_key(s, "test_perturbations", c.data.split.test_perturbations, "data.split");
            read_key(s, "val_fraction", c.data.split.val_fraction, "data.split");
        }
    }
    if (j.contains("train")) {
        const auto& t = j.at("train");
        reject_unknown(t, {"seed", "checkpoint_dir"}, "train");
        read_key(t, "seed", c.train.seed, "train");
        read_key(t, "checkpoint_dir", c.train.checkpoint_dir, "train");
    }
    if (j.contains("eval")) {
        const auto& e = j.at("eval");
        reject_unknown(e, {"k", "threshold", "epsilon"}, "eval");
        read_key(e, "k", c.eval.k, "eval");
        read_key(e, "threshold", c.eval.threshold, "eval");
        read_key(e, "epsilon", c.eval.epsilon, "eval");
    }
    if (c.data.split.mode != "ratio" && c.data.split.mode != "holdout")
        fail(ErrorKind::Config, "data.split.mode must be 'ratio' or 'holdout'");
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    json j;
    try {
        j = json::parse(io::read_file(path));
    } catch (const json::exception& e) {
        fail(ErrorKind::Config, "cannot parse config " + path.string() + ": " + e.what());
    }
    return run_config_from_json(j);
}

json to_json(const RunConfig& c) {
    return json{{"model", model::to_json(c.model)},
                {"data",
                 {{"dataset_path", c.data.dataset_path},
                  {"split",
                   {{"mode", c.data.split.mode},
                    {"ratios", c.data.split.ratios},
                    {"test_perturbations", c.data.split.test_perturbations},
                    {"val_fraction", c.data.split.val_fraction}}},
                  {"dose_filter", c.data.dose_filter ? json(*c.data.dose_filter) : json(nullptr)},
                  {"log1p", c.data.log1p}}},
                {"train", {{"seed", c.train.seed}, {"checkpoint_dir", c.train.checkpoint_dir}}},
                {"eval", {{"k", c.eval.k}, {"threshold", c.eval.threshold}, {"epsilon", c.eval.epsilon}}}};
}

}  // namespace xtcdr::cli
