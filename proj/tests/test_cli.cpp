// SPDX-License-Identifier: Apache-2.0
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "support.hpp"
#include "xtcdr/cli/commands.hpp"
#include "xtcdr/data/dataset.hpp"
#include "xtcdr/io.hpp"

using namespace xtcdr;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code;
    std::string out, err;
};

Run run(std::vector<std::string> args) {
    args.insert(args.begin(), "xtcdr");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = cli::run_cli(int(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

fs::path write_config(const fs::path& dir, const fs::path& dataset, json model_overrides = json::object()) {
    json model{{"encoder_hidden", {16}}, {"latent_dim", 4}, {"epochs", 4}, {"batch_size", 32}, {"dropout_rate", 0.0}};
    model.merge_patch(model_overrides);
    const json cfg{{"model", model},
                   {"data",
                    {{"dataset_path", dataset.string()},
                     {"split", {{"mode", "holdout"}, {"test_perturbations", {"pert_000"}}, {"val_fraction", 0.3}}}}},
                   {"train", {{"seed", 3}, {"checkpoint_dir", (dir / "run").string()}}}};
    const auto path = dir / "config.json";
    io::write_file_atomic(path, cfg.dump(2));
    return path;
}

// Small synthetic dataset shared by the training and prediction cases.
fs::path small_dataset(const test::TempDir& dir) {
    const auto r = run({"gen-synth", "--genes", "10", "--latent", "3", "--perts", "8", "--cell-lines", "2", "--cells",
                        "6", "--seed", "5", "-o", (dir / "data").string()});
    REQUIRE(r.code == 0);
    return dir / "data" / "dataset.tsv";
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("gen-synth writes the counted rows deterministically") {
    test::TempDir dir("cli");
    const std::vector<std::string> flags = {"gen-synth", "--genes", "200", "--latent", "16", "--perts", "24",
                                            "--cell-lines", "2", "--cells", "40", "--noise", "0.05", "--seed", "1"};
    auto a = flags, b = flags;
    a.insert(a.end(), {"-o", (dir / "a").string()});
    b.insert(b.end(), {"-o", (dir / "b").string()});
    const auto ra = run(a);
    REQUIRE(ra.code == 0);
    CHECK(ra.out.find("2000") != std::string::npos);
    REQUIRE(run(b).code == 0);
    const auto ds = data::load_dataset(dir / "a" / "dataset.tsv");
    CHECK(ds.row_count() == 2000);
    CHECK(ds.gene_count() == 200);
    for (const char* f : {"dataset.tsv", "ground_truth.json", "synth_config.json"})
        CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));
}

TEST_CASE("argument and configuration errors exit 2") {
    test::TempDir dir("cli");
    CHECK(run({"gen-synth", "--perts", "2", "-o", (dir / "x").string()}).code == 2);
    CHECK(run({"gen-synth", "--nonlinearity", "tanh"}).code == 2);
    CHECK(run({"train"}).code == 2);
    CHECK(run({}).code == 2);
    CHECK(run({"frobnicate"}).code == 2);
    CHECK(run({"--help"}).code == 0);
    io::write_file_atomic(dir / "bad.json", R"({"model": {"hiden": [4]}})");
    CHECK(run({"--config", (dir / "bad.json").string(), "train"}).code == 2);
}

TEST_CASE("unwritable output exits 3") {
    test::TempDir dir("cli");
    io::write_file_atomic(dir / "file", "x");
    const auto r = run({"gen-synth", "--genes", "6", "--latent", "2", "-o", (dir / "file" / "sub").string()});
    CHECK(r.code == 3);
    CHECK(run({"--config", (dir / "missing.json").string(), "train"}).code != 0);
}

TEST_CASE("train, predict, combo and evaluate") {
    test::TempDir dir("cli");
    const auto dataset = small_dataset(dir);
    const auto config = write_config(dir.path(), dataset, json{{"epochs", 12}});
    const auto t = run({"--config", config.string(), "train"});
    REQUIRE_MESSAGE(t.code == 0, t.err);

    const auto manifest = read_json(dir / "run" / "run_manifest.json");
    CHECK(manifest["status"] == "completed");
    CHECK(manifest["history"].size() == 12);
    CHECK(manifest["split"]["pert_000"] == "test");
    CHECK(manifest.contains("dataset_digest"));
    CHECK(manifest["resolved_config"]["model"]["gene_dim"] == 10);
    const auto best = manifest["best_epoch"].get<std::size_t>();
    CHECK(manifest["history"][best - 1]["val"]["total"].get<double>() <
          manifest["history"][0]["val"]["total"].get<double>());
    CHECK(fs::exists(dir / "run" / "best"));
    CHECK(fs::exists(dir / "run" / "last"));
    CHECK(read_json(dir / "run" / "resolved_config.json") == manifest["resolved_config"]);

    const auto ckpt = (dir / "run" / "best").string();
    const auto pred = (dir / "pred.tsv").string();
    const auto p = run({"predict", "--checkpoint", ckpt, "--dataset", dataset.string(), "--source-pert", "pert_000",
                        "--source-cell-line", "line_00", "--target-cell-line", "line_01", "-o", pred});
    REQUIRE_MESSAGE(p.code == 0, p.err);
    const auto preds = data::load_dataset(pred);
    CHECK(preds.row_count() == 6);
    for (std::size_t r = 0; r < preds.row_count(); ++r) {
        CHECK(preds.meta(r).cell_line == "line_01");
        CHECK(preds.meta(r).perturbation == "pert_000");
    }
    CHECK(fs::exists(pred + ".config.json"));

    CHECK(run({"predict", "--checkpoint", ckpt, "--dataset", dataset.string(), "--source-pert", "nope",
               "--target-cell-line", "line_01", "-o", pred})
              .code == 5);
    CHECK(run({"predict", "--checkpoint", ckpt, "--dataset", dataset.string(), "--source-pert", "pert_000",
               "--target-cell-line", "line_09", "-o", pred})
              .code == 5);

    const auto combo = (dir / "combo.tsv").string();
    const auto c = run({"predict-combo", "--checkpoint", ckpt, "--dataset", dataset.string(), "--pert-a", "pert_003",
                        "--pert-b", "pert_001", "--cell-line", "line_00", "-o", combo});
    REQUIRE_MESSAGE(c.code == 0, c.err);
    const auto cds = data::load_dataset(combo);
    REQUIRE(cds.row_count() == 1);
    CHECK(cds.meta(0).perturbation == "pert_001+pert_003");
    CHECK(run({"predict-combo", "--checkpoint", ckpt, "--dataset", dataset.string(), "--pert-a", "pert_001",
               "--pert-b", "pert_001", "--cell-line", "line_00", "-o", combo})
              .code == 2);
    CHECK(run({"predict-combo", "--checkpoint", ckpt, "--dataset", dataset.string(), "--pert-a", "pert_001",
               "--pert-b", "pert_077", "--cell-line", "line_00", "-o", combo})
              .code == 5);

    const auto before = slurp(dataset);
    const auto e = run({"evaluate", "--predictions", dataset.string(), "--actual", dataset.string(), "--controls",
                        dataset.string(), "-o", (dir / "rep").string()});
    REQUIRE_MESSAGE(e.code == 0, e.err);
    CHECK(e.out.find("r2_all: mean 1 ") != std::string::npos);
    const auto csv = slurp(dir / "rep.csv");
    CHECK(csv.find("baseline_r2_all") != std::string::npos);
    const auto rep = read_json(dir / "rep.json");
    for (const char* m : {"r2_all", "r2_deg"}) {
        CHECK(rep["aggregates"][m].contains("mean"));
        CHECK(rep["aggregates"][m].contains("median"));
    }
    CHECK(fs::exists(dir / "rep.config.json"));
    CHECK(slurp(dataset) == before);

    const auto scored = run({"evaluate", "--predictions", pred, "--actual", dataset.string(), "--controls",
                             dataset.string(), "-o", (dir / "rep2").string()});
    CHECK(scored.code == 0);

    data::ExpressionDataset other({"a", "b"});
    other.add_row({"c", "line_01", "pert_000", 1}, std::vector<float>{1, 2});
    data::save_dataset(other, dir / "other.tsv");
    CHECK(run({"evaluate", "--predictions", (dir / "other.tsv").string(), "--actual", dataset.string(), "--controls",
               dataset.string(), "-o", (dir / "rep3").string()})
              .code == 5);
}

TEST_CASE("ablation and seed overrides are recorded") {
    test::TempDir dir("cli");
    const auto dataset = small_dataset(dir);
    const auto config = write_config(dir.path(), dataset, json{{"epochs", 1}});
    const auto out = (dir / "ablated").string();
    const auto r = run({"--config", config.string(), "--seed", "11", "-o", out, "train", "--ablate", "cross,orth"});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const auto m = read_json(fs::path(out) / "run_manifest.json");
    CHECK(m["resolved_config"]["model"]["loss_weights"]["cross"] == 0.0);
    CHECK(m["resolved_config"]["model"]["loss_weights"]["orth"] == 0.0);
    CHECK(m["resolved_config"]["model"]["loss_weights"]["sim"] == 1.0);
    CHECK(m["seeds"]["model"] == 11);
    CHECK(m["seeds"]["train"] == 11);
    CHECK(run({"--config", config.string(), "-o", out, "train", "--ablate", "reco9"}).code == 2);
}

TEST_CASE("non-finite training aborts with exit 4") {
    test::TempDir dir("cli");
    const auto dataset = small_dataset(dir);
    const auto config = write_config(dir.path(), dataset, json{{"epochs", 3}, {"lr", 1e30}});
    const auto r = run({"--config", config.string(), "train"});
    CHECK(r.code == 4);
    const auto m = read_json(dir / "run" / "run_manifest.json");
    CHECK(m["status"] == "failed");
    CHECK(m["error"]["kind"] == "numeric error");
}

TEST_CASE("reruns reproduce the loss history") {
    test::TempDir dir("cli");
    const auto dataset = small_dataset(dir);
    const auto config = write_config(dir.path(), dataset, json{{"epochs", 2}, {"dropout_rate", 0.2}});
    REQUIRE(run({"--config", config.string(), "train"}).code == 0);
    const auto first = read_json(dir / "run" / "run_manifest.json");
    const auto ckpt = slurp(dir / "run" / "best" / "params.bin");
    REQUIRE(run({"--config", config.string(), "train"}).code == 0);
    const auto second = read_json(dir / "run" / "run_manifest.json");
    CHECK(first["history"] == second["history"]);
    CHECK(slurp(dir / "run" / "best" / "params.bin") == ckpt);
}

}  // TEST_SUITE
