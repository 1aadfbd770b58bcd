// SPDX-License-Identifier: Apache-2.0
#include "xtcdr/cli/commands.hpp"

#include <chrono>
#include <cstdio>
#include <iostream>

#include "CLI11.hpp"

#include "xtcdr/cli/trainer.hpp"
#include "xtcdr/data/split.hpp"
#include "xtcdr/io.hpp"
#include "xtcdr/model/checkpoint.hpp"
#include "xtcdr/rng.hpp"

namespace xtcdr::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string dump(const json& j) { return j.dump(2) + "\n"; }

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

json synth_config_json(const synth::SynthConfig& c) {
    return json{{"genes", c.genes},
                {"latent", c.latent},
                {"perturbations", c.perturbations},
                {"cell_lines", c.cell_lines},
                {"cells_per_condition", c.cells_per_condition},
                {"noise_sigma", c.noise_sigma},
                {"nonlinearity", synth::to_string(c.nonlinearity)},
                {"seed", c.seed}};
}

json epoch_json(const EpochRecord& r, bool improved) {
    return json{{"epoch", r.epoch},
                {"train", model::to_json(r.train)},
                {"val", r.has_val ? model::to_json(r.val) : json(nullptr)},
                {"improved", improved}};
}

model::Checkpoint load_matching_checkpoint(const fs::path& dir, const data::ExpressionDataset& ds) {
    auto ck = model::load_checkpoint(dir);
    if (ck.config.gene_dim != ds.gene_count())
        fail(ErrorKind::Shape, "checkpoint expects " + std::to_string(ck.config.gene_dim) + " genes, dataset has " +
                                  std::to_string(ds.gene_count()));
    return ck;
}

}  // namespace

void cmd_gen_synth(const GenSynthArgs& args, std::ostream& out) {
    const auto gen = synth::generate(args.synth);
    data::save_dataset(gen.dataset, args.out_dir / "dataset.tsv");
    io::write_file_atomic(args.out_dir / "ground_truth.json", dump(synth::to_json(gen.truth)));
    io::write_file_atomic(args.out_dir / "synth_config.json", dump(synth_config_json(args.synth)));
    out << "wrote " << gen.dataset.row_count() << " rows x " << gen.dataset.gene_count() << " genes to "
        << (args.out_dir / "dataset.tsv").string() << "\n";
}

RunConfig resolve_train_config(RunConfig c, const TrainArgs& args) {
    if (args.seed) {
        c.model.seed = *args.seed;
        c.train.seed = *args.seed;
    }
    if (args.out_dir) c.train.checkpoint_dir = args.out_dir->string();
    for (const auto& name : args.ablate) model::ablate(c.model.loss_weights, name);
    return c;
}

PreparedData prepare_data(const RunConfig& cfg, const data::ExpressionDataset& ds) {
    PreparedData p;
    p.split = cfg.data.split.mode == "ratio"
                  ? data::drug_level_split(ds, cfg.data.split.ratios, cfg.train.seed)
                  : data::holdout_split(ds, cfg.data.split.test_perturbations, cfg.data.split.val_fraction,
                                        cfg.train.seed);
    p.train = data::build_pairs(ds, p.split.train, derive_seed(cfg.train.seed, {1}));
    p.val = data::build_pairs(ds, p.split.val, derive_seed(cfg.train.seed, {2}));
    return p;
}

void cmd_train(const TrainArgs& args, std::ostream& out) {
    auto cfg = resolve_train_config(load_run_config(args.config_path), args);
    if (cfg.data.dataset_path.empty()) fail(ErrorKind::Config, "data.dataset_path is required");

    auto ds = data::load_dataset(cfg.data.dataset_path, {cfg.data.log1p});
    if (cfg.data.dose_filter) ds = data::filter_dose(ds, *cfg.data.dose_filter);
    if (cfg.model.gene_dim == 0) cfg.model.gene_dim = ds.gene_count();
    if (cfg.model.gene_dim != ds.gene_count())
        fail(ErrorKind::Data, "model.gene_dim is " + std::to_string(cfg.model.gene_dim) + " but the dataset has " +
                                  std::to_string(ds.gene_count()) + " genes");
    cfg.model.validate();

    const auto prepared = prepare_data(cfg, ds);
    const auto& split = prepared.split;
    const auto& train_pairs = prepared.train;
    const auto& val_pairs = prepared.val;

    const fs::path dir = cfg.train.checkpoint_dir;
    const json resolved = to_json(cfg);
    io::write_file_atomic(dir / "resolved_config.json", dump(resolved));

    json assignment = json::object();
    for (const auto& [drug, s] : split.drug_assignment) assignment[drug] = data::to_string(s);
    json manifest{{"resolved_config", resolved},
                  {"seeds", {{"model", cfg.model.seed}, {"train", cfg.train.seed}}},
                  {"dataset_digest", hex64(data::dataset_digest(ds))},
                  {"split", assignment},
                  {"pairs", {{"train", train_pairs.pairs.size()}, {"val", val_pairs.pairs.size()}}},
                  {"status", "running"},
                  {"best_epoch", nullptr},
                  {"history", json::array()},
                  {"timings", {{"epoch_seconds", json::array()}, {"total_seconds", 0.0}}}};
    const auto write_manifest = [&] { io::write_file_atomic(dir / "run_manifest.json", dump(manifest)); };
    write_manifest();

    const auto t0 = std::chrono::steady_clock::now();
    const auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };
    const auto on_epoch = [&](const EpochRecord& rec, const model::ModelParams& params, bool improved) {
        model::save_checkpoint(params, cfg.model, dir / "last");
        if (improved) {
            model::save_checkpoint(params, cfg.model, dir / "best");
            manifest["best_epoch"] = rec.epoch;
        }
        manifest["history"].push_back(epoch_json(rec, improved));
        manifest["timings"]["epoch_seconds"].push_back(rec.seconds);
        manifest["timings"]["total_seconds"] = elapsed();
        write_manifest();
        out << "epoch " << rec.epoch << " train " << rec.train.total;
        if (rec.has_val) out << " val " << rec.val.total;
        out << (improved ? " *" : "") << "\n";
    };

    try {
        const auto outcome = train_model(cfg.model, train_pairs.pairs, val_pairs.pairs, cfg.train.seed, on_epoch);
        manifest["status"] = "completed";
        manifest["timings"]["total_seconds"] = elapsed();
        write_manifest();
        out << "best epoch " << outcome.best_epoch << ", checkpoints in " << dir.string() << "\n";
    } catch (const Error& e) {
        manifest["status"] = "failed";
        manifest["error"] = {{"kind", to_string(e.kind())}, {"message", e.what()}};
        write_manifest();
        throw;
    }
}

void cmd_predict(const PredictArgs& args, std::ostream& out) {
    const auto ds = data::load_dataset(args.dataset, {args.log1p});
    const auto ck = load_matching_checkpoint(args.checkpoint, ds);
    const auto rows = ds.rows_where(args.source_pert, args.source_cell_line.value_or(""));
    if (rows.empty() || args.source_pert == data::kControlLabel)
        fail(ErrorKind::Data, "no perturbed cells for source perturbation '" + args.source_pert + "'");
    const auto control = data::control_profile(ds, args.target_cell_line);

    const model::Architecture arch(ck.config);
    const auto pred = model::predict_transfer(arch, ck.params, rows_tensor(ds, rows), row_tensor(control));
    data::ExpressionDataset result(ds.gene_ids());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        auto meta = ds.meta(rows[i]);
        meta.cell_line = args.target_cell_line;
        result.add_row(meta, pred.row(i));
    }
    data::save_dataset(result, args.output);
    io::write_file_atomic(fs::path(args.output.string() + ".config.json"),
                          dump(json{{"command", "predict"},
                                    {"checkpoint", args.checkpoint.string()},
                                    {"dataset", args.dataset.string()},
                                    {"source_pert", args.source_pert},
                                    {"source_cell_line", args.source_cell_line ? json(*args.source_cell_line)
                                                                               : json(nullptr)},
                                    {"target_cell_line", args.target_cell_line},
                                    {"log1p", args.log1p},
                                    {"model", model::to_json(ck.config)}}));
    out << "wrote " << result.row_count() << " predicted cells to " << args.output.string() << "\n";
}

void cmd_predict_combo(const PredictComboArgs& args, std::ostream& out) {
    if (args.pert_a == args.pert_b) fail(ErrorKind::Config, "--pert-a and --pert-b must differ");
    const auto ds = data::load_dataset(args.dataset, {args.log1p});
    const auto ck = load_matching_checkpoint(args.checkpoint, ds);
    const auto rows_a = ds.rows_where(args.pert_a, args.cell_line);
    const auto rows_b = ds.rows_where(args.pert_b, args.cell_line);
    if (rows_a.empty()) fail(ErrorKind::Data, "no cells for '" + args.pert_a + "' in " + args.cell_line);
    if (rows_b.empty()) fail(ErrorKind::Data, "no cells for '" + args.pert_b + "' in " + args.cell_line);
    const auto control = data::control_profile(ds, args.cell_line);

    const model::Architecture arch(ck.config);
    const auto pred = predict_combo_mean(arch, ck.params, ds, rows_a, rows_b, control);
    const auto label = data::combo_label(args.pert_a, args.pert_b);
    data::ExpressionDataset result(ds.gene_ids());
    result.add_row({args.cell_line + ":" + label + ":pred", args.cell_line, label, 0.0}, pred);
    data::save_dataset(result, args.output);
    io::write_file_atomic(fs::path(args.output.string() + ".config.json"),
                          dump(json{{"command", "predict-combo"},
                                    {"checkpoint", args.checkpoint.string()},
                                    {"dataset", args.dataset.string()},
                                    {"pert_a", args.pert_a},
                                    {"pert_b", args.pert_b},
                                    {"cell_line", args.cell_line},
                                    {"log1p", args.log1p},
                                    {"model", model::to_json(ck.config)}}));
    out << "wrote " << label << " prediction for " << args.cell_line << " to " << args.output.string() << "\n";
}

void cmd_evaluate(const EvaluateArgs& args, std::ostream& out) {
    const auto preds = data::load_dataset(args.predictions);
    const auto actual = data::load_dataset(args.actual);
    const auto controls = data::load_dataset(args.controls);
    const auto report = eval::evaluate(preds, actual, controls, args.options);

    const auto prefix = args.output_prefix.string();
    io::write_file_atomic(prefix + ".json", dump(eval::to_json(report)));
    io::write_file_atomic(prefix + ".csv", eval::to_csv(report));
    io::write_file_atomic(prefix + ".config.json",
                          dump(json{{"command", "evaluate"},
                                    {"predictions", args.predictions.string()},
                                    {"actual", args.actual.string()},
                                    {"controls", args.controls.string()},
                                    {"log1p_data", args.options.log1p_data},
                                    {"eval",
                                     {{"k", args.options.deg.k},
                                      {"threshold", args.options.deg.threshold},
                                      {"epsilon", args.options.deg.epsilon}}}}));

    out << "conditions: " << report.conditions.size() << "\n";
    for (const char* col : {"r2_all", "r2_deg"}) {
        const auto& a = report.aggregates.at(col);
        out << col << ": ";
        if (a.count)
            out << "mean " << a.mean << " median " << a.median << " (n=" << a.count << ")\n";
        else
            out << "undefined (n=0)\n";
    }
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Cross-context perturbation response model"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string output;
    app.add_option("--config", config_path, "JSON run configuration");
    app.add_option("--seed", seed, "Seed override");
    app.add_option("-o,--output", output, "Output directory, file or prefix");

    GenSynthArgs gs;
    std::string nonlinearity = "softplus";
    auto* gen = app.add_subcommand("gen-synth", "Generate a synthetic dataset with known ground truth");
    gen->add_option("--genes", gs.synth.genes);
    gen->add_option("--latent", gs.synth.latent);
    gen->add_option("--perts", gs.synth.perturbations);
    gen->add_option("--cell-lines", gs.synth.cell_lines);
    gen->add_option("--cells", gs.synth.cells_per_condition);
    gen->add_option("--noise", gs.synth.noise_sigma);
    gen->add_option("--nonlinearity", nonlinearity)->check(CLI::IsMember({"identity", "softplus"}));

    TrainArgs ta;
    std::vector<std::string> ablate;
    auto* train = app.add_subcommand("train", "Train a model from a run configuration");
    train->add_option("--ablate", ablate, "Loss terms to disable")->delimiter(',');

    PredictArgs pa;
    std::string source_line;
    auto* predict = app.add_subcommand("predict", "Transfer a perturbation onto a target cell line");
    predict->add_option("--checkpoint", pa.checkpoint)->required();
    predict->add_option("--dataset", pa.dataset)->required();
    predict->add_option("--source-pert", pa.source_pert)->required();
    predict->add_option("--source-cell-line", source_line);
    predict->add_option("--target-cell-line", pa.target_cell_line)->required();
    predict->add_flag("--log1p", pa.log1p);

    PredictComboArgs pc;
    auto* combo = app.add_subcommand("predict-combo", "Predict a dual perturbation from two single ones");
    combo->add_option("--checkpoint", pc.checkpoint)->required();
    combo->add_option("--dataset", pc.dataset)->required();
    combo->add_option("--pert-a", pc.pert_a)->required();
    combo->add_option("--pert-b", pc.pert_b)->required();
    combo->add_option("--cell-line", pc.cell_line)->required();
    combo->add_flag("--log1p", pc.log1p);

    EvaluateArgs ea;
    std::optional<std::size_t> k;
    std::optional<double> threshold, epsilon;
    auto* evaluate = app.add_subcommand("evaluate", "Score predictions against observed profiles");
    evaluate->add_option("--predictions", ea.predictions)->required();
    evaluate->add_option("--actual", ea.actual)->required();
    evaluate->add_option("--controls", ea.controls)->required();
    evaluate->add_flag("--log1p-data", ea.options.log1p_data);
    evaluate->add_option("--k", k);
    evaluate->add_option("--threshold", threshold);
    evaluate->add_option("--epsilon", epsilon);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : exit_code(ErrorKind::Usage);
    }

    try {
        if (*gen) {
            gs.synth.nonlinearity = synth::parse_nonlinearity(nonlinearity);
            if (seed) gs.synth.seed = *seed;
            if (!output.empty()) gs.out_dir = output;
            gs.synth.validate();
            cmd_gen_synth(gs, out);
        } else if (*train) {
            if (config_path.empty()) fail(ErrorKind::Usage, "train requires --config");
            ta.config_path = config_path;
            ta.seed = seed;
            if (!output.empty()) ta.out_dir = output;
            ta.ablate = ablate;
            cmd_train(ta, out);
        } else if (*predict) {
            if (output.empty()) fail(ErrorKind::Usage, "predict requires -o");
            if (!source_line.empty()) pa.source_cell_line = source_line;
            pa.output = output;
            cmd_predict(pa, out);
        } else if (*combo) {
            if (output.empty()) fail(ErrorKind::Usage, "predict-combo requires -o");
            pc.output = output;
            cmd_predict_combo(pc, out);
        } else if (*evaluate) {
            if (!config_path.empty()) ea.options.deg = load_run_config(config_path).eval;
            if (k) ea.options.deg.k = *k;
            if (threshold) ea.options.deg.threshold = *threshold;
            if (epsilon) ea.options.deg.epsilon = *epsilon;
            if (!output.empty()) ea.output_prefix = output;
            cmd_evaluate(ea, out);
        }
    } catch (const Error& e) {
        err << "error [" << to_string(e.kind()) << "]: " << e.what() << "\n";
        return exit_code(e.kind());
    } catch (const fs::filesystem_error& e) {
        err << "error [io]: " << e.what() << "\n";
        return exit_code(ErrorKind::Io);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 5;
    }
    return 0;
}

}  // namespace xtcdr::cli
