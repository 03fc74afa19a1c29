// Copyright (c) 2026 geoshare contributors.
// SPDX-License-Identifier: Apache-2.0

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "geoshare/harness.hpp"

namespace fs = std::filesystem;
using namespace geoshare;

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> mode;
    bool csv = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "experiment config (JSON)")->required();
    cmd->add_option("--out", args.out_dir, "output directory (overrides config)");
    cmd->add_option("--seed", args.seed, "master seed override; re-derives all section seeds");
    cmd->add_option("--mode", args.mode, "alignment mode override")
        ->check(CLI::IsMember({"paper-literal", "strict-sharing"}));
    cmd->add_flag("--csv", args.csv, "also emit flat CSV files");
}

harness::ExperimentConfig load_config(const CommonArgs& args) {
    harness::ExperimentConfig config = harness::config_from_json_file(args.config_path);
    if (args.seed) harness::override_master_seed(config, *args.seed);
    if (args.mode) config.sharing.align.mode = align::mode_from_name(*args.mode);
    if (!args.out_dir.empty()) config.out_dir = args.out_dir;
    if (config.out_dir.empty()) config.out_dir = "geoshare-out";
    config.validate();
    return config;
}

void write_text(const fs::path& path, const std::string& text) {
    fs::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
    f << text;
}

int cmd_train(const CommonArgs& args) {
    const harness::ExperimentConfig config = load_config(args);
    const harness::GeneratedData data = harness::gen_data(config.data, config.model);
    const harness::TrainResult result = harness::train(config, data);

    const fs::path out(config.out_dir);
    net::save_checkpoint(out / "checkpoint", config.model, result.params, config.training.seed);

    nlohmann::ordered_json j;
    j["schema_version"] = 1;
    harness::ExperimentConfig echo = config;
    echo.out_dir.clear();  // invocation plumbing, keeps reports byte-identical
    j["config"] = nlohmann::ordered_json::parse(harness::config_to_json(echo));
    j["final_train_loss"] = result.trace.final_loss;
    j["final_grad_norm"] = result.trace.final_grad_norm;
    j["steps_taken"] = result.trace.steps_taken;
    j["converged"] = result.trace.converged;
    j["loss_samples"] = result.trace.loss_samples;
    write_text(out / "train_report.json", j.dump(2) + "\n");

    if (args.csv) {
        std::ostringstream csv;
        csv.precision(17);
        csv << "sample,loss\n";
        for (std::size_t i = 0; i < result.trace.loss_samples.size(); ++i)
            csv << i << "," << result.trace.loss_samples[i] << "\n";
        write_text(out / "train_report.csv", csv.str());
    }
    std::cout << "train: loss " << result.trace.final_loss << ", grad norm "
              << result.trace.final_grad_norm << ", steps " << result.trace.steps_taken
              << (result.trace.converged ? " (converged)" : "") << "\n"
              << "wrote " << (out / "train_report.json").string() << "\n";
    return 0;
}

int cmd_share(const CommonArgs& args) {
    const harness::ExperimentConfig config = load_config(args);
    const double t0 = std::chrono::duration<double>(
                          std::chrono::steady_clock::now().time_since_epoch())
                          .count();
    const harness::GeneratedData data = harness::gen_data(config.data, config.model);
    const harness::TrainResult trained = harness::train(config, data);
    const auto bases = harness::build_shape_group_bases(config.model, trained.params, config.sharing);
    const align::GeoShareResult result = align::geo_share(
        config.model, trained.params, bases, config.sharing.align, data.train, data.eval);
    const double t1 = std::chrono::duration<double>(
                          std::chrono::steady_clock::now().time_since_epoch())
                          .count();

    const fs::path out(config.out_dir);
    write_text(out / "alignment_report.json", result.report.to_json() + "\n");
    write_text(out / "coloring.json",
               sharing::coloring_to_json(result.coloring, config.sharing.rank,
                                         config.sharing.strategy, config.sharing.seed) +
                   "\n");
    net::save_checkpoint(out / "aligned", config.model, result.aligned, config.training.seed);
    harness::PhaseTimings timings;
    timings.total_seconds = t1 - t0;
    write_text(out / "timing.json", timings.to_json() + "\n");

    if (args.csv) {
        std::ostringstream csv;
        csv.precision(17);
        csv << "layer,chosen_basis,delta_norm,delta_par_norm,delta_par_clipped_norm,tau,"
               "surrogate_cost_before,surrogate_cost_after\n";
        for (const auto& la : result.report.layers)
            csv << la.layer << "," << la.chosen_basis << "," << la.delta_norm << ","
                << la.delta_par_norm << "," << la.delta_par_clipped_norm << "," << la.tau << ","
                << la.surrogate_cost_before << "," << la.surrogate_cost_after << "\n";
        write_text(out / "alignment_report.csv", csv.str());
    }
    std::cout << "share: loss " << result.report.loss_before << " -> " << result.report.loss_after;
    if (result.report.compression_ratio)
        std::cout << ", compression ratio " << *result.report.compression_ratio;
    std::cout << "\nwrote " << (out / "alignment_report.json").string() << "\n";
    return 0;
}

int cmd_oracle(const CommonArgs& args) {
    const harness::ExperimentConfig config = load_config(args);
    const harness::OracleReport report = harness::run_oracles(config);
    const fs::path out(config.out_dir);
    write_text(out / "oracle_report.json", report.to_json() + "\n");
    if (args.csv) write_text(out / "oracle_report.csv", report.to_csv());
    for (const auto& s : report.suites)
        std::cout << (s.pass ? "[pass] " : "[FAIL] ") << s.name << " measured " << s.measured
                  << " tolerance " << s.tolerance << "\n";
    std::cout << "wrote " << (out / "oracle_report.json").string() << "\n";
    return report.all_passed ? 0 : 2;
}

int cmd_ablate(const CommonArgs& args) {
    const harness::ExperimentConfig config = load_config(args);
    if (!config.ablation)
        throw std::invalid_argument("ablate: config has no 'ablation' section");
    harness::PhaseTimings timings;
    const harness::AblationTable table = harness::ablate(config, *config.ablation, &timings);
    const fs::path out(config.out_dir);
    write_text(out / "ablation.json", table.to_json() + "\n");
    write_text(out / "timing.json", timings.to_json() + "\n");
    if (args.csv) write_text(out / "ablation.csv", table.to_csv());
    std::cout << "ablate over " << table.parameter << ": " << table.rows.size() << " rows\n"
              << "wrote " << (out / "ablation.json").string() << "\n";
    return 0;
}

int cmd_report(const CommonArgs& args) {
    const harness::ExperimentConfig config = load_config(args);
    harness::PhaseTimings timings;
    const harness::RunReport report = harness::run_experiment(config, &timings);
    const fs::path out(config.out_dir);
    write_text(out / "run_report.json", report.to_json() + "\n");
    write_text(out / "timing.json", timings.to_json() + "\n");
    if (args.csv) write_text(out / "run_report.csv", report.to_csv());
    for (const auto& m : report.methods)
        std::cout << m.name << ": delta loss " << m.delta_loss
                  << (m.compression_ratio ? ", ratio " + std::to_string(*m.compression_ratio) : "")
                  << "\n";
    std::cout << "wrote " << (out / "run_report.json").string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"geoshare: curvature-aligned cross-layer parameter sharing at desk scale"};
    app.require_subcommand(1);

    CommonArgs train_args, share_args, oracle_args, ablate_args, report_args;
    add_common(app.add_subcommand("train", "train a toy model and write a checkpoint"), train_args);
    add_common(app.add_subcommand("share", "run the sharing pipeline and write the alignment report"),
               share_args);
    add_common(app.add_subcommand("oracle", "run the brute-force validation suites"), oracle_args);
    add_common(app.add_subcommand("ablate", "sweep t or beta and tabulate the effect"), ablate_args);
    add_common(app.add_subcommand("report", "run the full method-vs-baseline comparison"), report_args);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        app.exit(e);
        return 0;
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;  // usage errors
    }

    try {
        if (app.got_subcommand("train")) return cmd_train(train_args);
        if (app.got_subcommand("share")) return cmd_share(share_args);
        if (app.got_subcommand("oracle")) return cmd_oracle(oracle_args);
        if (app.got_subcommand("ablate")) return cmd_ablate(ablate_args);
        if (app.got_subcommand("report")) return cmd_report(report_args);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
