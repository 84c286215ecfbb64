// Command-line front end: run experiments, score saved matrices, compare runs.
//
// Exit codes: 0 success, 2 invalid input (config, arguments, malformed
// files), 1 failure while running. Errors go to stderr as one JSON line.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "clseg/cli/commands.hpp"
#include "clseg/cli/config.hpp"
#include "clseg/error.hpp"
#include "clseg/log.hpp"

namespace {

int report(const char* kind, const std::string& message, const std::string& field = {}) {
    nlohmann::ordered_json j;
    j["error"] = kind;
    if (!field.empty()) j["field"] = field;
    j["message"] = message;
    std::cerr << j.dump() << '\n';
    return std::string(kind) == "runtime" ? 1 : 2;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Continual-learning segmentation experiments"};
    app.require_subcommand(1);
    app.fallthrough();
    bool quiet = false;
    app.add_flag("--quiet", quiet, "Only print errors");

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> output_dir;
    std::optional<std::string> strategy;
    auto* run = app.add_subcommand("run", "Train every seed replicate of a config and write its artifacts");
    run->add_option("config", config_path, "Experiment config file")->required();
    run->add_option("--seed", seed, "Base seed; replicate r uses seed + r");
    run->add_option("--output-dir", output_dir, "Run directory (overrides the config)");
    run->add_option("--strategy", strategy, "Strategy kind (overrides the config)");

    std::string matrix_path;
    auto* metrics = app.add_subcommand("metrics", "Print the metrics of a saved train-test matrix");
    metrics->add_option("matrix", matrix_path, "R.csv file")->required();

    std::vector<std::string> manifests;
    std::string csv_path;
    auto* compare = app.add_subcommand("compare", "Tabulate metrics of several runs");
    compare->add_option("manifests", manifests, "manifest.json of each run")->required();
    compare->add_option("--csv", csv_path, "Also write the table as CSV to this file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return report("usage", e.what());
    }

    clseg::log::set_level(quiet ? clseg::log::Level::quiet : clseg::log::Level::info);

    try {
        if (*run) {
            clseg::cli::ConfigOverrides overrides;
            overrides.seed = seed;
            overrides.strategy = strategy;
            if (output_dir) overrides.output_dir = *output_dir;
            const auto config = clseg::cli::load_config(config_path, overrides);
            const auto manifest = clseg::cli::cmd_run(config);
            if (!quiet) std::cout << manifest.generic_string() << '\n';
        } else if (*metrics) {
            std::cout << clseg::cli::cmd_metrics(matrix_path);
        } else if (*compare) {
            const std::vector<std::filesystem::path> paths(manifests.begin(), manifests.end());
            const auto table = clseg::cli::compare_runs(paths);
            std::cout << clseg::cli::comparison_text(table);
            if (!csv_path.empty()) {
                std::ofstream out(csv_path, std::ios::binary | std::ios::trunc);
                if (!(out << clseg::cli::comparison_csv(table))) {
                    return report("runtime", "cannot write " + csv_path);
                }
            }
        }
    } catch (const clseg::ConfigError& e) {
        return report("config", e.what(), e.field());
    } catch (const clseg::FormatError& e) {
        return report("format", e.what());
    } catch (const std::exception& e) {
        return report("runtime", e.what());
    }
    return 0;
}
