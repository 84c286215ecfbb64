#include "clseg/cli/commands.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "clseg/error.hpp"
#include "clseg/log.hpp"
#include "clseg/trainer.hpp"

namespace clseg::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read " + path.string());
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
    if (!out.flush()) throw Error("write failed for " + path.string());
}

std::string shortest(double v) {
    char buf[32];
    const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ec == std::errc() ? end : buf);
}

ordered_json parse_json_file(const fs::path& path) {
    try {
        return ordered_json::parse(read_text(path));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

} // namespace

double metric_value(const CLMetrics& m, std::size_t column) {
    switch (column) {
        case 0: return m.CL_DSC;
        case 1: return m.REM;
        case 2: return m.BWT_plus;
        case 3: return m.TL;
        case 4: return m.FWT;
        default: throw Error("metric_value: column out of range");
    }
}

MeanStd mean_std(std::span<const double> values) {
    if (values.empty()) throw Error("mean_std: no values");
    MeanStd r;
    for (double v : values) r.mean += v;
    r.mean /= static_cast<double>(values.size());
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - r.mean) * (v - r.mean);
        r.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    return r;
}

fs::path cmd_run(const ExperimentConfig& config) {
    config.validate();
    const BenchmarkData data = load_benchmark(config.benchmark);
    for (const auto& ds : data.train) {
        if (ds.num_classes != config.network.num_classes) {
            throw ConfigError("network.num_classes", "does not match the datasets' " +
                                                         std::to_string(ds.num_classes) + " classes");
        }
    }
    fs::create_directories(config.output_dir);

    ordered_json runs = ordered_json::array();
    std::vector<std::vector<double>> columns(kMetricNames.size());
    std::vector<std::uint64_t> seeds;

    for (std::size_t r = 0; r < config.num_seeds; ++r) {
        const std::uint64_t seed = config.base_seed + r;
        const std::string name = "seed_" + std::to_string(seed);
        const fs::path dir = config.output_dir / name;
        fs::create_directories(dir / "checkpoints");

        TrainSchedule schedule = config.schedule;
        schedule.seed = seed;
        SequenceOptions options;
        options.network = config.network;
        options.checkpoint_dir = dir / "checkpoints";
        options.log_path = dir / "train.log";

        log::info(std::string(strategy_name(config.strategy.kind)) + " seed " + std::to_string(seed) + " (" +
                             std::to_string(r + 1) + "/" + std::to_string(config.num_seeds) + ")");
        const SequenceResult result = run_sequence(data.train, data.eval, config.strategy, schedule, options);
        const CLMetrics m = cl_metrics(result.results);
        write_matrix_csv(result.results, dir / "R.csv");
        write_text(dir / "metrics.json", metrics_json(m));

        ordered_json entry;
        entry["seed"] = seed;
        entry["R"] = name + "/R.csv";
        entry["metrics"] = name + "/metrics.json";
        entry["log"] = name + "/train.log";
        entry["checkpoints"] = ordered_json::array();
        for (const auto& ck : result.checkpoints) {
            entry["checkpoints"].push_back(name + "/checkpoints/" + ck.filename().generic_string());
        }
        runs.push_back(std::move(entry));
        for (std::size_t c = 0; c < kMetricNames.size(); ++c) columns[c].push_back(metric_value(m, c));
        seeds.push_back(seed);
        log::info(name + " REM=" + shortest(m.REM) + " TL=" + shortest(m.TL));
    }

    ordered_json aggregate;
    aggregate["strategy"] = strategy_name(config.strategy.kind);
    aggregate["num_seeds"] = config.num_seeds;
    aggregate["seeds"] = seeds;
    for (std::size_t c = 0; c < kMetricNames.size(); ++c) {
        const MeanStd ms = mean_std(columns[c]);
        aggregate["metrics"][kMetricNames[c]] = {{"mean", ms.mean}, {"std", ms.std}};
    }
    write_text(config.output_dir / kAggregateName, aggregate.dump(2) + "\n");

    ordered_json manifest;
    manifest["strategy"] = strategy_name(config.strategy.kind);
    manifest["benchmark"] = benchmark_identity(config, data.train, data.eval);
    manifest["config"] = config_to_json(config);
    manifest["aggregate_metrics"] = kAggregateName;
    manifest["runs"] = std::move(runs);
    const fs::path manifest_path = config.output_dir / kManifestName;
    write_text(manifest_path, manifest.dump(2) + "\n");
    return manifest_path;
}

std::string cmd_metrics(const fs::path& matrix_csv_path) {
    return metrics_json(cl_metrics(read_matrix_csv(matrix_csv_path)));
}

Comparison compare_runs(std::span<const fs::path> manifests) {
    if (manifests.size() < 2) throw ConfigError("manifests", "need >= 2 runs to compare");
    Comparison out;
    ordered_json reference;
    for (std::size_t i = 0; i < manifests.size(); ++i) {
        const fs::path& path = manifests[i];
        const ordered_json m = parse_json_file(path);
        if (!m.contains("benchmark") || !m.contains("runs") || !m.contains("strategy")) {
            throw FormatError(path.string() + ": not a run manifest");
        }
        if (i == 0) {
            reference = m["benchmark"];
        } else if (m["benchmark"] != reference) {
            throw ConfigError("manifests", "benchmark mismatch between " + manifests[0].string() + " and " +
                                               path.string());
        }
        ComparisonRow row;
        row.strategy = m["strategy"].get<std::string>();
        row.manifest = path;
        std::vector<std::vector<double>> columns(kMetricNames.size());
        for (const auto& run : m["runs"]) {
            const fs::path metrics_path = path.parent_path() / run["metrics"].get<std::string>();
            const CLMetrics metrics = parse_metrics_json(read_text(metrics_path));
            for (std::size_t c = 0; c < kMetricNames.size(); ++c) columns[c].push_back(metric_value(metrics, c));
        }
        if (columns[0].empty()) throw FormatError(path.string() + ": manifest lists no runs");
        row.num_seeds = columns[0].size();
        for (std::size_t c = 0; c < kMetricNames.size(); ++c) row.metrics[c] = mean_std(columns[c]);
        out.rows.push_back(std::move(row));
    }
    for (std::size_t c = 0; c < kMetricNames.size(); ++c) {
        for (std::size_t r = 1; r < out.rows.size(); ++r) {
            if (out.rows[r].metrics[c].mean > out.rows[out.best[c]].metrics[c].mean) out.best[c] = r;
        }
    }
    return out;
}

std::string comparison_csv(const Comparison& c) {
    std::string s = "strategy,num_seeds";
    for (const char* name : kMetricNames) s += std::string(",") + name + "_mean," + name + "_std";
    s += ",best,manifest\n";
    for (std::size_t r = 0; r < c.rows.size(); ++r) {
        const auto& row = c.rows[r];
        s += row.strategy + "," + std::to_string(row.num_seeds);
        std::string best;
        for (std::size_t m = 0; m < kMetricNames.size(); ++m) {
            s += "," + shortest(row.metrics[m].mean) + "," + shortest(row.metrics[m].std);
            if (c.best[m] == r) best += (best.empty() ? "" : ";") + std::string(kMetricNames[m]);
        }
        s += "," + best + "," + row.manifest.generic_string() + "\n";
    }
    return s;
}

std::string comparison_text(const Comparison& c) {
    std::vector<std::vector<std::string>> cells;
    std::vector<std::string> header = {"strategy", "seeds"};
    for (const char* name : kMetricNames) header.emplace_back(name);
    cells.push_back(header);
    for (std::size_t r = 0; r < c.rows.size(); ++r) {
        const auto& row = c.rows[r];
        std::vector<std::string> line = {row.strategy, std::to_string(row.num_seeds)};
        for (std::size_t m = 0; m < kMetricNames.size(); ++m) {
            char buf[64];
            std::snprintf(buf, sizeof buf, "%.4f +/- %.4f%s", row.metrics[m].mean, row.metrics[m].std,
                          c.best[m] == r ? "*" : " ");
            line.emplace_back(buf);
        }
        cells.push_back(std::move(line));
    }
    std::vector<std::size_t> width(header.size(), 0);
    for (const auto& line : cells) {
        for (std::size_t i = 0; i < line.size(); ++i) width[i] = std::max(width[i], line[i].size());
    }
    std::string s;
    for (const auto& line : cells) {
        std::string text;
        for (std::size_t i = 0; i < line.size(); ++i) {
            if (i > 0) text += "  ";
            text += line[i] + std::string(width[i] - line[i].size(), ' ');
        }
        text.erase(text.find_last_not_of(' ') + 1);
        s += text + "\n";
    }
    return s;
}

} // namespace clseg::cli
