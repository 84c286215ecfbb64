#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "clseg/cli/config.hpp"
#include "clseg/metrics.hpp"

namespace clseg::cli {

inline constexpr const char* kManifestName = "manifest.json";
inline constexpr const char* kAggregateName = "aggregate_metrics.json";

/// Metric columns in report order.
inline constexpr std::array<const char*, 5> kMetricNames = {"CL_DSC", "REM", "BWT_plus", "TL", "FWT"};

double metric_value(const CLMetrics& m, std::size_t column);

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;  // sample standard deviation, 0 for a single value
};

MeanStd mean_std(std::span<const double> values);

/// Runs every seed replicate of `config` and writes, under output_dir:
///   seed_<s>/R.csv, seed_<s>/metrics.json, seed_<s>/train.log,
///   seed_<s>/checkpoints/domain_<i>.ckpt, aggregate_metrics.json and
///   manifest.json. Returns the manifest path.
std::filesystem::path cmd_run(const ExperimentConfig& config);

/// Metrics JSON of a saved train-test matrix.
std::string cmd_metrics(const std::filesystem::path& matrix_csv_path);

struct ComparisonRow {
    std::string strategy;
    std::filesystem::path manifest;
    std::size_t num_seeds = 0;
    std::array<MeanStd, kMetricNames.size()> metrics;
};

struct Comparison {
    std::vector<ComparisonRow> rows;
    /// Row index holding the highest mean, per metric column. Every metric is
    /// higher-is-better.
    std::array<std::size_t, kMetricNames.size()> best{};
};

/// Requires at least two manifests describing the same benchmark.
Comparison compare_runs(std::span<const std::filesystem::path> manifests);

std::string comparison_csv(const Comparison& c);
/// Fixed-width table; the best entry of each column carries a trailing '*'.
std::string comparison_text(const Comparison& c);

} // namespace clseg::cli
