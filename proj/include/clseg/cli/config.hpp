#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "clseg/benchmark.hpp"
#include "clseg/regularization.hpp"
#include "clseg/segnet.hpp"
#include "clseg/trainer.hpp"

namespace clseg::cli {

/// Environment variable naming the root under which runs without an explicit
/// output directory are placed.
inline constexpr const char* kOutputRootEnv = "CLSEG_OUTPUT_ROOT";

/// Either the built-in four-domain suite or explicit dataset files, one per
/// domain, in training order.
struct BenchmarkConfig {
    std::uint64_t suite_seed = 1;
    std::size_t image_size = 32;
    std::vector<std::filesystem::path> train_paths;
    std::vector<std::filesystem::path> eval_paths;

    bool uses_files() const noexcept { return !train_paths.empty() || !eval_paths.empty(); }
};

struct ExperimentConfig {
    BenchmarkConfig benchmark;
    StrategyConfig strategy;
    TrainSchedule schedule;
    SegNetConfig network;
    std::filesystem::path output_dir;
    std::size_t num_seeds = 5;
    std::uint64_t base_seed = 1;

    void validate() const;
};

/// Command-line values that take precedence over the file.
struct ConfigOverrides {
    std::optional<std::string> strategy;
    std::optional<std::uint64_t> seed;
    std::optional<std::filesystem::path> output_dir;
};

// Parsed form of the TOML-style config: [section] headers, `key = value`
// lines, # comments. Values are strings, numbers, booleans or flat arrays.
using ConfigScalar = std::variant<std::string, double, bool>;
using ConfigValue = std::variant<ConfigScalar, std::vector<ConfigScalar>>;
using ConfigSection = std::map<std::string, ConfigValue>;
using ConfigDocument = std::map<std::string, ConfigSection>;

ConfigDocument parse_config_document(std::string_view text);

/// Builds and validates an experiment. Relative paths resolve against
/// `base_dir` (the config file's directory). When no output directory is
/// given anywhere, runs land in `<root>/<strategy>` where root comes from
/// CLSEG_OUTPUT_ROOT or defaults to "runs".
ExperimentConfig parse_config(std::string_view text, const std::filesystem::path& base_dir,
                              const ConfigOverrides& overrides = {});
ExperimentConfig load_config(const std::filesystem::path& path, const ConfigOverrides& overrides = {});

/// Full config, every field spelled out, for echoing into manifests.
nlohmann::ordered_json config_to_json(const ExperimentConfig& config);

/// Identifies the data a run was evaluated on. Runs are comparable only when
/// these match.
nlohmann::ordered_json benchmark_identity(const ExperimentConfig& config,
                                          const std::vector<DomainDataset>& train,
                                          const std::vector<DomainDataset>& eval);

struct BenchmarkData {
    std::vector<DomainDataset> train;
    std::vector<DomainDataset> eval;
};

BenchmarkData load_benchmark(const BenchmarkConfig& config);

} // namespace clseg::cli
