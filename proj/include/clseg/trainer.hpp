#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "clseg/benchmark.hpp"
#include "clseg/error.hpp"
#include "clseg/importance.hpp"
#include "clseg/metrics.hpp"
#include "clseg/optimizer.hpp"
#include "clseg/regularization.hpp"
#include "clseg/segnet.hpp"

namespace clseg {

struct TrainSchedule {
    std::size_t epochs_per_domain = 12;
    double momentum = 0.95;
    double initial_lr = 0.1;
    double decay_factor = 0.5;
    std::size_t decay_every_epochs = 4;
    std::size_t batch_size = 1;
    std::uint64_t seed = 0;

    void validate() const;

    /// Base rate for a 0-based epoch. Decaying runs (the first domain, or any
    /// from-scratch run) step down every `decay_every_epochs`; later domains
    /// hold the rate reached in the final decaying epoch.
    double base_lr(std::size_t epoch, bool decaying) const;
};

struct EpochRecord {
    std::size_t domain = 0;  // 1-based
    std::size_t epoch = 0;   // 1-based
    std::size_t step = 0;    // cumulative optimizer steps within the domain
    double loss = 0.0;       // mean data loss over the epoch
    double base_lr = 0.0;
};

/// Importance-derived state carried from earlier domains.
struct DomainState {
    std::optional<ParameterStore> theta_star;
    std::optional<ImportanceMap> omega;
    std::optional<FreezeMask> freeze_mask;
};

struct DomainContext {
    std::size_t domain = 1;  // 1-based, keys the RNG streams
    bool decaying = true;
};

class DivergenceError : public NumericError {
public:
    using NumericError::NumericError;
};

struct DomainTrainResult {
    std::vector<EpochRecord> epochs;
    OptimizerState optimizer;
};

/// Mini-batch SGD with momentum over one domain, applying the strategy's
/// hooks each step: surrogate penalty gradient (mas), per-parameter rates
/// (mas_lr family), hard freezing (mas_fix), dropout and l2.
DomainTrainResult train_domain(SegNet& net, const DomainDataset& data, const StrategyConfig& strategy,
                               const TrainSchedule& schedule, const DomainState& state, const DomainContext& context);

/// Mean foreground Dice of `net` on a dataset, pooling all its pixels.
double evaluate_dice(const SegNet& net, const DomainDataset& data);

struct SequenceOptions {
    SegNetConfig network;
    std::optional<std::filesystem::path> checkpoint_dir;
    std::optional<std::filesystem::path> log_path;
    /// Checkpoint written by an earlier run of the same configuration.
    std::optional<std::filesystem::path> resume_from;
};

struct SequenceResult {
    TrainTestMatrix results;
    std::vector<std::filesystem::path> checkpoints;
    std::vector<EpochRecord> logs;
    std::vector<ImportanceMap> importance_history;
    std::size_t completed_domains = 0;
};

/// Raised by run_sequence; carries everything finished before the failure.
class SequenceFailure : public Error {
public:
    SequenceFailure(const std::string& message, SequenceResult partial)
        : Error(message), partial_(std::move(partial)) {}
    const SequenceResult& partial() const noexcept { return partial_; }

private:
    SequenceResult partial_;
};

/// Trains through the domains in order, filling one row of the train-test
/// matrix after each. Importance is computed on each finished domain's
/// training images, post-processed and accumulated before the next domain.
SequenceResult run_sequence(std::span<const DomainDataset> train, std::span<const DomainDataset> eval,
                            const StrategyConfig& strategy, const TrainSchedule& schedule,
                            const SequenceOptions& options);

std::string format_epoch_record(const EpochRecord& r);

} // namespace clseg
