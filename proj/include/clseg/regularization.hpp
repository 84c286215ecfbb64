#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "clseg/importance.hpp"
#include "clseg/param_store.hpp"

namespace clseg {

enum class StrategyKind { fine_tune, joint, mas, mas_lr, mas_fix, l2, dropout, mas_lr_dropout };

std::string_view strategy_name(StrategyKind kind);
StrategyKind parse_strategy(std::string_view name);

struct StrategyConfig {
    StrategyKind kind = StrategyKind::fine_tune;
    double lambda = 1e4;
    double beta_per_domain = 0.25;
    double min_importance_to_freeze = 0.05;
    double l2_coefficient = 0.0;
    double dropout_rate = 0.0;
    Granularity importance_granularity = Granularity::parameter;

    /// Defaults per kind: kernel-level importance for mas_fix, filter-level
    /// for the mas_lr family, parameter-level otherwise.
    static StrategyConfig defaults(StrategyKind kind);

    void validate() const;

    bool uses_importance() const;
    bool uses_penalty() const { return kind == StrategyKind::mas; }
    bool scales_learning_rate() const { return kind == StrategyKind::mas_lr || kind == StrategyKind::mas_lr_dropout; }
    bool uses_freezing() const { return kind == StrategyKind::mas_fix; }
};

struct FreezeEntry {
    std::string id;
    std::vector<std::uint8_t> frozen;

    friend bool operator==(const FreezeEntry&, const FreezeEntry&) = default;
};

/// Hard-freeze mask over every scalar parameter. Frozen entries never thaw.
struct FreezeMask {
    std::vector<FreezeEntry> entries;
    double frozen_fraction = 0.0;

    static FreezeMask none(const ParameterStore& layout);
    static FreezeMask all(const ParameterStore& layout);

    std::size_t frozen_count() const;
    std::size_t total() const;
    /// Recomputes frozen_fraction from the flags.
    void refresh_fraction();
    std::vector<std::vector<std::uint8_t>> aligned_to(const ParameterStore& layout) const;

    friend bool operator==(const FreezeMask&, const FreezeMask&) = default;
};

struct PenaltyResult {
    double penalty = 0.0;
    PerParameter gradient;
};

/// (lambda / P) * sum omega * (theta - theta_star)^2 and its gradient
/// (2 lambda / P) * omega * (theta - theta_star).
PenaltyResult surrogate_penalty(const ParameterStore& theta, const ParameterStore& theta_star,
                                const ImportanceMap& omega, double lambda, std::size_t parameter_count);

/// (1 - omega) * base_lr elementwise. Requires a normalized map.
PerParameter effective_learning_rates(const ImportanceMap& omega, const ParameterStore& layout, double base_lr);

/// Freezes the most important not-yet-frozen parameters (omega >= min_importance,
/// descending, ties by store order then flat index) until the cumulative
/// budget min(1, previous fraction + beta_d) would be exceeded.
FreezeMask build_freeze_mask(const ImportanceMap& omega, const ParameterStore& layout,
                             const std::optional<FreezeMask>& previous, double beta_d, double min_importance);

/// Gradient-side and forward-side hooks of the non-importance baselines.
struct BaselineHooks {
    double l2_coefficient = 0.0;
    double dropout_rate = 0.0;
};

BaselineHooks apply_baseline(StrategyKind kind, const StrategyConfig& config);

/// grads += coefficient * theta
void add_l2_gradient(PerParameter& grads, const ParameterStore& theta, double coefficient);

} // namespace clseg
