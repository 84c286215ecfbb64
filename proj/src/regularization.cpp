#include "clseg/regularization.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "clseg/error.hpp"

namespace clseg {

std::string_view strategy_name(StrategyKind kind) {
    switch (kind) {
        case StrategyKind::fine_tune: return "fine_tune";
        case StrategyKind::joint: return "joint";
        case StrategyKind::mas: return "mas";
        case StrategyKind::mas_lr: return "mas_lr";
        case StrategyKind::mas_fix: return "mas_fix";
        case StrategyKind::l2: return "l2";
        case StrategyKind::dropout: return "dropout";
        case StrategyKind::mas_lr_dropout: return "mas_lr_dropout";
    }
    return "unknown";
}

StrategyKind parse_strategy(std::string_view name) {
    for (auto k : {StrategyKind::fine_tune, StrategyKind::joint, StrategyKind::mas, StrategyKind::mas_lr,
                   StrategyKind::mas_fix, StrategyKind::l2, StrategyKind::dropout, StrategyKind::mas_lr_dropout}) {
        if (strategy_name(k) == name) return k;
    }
    throw ConfigError("strategy.kind", "unknown strategy '" + std::string(name) + "'");
}

StrategyConfig StrategyConfig::defaults(StrategyKind kind) {
    StrategyConfig cfg;
    // Higher rates cost the small default network too much plasticity.
    constexpr double kDefaultDropoutRate = 0.05;
    cfg.kind = kind;
    switch (kind) {
        case StrategyKind::mas_fix: cfg.importance_granularity = Granularity::kernel; break;
        case StrategyKind::mas_lr: cfg.importance_granularity = Granularity::filter; break;
        case StrategyKind::mas_lr_dropout:
            cfg.importance_granularity = Granularity::filter;
            cfg.dropout_rate = kDefaultDropoutRate;
            break;
        case StrategyKind::dropout: cfg.dropout_rate = kDefaultDropoutRate; break;
        case StrategyKind::l2: cfg.l2_coefficient = 1e-3; break;
        default: break;
    }
    return cfg;
}

void StrategyConfig::validate() const {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("strategy.lambda", "must be a finite value >= 0");
    if (!(beta_per_domain > 0.0 && beta_per_domain <= 1.0)) {
        throw ConfigError("strategy.beta_per_domain", "must be in (0,1]");
    }
    if (!(min_importance_to_freeze >= 0.0 && min_importance_to_freeze <= 1.0)) {
        throw ConfigError("strategy.min_importance_to_freeze", "must be in [0,1]");
    }
    if (!(l2_coefficient >= 0.0) || !std::isfinite(l2_coefficient)) {
        throw ConfigError("strategy.l2_coefficient", "must be a finite value >= 0");
    }
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("strategy.dropout_rate", "must be in [0,1)");
}

bool StrategyConfig::uses_importance() const {
    return kind == StrategyKind::mas || kind == StrategyKind::mas_lr || kind == StrategyKind::mas_fix ||
           kind == StrategyKind::mas_lr_dropout;
}

FreezeMask FreezeMask::none(const ParameterStore& layout) {
    FreezeMask mask;
    for (const auto& e : layout.entries()) mask.entries.push_back({e.id, std::vector<std::uint8_t>(e.tensor.size(), 0)});
    return mask;
}

FreezeMask FreezeMask::all(const ParameterStore& layout) {
    FreezeMask mask;
    for (const auto& e : layout.entries()) mask.entries.push_back({e.id, std::vector<std::uint8_t>(e.tensor.size(), 1)});
    mask.frozen_fraction = 1.0;
    return mask;
}

std::size_t FreezeMask::frozen_count() const {
    std::size_t n = 0;
    for (const auto& e : entries) n += static_cast<std::size_t>(std::count(e.frozen.begin(), e.frozen.end(), 1));
    return n;
}

std::size_t FreezeMask::total() const {
    std::size_t n = 0;
    for (const auto& e : entries) n += e.frozen.size();
    return n;
}

void FreezeMask::refresh_fraction() {
    const std::size_t t = total();
    frozen_fraction = t == 0 ? 0.0 : static_cast<double>(frozen_count()) / static_cast<double>(t);
}

std::vector<std::vector<std::uint8_t>> FreezeMask::aligned_to(const ParameterStore& layout) const {
    std::vector<std::string> ids;
    for (const auto& e : entries) ids.push_back(e.id);
    require_same_ids(layout.ids(), ids, "freeze mask");
    std::vector<std::vector<std::uint8_t>> out;
    for (const auto& p : layout.entries()) {
        for (const auto& e : entries) {
            if (e.id != p.id) continue;
            if (e.frozen.size() != p.tensor.size()) throw ShapeError("freeze mask: size mismatch for '" + p.id + "'");
            out.push_back(e.frozen);
        }
    }
    return out;
}

PenaltyResult surrogate_penalty(const ParameterStore& theta, const ParameterStore& theta_star,
                                const ImportanceMap& omega, double lambda, std::size_t parameter_count) {
    if (parameter_count == 0) throw Error("surrogate_penalty: parameter count must be positive");
    require_same_ids(theta.ids(), theta_star.ids(), "surrogate_penalty theta*");
    const PerParameter weights = omega.aligned_to(theta);
    const double coef = lambda / static_cast<double>(parameter_count);

    PenaltyResult result;
    result.gradient.reserve(theta.size());
    for (std::size_t p = 0; p < theta.size(); ++p) {
        const auto& cur = theta.entries()[p];
        const auto& anchor = theta_star.entries()[theta_star.index_of(cur.id)];
        if (anchor.tensor.size() != cur.tensor.size()) {
            throw ShapeError("surrogate_penalty: theta* size mismatch for '" + cur.id + "'");
        }
        std::vector<double> grad(cur.tensor.size());
        for (std::size_t i = 0; i < grad.size(); ++i) {
            const double diff = cur.tensor[i] - anchor.tensor[i];
            result.penalty += weights[p][i] * diff * diff;
            grad[i] = 2.0 * coef * weights[p][i] * diff;
        }
        result.gradient.push_back(std::move(grad));
    }
    result.penalty *= coef;
    return result;
}

PerParameter effective_learning_rates(const ImportanceMap& omega, const ParameterStore& layout, double base_lr) {
    if (!omega.normalized) throw Error("effective_learning_rates: importance map is not normalized");
    if (!(base_lr > 0.0)) throw Error("effective_learning_rates: base learning rate must be positive");
    PerParameter rates = omega.aligned_to(layout);
    for (auto& values : rates) {
        for (double& v : values) {
            if (v < 0.0 || v > 1.0) throw Error("effective_learning_rates: importance outside [0,1]");
            v = (1.0 - v) * base_lr;
        }
    }
    return rates;
}

FreezeMask build_freeze_mask(const ImportanceMap& omega, const ParameterStore& layout,
                             const std::optional<FreezeMask>& previous, double beta_d, double min_importance) {
    if (!(beta_d > 0.0)) throw ConfigError("strategy.beta_per_domain", "must be > 0");
    if (!omega.normalized) throw Error("build_freeze_mask: importance map is not normalized");
    const PerParameter weights = omega.aligned_to(layout);

    FreezeMask mask = previous ? *previous : FreezeMask::none(layout);
    auto flags = mask.aligned_to(layout);
    mask.refresh_fraction();

    struct Candidate {
        double weight;
        std::size_t param;
        std::size_t index;
    };
    std::vector<Candidate> candidates;
    for (std::size_t p = 0; p < weights.size(); ++p) {
        for (std::size_t i = 0; i < weights[p].size(); ++i) {
            if (!flags[p][i] && weights[p][i] >= min_importance) candidates.push_back({weights[p][i], p, i});
        }
    }
    if (candidates.empty()) return mask;

    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const Candidate& a, const Candidate& b) { return a.weight > b.weight; });

    const std::size_t total = mask.total();
    const double budget = std::min(1.0, mask.frozen_fraction + beta_d);
    // Small slack so that e.g. 0.25 of 4 parameters admits exactly one.
    const auto budget_count = static_cast<std::size_t>(std::floor(budget * static_cast<double>(total) + 1e-9));
    std::size_t frozen = mask.frozen_count();
    for (const auto& c : candidates) {
        if (frozen + 1 > budget_count) break;
        flags[c.param][c.index] = 1;
        ++frozen;
    }

    FreezeMask out;
    for (std::size_t p = 0; p < layout.size(); ++p) out.entries.push_back({layout.entries()[p].id, std::move(flags[p])});
    out.refresh_fraction();
    return out;
}

BaselineHooks apply_baseline(StrategyKind kind, const StrategyConfig& config) {
    BaselineHooks hooks;
    if (kind == StrategyKind::l2) hooks.l2_coefficient = config.l2_coefficient;
    if (kind == StrategyKind::dropout || kind == StrategyKind::mas_lr_dropout) hooks.dropout_rate = config.dropout_rate;
    return hooks;
}

void add_l2_gradient(PerParameter& grads, const ParameterStore& theta, double coefficient) {
    require_aligned(theta, grads, "add_l2_gradient");
    if (coefficient == 0.0) return;
    for (std::size_t p = 0; p < grads.size(); ++p) {
        const auto& t = theta.entries()[p].tensor;
        for (std::size_t i = 0; i < grads[p].size(); ++i) grads[p][i] += coefficient * t[i];
    }
}

} // namespace clseg
