#pragma once

#include <cstdint>
#include <vector>

#include "clseg/param_store.hpp"

namespace clseg {

using FrozenFlags = std::vector<std::vector<std::uint8_t>>;

struct OptimizerState {
    PerParameter velocity;
    std::uint64_t steps = 0;

    static OptimizerState zeros(const ParameterStore& layout);

    friend bool operator==(const OptimizerState&, const OptimizerState&) = default;
};

/// Heavy-ball SGD with per-parameter learning rates:
///   v <- momentum * v + g;  theta <- theta - lr * v
/// Frozen entries keep theta untouched and their velocity pinned at zero.
/// Throws NumericError on a non-finite gradient before modifying anything.
void sgd_momentum_step(ParameterStore& params, const PerParameter& grads, const PerParameter& lr, double momentum,
                       OptimizerState& state, const FrozenFlags* frozen = nullptr);

} // namespace clseg
