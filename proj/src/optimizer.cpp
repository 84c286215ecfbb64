#include "clseg/optimizer.hpp"

#include <cmath>
#include <string>

#include "clseg/error.hpp"

namespace clseg {

OptimizerState OptimizerState::zeros(const ParameterStore& layout) {
    OptimizerState s;
    for (const auto& e : layout.entries()) s.velocity.emplace_back(e.tensor.size(), 0.0);
    return s;
}

void sgd_momentum_step(ParameterStore& params, const PerParameter& grads, const PerParameter& lr, double momentum,
                       OptimizerState& state, const FrozenFlags* frozen) {
    require_aligned(params, grads, "sgd_momentum_step grads");
    require_aligned(params, lr, "sgd_momentum_step lr");
    if (state.velocity.empty()) state = OptimizerState::zeros(params);
    require_aligned(params, state.velocity, "sgd_momentum_step velocity");
    if (frozen != nullptr && frozen->size() != params.size()) throw ShapeError("sgd_momentum_step: mask misaligned");

    for (std::size_t p = 0; p < grads.size(); ++p) {
        for (std::size_t i = 0; i < grads[p].size(); ++i) {
            if (!std::isfinite(grads[p][i])) {
                throw NumericError("sgd_momentum_step: non-finite gradient in '" + params.entries()[p].id +
                                   "' at index " + std::to_string(i));
            }
            if (lr[p][i] < 0.0) throw Error("sgd_momentum_step: negative learning rate");
        }
    }

    for (std::size_t p = 0; p < grads.size(); ++p) {
        auto theta = params.entries()[p].tensor.data();
        auto& v = state.velocity[p];
        const auto* flags = frozen != nullptr ? &(*frozen)[p] : nullptr;
        for (std::size_t i = 0; i < theta.size(); ++i) {
            if (flags != nullptr && (*flags)[i]) {
                v[i] = 0.0;
                continue;
            }
            v[i] = momentum * v[i] + grads[p][i];
            theta[i] -= lr[p][i] * v[i];
        }
    }
    ++state.steps;
}

} // namespace clseg
