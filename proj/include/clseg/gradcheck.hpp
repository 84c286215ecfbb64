#pragma once

#include <cstddef>
#include <functional>
#include <string>

#include "clseg/autograd.hpp"
#include "clseg/param_store.hpp"

namespace clseg {

using LossBuilder = std::function<Var(Graph&, ParameterStore&)>;

struct GradCheckResult {
    /// max over coordinates of |analytic - central| / max(1, |central|)
    double max_relative_error = 0.0;
    std::string worst_param;
    std::size_t worst_index = 0;
    std::size_t coordinates = 0;
};

/// Compares reverse-mode gradients of `build_loss` against central finite
/// differences for every scalar in `params`. Values are restored afterwards.
GradCheckResult finite_difference_check(const LossBuilder& build_loss, ParameterStore& params, double epsilon);

} // namespace clseg
