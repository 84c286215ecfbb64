#include "clseg/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "clseg/error.hpp"

namespace clseg {
namespace {

double evaluate(const LossBuilder& build_loss, ParameterStore& params) {
    Graph g(false);
    const double v = g.value(build_loss(g, params))[0];
    if (!std::isfinite(v)) throw NumericError("finite_difference_check: non-finite loss at perturbed point");
    return v;
}

} // namespace

GradCheckResult finite_difference_check(const LossBuilder& build_loss, ParameterStore& params, double epsilon) {
    if (!(epsilon > 0.0 && epsilon <= 1e-2)) {
        throw ConfigError("epsilon", "must lie in (0, 1e-2]");
    }
    params.set_requires_grad(true);
    params.zero_grad();
    {
        Graph g;
        Var loss = build_loss(g, params);
        g.backward(loss);
    }
    const PerParameter analytic = params.gradients();

    GradCheckResult result;
    for (std::size_t p = 0; p < params.size(); ++p) {
        auto& entry = params.entries()[p];
        auto data = entry.tensor.data();
        for (std::size_t i = 0; i < data.size(); ++i) {
            const double saved = data[i];
            data[i] = saved + epsilon;
            const double up = evaluate(build_loss, params);
            data[i] = saved - epsilon;
            const double down = evaluate(build_loss, params);
            data[i] = saved;
            const double central = (up - down) / (2.0 * epsilon);
            const double err = std::abs(analytic[p][i] - central) / std::max(1.0, std::abs(central));
            ++result.coordinates;
            if (result.worst_param.empty() || err > result.max_relative_error) {
                result.max_relative_error = err;
                result.worst_param = entry.id;
                result.worst_index = i;
            }
        }
    }
    return result;
}

} // namespace clseg
