#include "clseg/importance.hpp"

#include <algorithm>
#include <cmath>

#include "clseg/error.hpp"
#include "clseg/log.hpp"

namespace clseg {

std::string_view granularity_name(Granularity g) {
    switch (g) {
        case Granularity::parameter: return "parameter";
        case Granularity::kernel: return "kernel";
        case Granularity::filter: return "filter";
    }
    return "unknown";
}

Granularity parse_granularity(std::string_view name) {
    if (name == "parameter") return Granularity::parameter;
    if (name == "kernel") return Granularity::kernel;
    if (name == "filter") return Granularity::filter;
    throw ConfigError("importance_granularity", "expected parameter|kernel|filter, got '" + std::string(name) + "'");
}

ImportanceMap ImportanceMap::uniform(const ParameterStore& layout, double value, Granularity granularity,
                                     bool normalized) {
    ImportanceMap map;
    map.granularity = granularity;
    map.normalized = normalized;
    for (const auto& e : layout.entries()) map.entries.push_back({e.id, std::vector<double>(e.tensor.size(), value)});
    return map;
}

std::vector<std::string> ImportanceMap::ids() const {
    std::vector<std::string> out;
    for (const auto& e : entries) out.push_back(e.id);
    return out;
}

std::size_t ImportanceMap::total_values() const {
    std::size_t n = 0;
    for (const auto& e : entries) n += e.values.size();
    return n;
}

const ImportanceEntry* ImportanceMap::find(const std::string& id) const {
    for (const auto& e : entries) {
        if (e.id == id) return &e;
    }
    return nullptr;
}

PerParameter ImportanceMap::aligned_to(const ParameterStore& layout) const {
    require_same_ids(layout.ids(), ids(), "importance map");
    PerParameter out;
    out.reserve(layout.size());
    for (const auto& p : layout.entries()) {
        const auto* e = find(p.id);
        if (e->values.size() != p.tensor.size()) {
            throw ShapeError("importance map: '" + p.id + "' has " + std::to_string(e->values.size()) +
                             " values, parameter has " + std::to_string(p.tensor.size()));
        }
        out.push_back(e->values);
    }
    return out;
}

ImportanceMap compute_raw_importance(const SegNet& net, std::span<const Tensor> samples) {
    SegNet work = net;
    auto& params = work.params();
    params.set_requires_grad(true);

    ImportanceMap map;
    for (const auto& e : params.entries()) map.entries.push_back({e.id, std::vector<double>(e.tensor.size(), 0.0)});

    std::size_t count = 0;
    for (const Tensor& sample : samples) {
        Tensor batch = sample.rank() == 3 ? sample.reshaped({1, sample.dim(0), sample.dim(1), sample.dim(2)}) : sample;
        work.check_input(batch);
        const std::size_t per_image = batch.size() / batch.dim(0);
        for (std::size_t n = 0; n < batch.dim(0); ++n) {
            std::vector<double> pixels(batch.data().begin() + static_cast<std::ptrdiff_t>(n * per_image),
                                       batch.data().begin() + static_cast<std::ptrdiff_t>((n + 1) * per_image));
            Tensor image({1, batch.dim(1), batch.dim(2), batch.dim(3)}, std::move(pixels));
            params.zero_grad();
            Graph g;
            Var probs = ops::softmax_channel(g, work.forward(g, g.constant(std::move(image))));
            g.backward(ops::l2_squared_norm(g, probs));
            for (std::size_t p = 0; p < params.size(); ++p) {
                auto grad = params.entries()[p].tensor.grad();
                auto& acc = map.entries[p].values;
                for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += std::abs(grad[i]);
            }
            ++count;
        }
    }
    if (count == 0) throw Error("compute_raw_importance: empty sample list");

    const double inv = 1.0 / static_cast<double>(count);
    for (auto& e : map.entries) {
        for (double& v : e.values) {
            v *= inv;
            if (!std::isfinite(v)) throw NumericError("compute_raw_importance: non-finite importance for '" + e.id + "'");
        }
    }
    map.sample_count = count;
    return map;
}

namespace {

double quantile_sorted(const std::vector<double>& sorted, double q) {
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

} // namespace

ImportanceMap clip_outliers_iqr(ImportanceMap map) {
    if (map.granularity != Granularity::parameter || map.normalized) {
        throw Error("clip_outliers_iqr: expects a raw parameter-level map");
    }
    std::vector<double> pool;
    pool.reserve(map.total_values());
    for (const auto& e : map.entries) pool.insert(pool.end(), e.values.begin(), e.values.end());
    if (pool.size() < 4) {
        log::warning("clip_outliers_iqr: fewer than 4 values, map left unchanged");
        return map;
    }
    std::sort(pool.begin(), pool.end());
    const double q1 = quantile_sorted(pool, 0.25);
    const double q3 = quantile_sorted(pool, 0.75);
    const double iqr = q3 - q1;
    const double upper = q3 + 1.5 * iqr;
    const double lower = std::max(0.0, q1 - 1.5 * iqr);
    for (auto& e : map.entries) {
        for (double& v : e.values) v = std::clamp(v, lower, upper);
    }
    return map;
}

ImportanceMap normalize_unit(ImportanceMap map) {
    double lo = 0.0, hi = 0.0;
    bool first = true;
    for (const auto& e : map.entries) {
        for (double v : e.values) {
            if (first) {
                lo = hi = v;
                first = false;
            }
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }
    const double range = hi - lo;
    for (auto& e : map.entries) {
        for (double& v : e.values) v = range > 0.0 ? (v - lo) / range : 0.0;
    }
    map.normalized = true;
    return map;
}

namespace {

void average_block(std::vector<std::pair<std::vector<double>*, std::pair<std::size_t, std::size_t>>> parts) {
    double total = 0.0;
    std::size_t count = 0;
    for (auto& [values, range] : parts) {
        for (std::size_t i = range.first; i < range.second; ++i) total += (*values)[i];
        count += range.second - range.first;
    }
    if (count == 0) return;
    const double mean = total / static_cast<double>(count);
    for (auto& [values, range] : parts) {
        for (std::size_t i = range.first; i < range.second; ++i) (*values)[i] = mean;
    }
}

} // namespace

ImportanceMap aggregate(const ImportanceMap& map, const ParameterStore& layout, Granularity granularity) {
    if (map.granularity != Granularity::parameter) {
        throw Error("aggregate: map is already aggregated at " + std::string(granularity_name(map.granularity)) +
                    " level");
    }
    if (granularity == Granularity::parameter) throw Error("aggregate: target granularity must be kernel or filter");

    ImportanceMap out = map;
    out.granularity = granularity;
    PerParameter values = map.aligned_to(layout);
    const auto entries = layout.entries();

    // bias index per layer, for filter-level pooling
    auto bias_of = [&](const std::string& layer) -> std::optional<std::size_t> {
        for (std::size_t j = 0; j < entries.size(); ++j) {
            if (entries[j].layer == layer && entries[j].role == ParamRole::bias) return j;
        }
        return std::nullopt;
    };

    for (std::size_t p = 0; p < entries.size(); ++p) {
        const auto& e = entries[p];
        if (e.role != ParamRole::conv_weight) continue;
        const auto s = e.structure();
        const std::size_t kernel = s.kernel_h * s.kernel_w;
        if (granularity == Granularity::kernel) {
            for (std::size_t b = 0; b < s.out_channels * s.in_channels; ++b) {
                average_block({{&values[p], {b * kernel, (b + 1) * kernel}}});
            }
        } else {
            const std::size_t filter = s.in_channels * kernel;
            const auto bias = bias_of(e.layer);
            if (bias && entries[*bias].tensor.size() != s.out_channels) {
                throw ShapeError("aggregate: bias of layer '" + e.layer + "' does not match its out-channels");
            }
            for (std::size_t o = 0; o < s.out_channels; ++o) {
                if (bias) {
                    average_block({{&values[p], {o * filter, (o + 1) * filter}}, {&values[*bias], {o, o + 1}}});
                } else {
                    average_block({{&values[p], {o * filter, (o + 1) * filter}}});
                }
            }
        }
    }
    // Biases outside a filter pool are already one block per element.

    for (std::size_t p = 0; p < entries.size(); ++p) {
        for (auto& oe : out.entries) {
            if (oe.id == entries[p].id) oe.values = values[p];
        }
    }
    return out;
}

ImportanceMap accumulate(const std::optional<ImportanceMap>& running, const ImportanceMap& fresh,
                         std::size_t task_index) {
    if (task_index < 1) throw Error("accumulate: task index must be >= 1");
    if (!fresh.normalized) throw Error("accumulate: fresh map must be normalized");
    if (task_index == 1) {
        if (running) throw Error("accumulate: running map given for the first task");
        ImportanceMap out = fresh;
        out.task_count = 1;
        return out;
    }
    if (!running) throw Error("accumulate: running map required for task " + std::to_string(task_index));
    if (running->task_count != task_index - 1) {
        throw Error("accumulate: running map holds " + std::to_string(running->task_count) + " tasks, expected " +
                    std::to_string(task_index - 1));
    }
    if (running->granularity != fresh.granularity) {
        throw Error("accumulate: granularity mismatch (" + std::string(granularity_name(running->granularity)) +
                    " vs " + std::string(granularity_name(fresh.granularity)) + ")");
    }
    require_same_ids(running->ids(), fresh.ids(), "accumulate");

    ImportanceMap out = *running;
    const double prev = static_cast<double>(task_index - 1);
    const double t = static_cast<double>(task_index);
    for (auto& e : out.entries) {
        const auto* f = fresh.find(e.id);
        if (f->values.size() != e.values.size()) throw ShapeError("accumulate: size mismatch for '" + e.id + "'");
        for (std::size_t i = 0; i < e.values.size(); ++i) e.values[i] = (prev * e.values[i] + f->values[i]) / t;
    }
    out.task_count = task_index;
    out.sample_count = fresh.sample_count;
    out.normalized = true;
    return out;
}

ImportanceMap postprocess_importance(ImportanceMap raw, const ParameterStore& layout, Granularity granularity) {
    ImportanceMap processed = normalize_unit(clip_outliers_iqr(std::move(raw)));
    if (granularity == Granularity::parameter) return processed;
    return aggregate(processed, layout, granularity);
}

} // namespace clseg
