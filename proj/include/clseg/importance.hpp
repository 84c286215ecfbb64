#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "clseg/param_store.hpp"
#include "clseg/segnet.hpp"

namespace clseg {

enum class Granularity : std::uint8_t { parameter = 0, kernel = 1, filter = 2 };

std::string_view granularity_name(Granularity g);
Granularity parse_granularity(std::string_view name);

struct ImportanceEntry {
    std::string id;
    std::vector<double> values;

    friend bool operator==(const ImportanceEntry&, const ImportanceEntry&) = default;
};

/// Nonnegative per-parameter sensitivities aligned with a ParameterStore.
struct ImportanceMap {
    Granularity granularity = Granularity::parameter;
    bool normalized = false;
    std::size_t sample_count = 0;
    std::size_t task_count = 0;
    std::vector<ImportanceEntry> entries;

    /// Every value set to `value`; mainly for equivalence checks.
    static ImportanceMap uniform(const ParameterStore& layout, double value,
                                 Granularity granularity = Granularity::parameter, bool normalized = true);

    std::vector<std::string> ids() const;
    std::size_t total_values() const;
    const ImportanceEntry* find(const std::string& id) const;

    /// Values in store order; throws if ids or sizes disagree with `layout`.
    PerParameter aligned_to(const ParameterStore& layout) const;

    friend bool operator==(const ImportanceMap&, const ImportanceMap&) = default;
};

/// Average over samples of |d ||softmax(F(x))||^2 / d theta|, where the norm
/// runs over the full output volume of each sample. Labels are never used.
/// Each tensor in `samples` is [C,H,W] or [N,C,H,W]; every image counts once.
ImportanceMap compute_raw_importance(const SegNet& net, std::span<const Tensor> samples);

/// Tukey fences (1.5 IQR) over the network-wide pool of values; outliers are
/// set to the fence they crossed. Quartiles use linear interpolation on the
/// sorted pool. The lower fence is floored at 0.
ImportanceMap clip_outliers_iqr(ImportanceMap map);

/// Network-wide min-max scaling to [0,1]. A constant map becomes all zeros.
ImportanceMap normalize_unit(ImportanceMap map);

/// Replaces each kernel ((out,in) pair) or filter (out channel) block with its
/// mean. Biases form one block per element at kernel level and join their
/// filter's block at filter level.
ImportanceMap aggregate(const ImportanceMap& map, const ParameterStore& layout, Granularity granularity);

/// Uniform running mean over tasks: ((t-1) * running + fresh) / t.
ImportanceMap accumulate(const std::optional<ImportanceMap>& running, const ImportanceMap& fresh, std::size_t task_index);

/// clip -> normalize -> aggregate (unless granularity is parameter).
ImportanceMap postprocess_importance(ImportanceMap raw, const ParameterStore& layout, Granularity granularity);

} // namespace clseg
