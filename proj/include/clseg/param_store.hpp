#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "clseg/tensor.hpp"

namespace clseg {

/// One flat array per parameter entry, aligned with ParameterStore order.
using PerParameter = std::vector<std::vector<double>>;

enum class ParamRole : std::uint8_t { conv_weight = 0, bias = 1 };

/// Layer-structural metadata. Conv weights fill the four kernel fields,
/// biases fill bias_len.
struct ParamStructure {
    std::size_t out_channels = 0;
    std::size_t in_channels = 0;
    std::size_t kernel_h = 0;
    std::size_t kernel_w = 0;
    std::size_t bias_len = 0;

    std::size_t element_count() const;
};

struct ParamEntry {
    std::string id;
    std::string layer;
    ParamRole role = ParamRole::conv_weight;
    Tensor tensor;

    ParamStructure structure() const;
};

/// Ordered registry of named network parameters. Iteration order is
/// insertion order and ids are unique.
class ParameterStore {
public:
    ParamEntry& add(std::string id, std::string layer, ParamRole role, Tensor tensor);

    std::span<ParamEntry> entries() noexcept { return entries_; }
    std::span<const ParamEntry> entries() const noexcept { return entries_; }
    std::size_t size() const noexcept { return entries_.size(); }
    std::size_t total_parameters() const;

    const ParamEntry* find(const std::string& id) const;
    std::size_t index_of(const std::string& id) const;
    std::vector<std::string> ids() const;

    void zero_grad();
    void set_requires_grad(bool on);

    PerParameter values() const;
    /// Gradient buffers; entries without a gradient yield zeros.
    PerParameter gradients() const;

    /// Copy of layout and values without gradient buffers.
    ParameterStore snapshot() const;

    friend bool operator==(const ParameterStore& a, const ParameterStore& b);

private:
    std::vector<ParamEntry> entries_;
};

/// Throws ShapeError listing missing and extra ids when `actual` differs
/// from `expected` as a set.
void require_same_ids(const std::vector<std::string>& expected, const std::vector<std::string>& actual,
                      const std::string& context);

/// Same ids in the same order with the same element counts.
void require_aligned(const ParameterStore& store, const PerParameter& arrays, const std::string& context);

} // namespace clseg
