#include "clseg/param_store.hpp"

#include <algorithm>
#include <set>

#include "clseg/error.hpp"

namespace clseg {

std::size_t ParamStructure::element_count() const {
    if (bias_len != 0) return bias_len;
    return out_channels * in_channels * kernel_h * kernel_w;
}

ParamStructure ParamEntry::structure() const {
    ParamStructure s;
    if (role == ParamRole::bias) {
        s.bias_len = tensor.size();
    } else {
        s.out_channels = tensor.dim(0);
        s.in_channels = tensor.dim(1);
        s.kernel_h = tensor.dim(2);
        s.kernel_w = tensor.dim(3);
    }
    return s;
}

ParamEntry& ParameterStore::add(std::string id, std::string layer, ParamRole role, Tensor tensor) {
    if (find(id) != nullptr) throw Error("parameter store: duplicate id '" + id + "'");
    if (role == ParamRole::conv_weight && tensor.rank() != 4) {
        throw ShapeError("parameter store: conv weight '" + id + "' must be rank 4, got " +
                         shape_string(tensor.shape()));
    }
    if (role == ParamRole::bias && tensor.rank() != 1) {
        throw ShapeError("parameter store: bias '" + id + "' must be rank 1, got " + shape_string(tensor.shape()));
    }
    entries_.push_back(ParamEntry{std::move(id), std::move(layer), role, std::move(tensor)});
    return entries_.back();
}

std::size_t ParameterStore::total_parameters() const {
    std::size_t total = 0;
    for (const auto& e : entries_) total += e.tensor.size();
    return total;
}

const ParamEntry* ParameterStore::find(const std::string& id) const {
    auto it = std::find_if(entries_.begin(), entries_.end(), [&](const ParamEntry& e) { return e.id == id; });
    return it == entries_.end() ? nullptr : &*it;
}

std::size_t ParameterStore::index_of(const std::string& id) const {
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        if (entries_[i].id == id) return i;
    }
    throw Error("parameter store: unknown id '" + id + "'");
}

std::vector<std::string> ParameterStore::ids() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back(e.id);
    return out;
}

void ParameterStore::zero_grad() {
    for (auto& e : entries_) {
        if (e.tensor.requires_grad()) e.tensor.zero_grad();
    }
}

void ParameterStore::set_requires_grad(bool on) {
    for (auto& e : entries_) e.tensor.set_requires_grad(on);
}

PerParameter ParameterStore::values() const {
    PerParameter out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.emplace_back(e.tensor.data().begin(), e.tensor.data().end());
    return out;
}

PerParameter ParameterStore::gradients() const {
    PerParameter out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) {
        if (e.tensor.has_grad()) {
            out.emplace_back(e.tensor.grad().begin(), e.tensor.grad().end());
        } else {
            out.emplace_back(e.tensor.size(), 0.0);
        }
    }
    return out;
}

ParameterStore ParameterStore::snapshot() const {
    ParameterStore copy;
    for (const auto& e : entries_) {
        Tensor t(e.tensor.shape(), std::vector<double>(e.tensor.data().begin(), e.tensor.data().end()));
        copy.entries_.push_back(ParamEntry{e.id, e.layer, e.role, std::move(t)});
    }
    return copy;
}

bool operator==(const ParameterStore& a, const ParameterStore& b) {
    if (a.entries_.size() != b.entries_.size()) return false;
    for (std::size_t i = 0; i < a.entries_.size(); ++i) {
        const auto& x = a.entries_[i];
        const auto& y = b.entries_[i];
        if (x.id != y.id || x.layer != y.layer || x.role != y.role || !(x.tensor == y.tensor)) return false;
    }
    return true;
}

void require_same_ids(const std::vector<std::string>& expected, const std::vector<std::string>& actual,
                      const std::string& context) {
    const std::set<std::string> want(expected.begin(), expected.end());
    const std::set<std::string> got(actual.begin(), actual.end());
    if (want == got && expected.size() == actual.size()) return;
    std::string missing, extra;
    for (const auto& id : want) {
        if (!got.contains(id)) missing += (missing.empty() ? "" : ",") + id;
    }
    for (const auto& id : got) {
        if (!want.contains(id)) extra += (extra.empty() ? "" : ",") + id;
    }
    throw ShapeError(context + ": parameter id mismatch; missing=[" + missing + "] extra=[" + extra + "]");
}

void require_aligned(const ParameterStore& store, const PerParameter& arrays, const std::string& context) {
    if (arrays.size() != store.size()) {
        throw ShapeError(context + ": expected " + std::to_string(store.size()) + " parameter arrays, got " +
                         std::to_string(arrays.size()));
    }
    for (std::size_t i = 0; i < arrays.size(); ++i) {
        if (arrays[i].size() != store.entries()[i].tensor.size()) {
            throw ShapeError(context + ": array for '" + store.entries()[i].id + "' has " +
                             std::to_string(arrays[i].size()) + " values, expected " +
                             std::to_string(store.entries()[i].tensor.size()));
        }
    }
}

} // namespace clseg
