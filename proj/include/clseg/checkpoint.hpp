#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>

#include "clseg/importance.hpp"
#include "clseg/metrics.hpp"
#include "clseg/optimizer.hpp"
#include "clseg/param_store.hpp"
#include "clseg/regularization.hpp"
#include "clseg/segnet.hpp"

namespace clseg {

/// Where a sequence run stood when the checkpoint was written.
struct SequenceProgress {
    std::uint64_t completed_domains = 0;
    TrainTestMatrix results;

    friend bool operator==(const SequenceProgress&, const SequenceProgress&) = default;
};

struct Checkpoint {
    ParameterStore params;
    std::optional<ImportanceMap> importance;
    std::optional<FreezeMask> freeze;
    std::optional<OptimizerState> optimizer;
    std::optional<SequenceProgress> progress;
};

/// Layout:
///   "CLSEGCK\0" | u32 version | u64 entry count
///   per entry:  str id | str layer | u8 role | u8 dtype (1 = f64) | u32 rank | u64 dims[rank] | f64 data
///   sections:   str tag | u64 payload bytes | payload, for tags IMPORTANCE, FREEZE, OPTSTATE, PROGRESS
///   terminator: str "END"
/// Strings are u32-length-prefixed; all integers and floats little-endian.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Copies checkpoint values into `net`. Throws ShapeError listing missing and
/// extra ids when the parameter sets differ, or naming the first shape clash.
void restore_parameters(SegNet& net, const ParameterStore& saved);

} // namespace clseg
