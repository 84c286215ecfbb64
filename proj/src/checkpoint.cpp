#include "clseg/checkpoint.hpp"

#include <algorithm>

#include "clseg/binary_io.hpp"
#include "clseg/error.hpp"

namespace clseg {
namespace {

constexpr char kMagic[8] = {'C', 'L', 'S', 'E', 'G', 'C', 'K', '\0'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint8_t kDtypeF64 = 1;

std::string encode_importance(const ImportanceMap& map) {
    io::Writer w;
    w.u8(static_cast<std::uint8_t>(map.granularity));
    w.u8(map.normalized ? 1 : 0);
    w.u64(map.sample_count);
    w.u64(map.task_count);
    w.u64(map.entries.size());
    for (const auto& e : map.entries) {
        w.str(e.id);
        w.u64(e.values.size());
        w.f64_array(e.values);
    }
    return w.take();
}

ImportanceMap decode_importance(io::Reader& r) {
    ImportanceMap map;
    const auto g = r.u8();
    if (g > 2) throw FormatError("checkpoint: invalid importance granularity tag");
    map.granularity = static_cast<Granularity>(g);
    map.normalized = r.u8() != 0;
    map.sample_count = r.u64();
    map.task_count = r.u64();
    const auto n = r.u64();
    for (std::uint64_t i = 0; i < n; ++i) {
        ImportanceEntry e;
        e.id = r.str();
        e.values = r.f64_array(r.u64());
        map.entries.push_back(std::move(e));
    }
    return map;
}

std::string encode_freeze(const FreezeMask& mask) {
    io::Writer w;
    w.f64(mask.frozen_fraction);
    w.u64(mask.entries.size());
    for (const auto& e : mask.entries) {
        w.str(e.id);
        w.u64(e.frozen.size());
        std::vector<std::uint8_t> packed((e.frozen.size() + 7) / 8, 0);
        for (std::size_t i = 0; i < e.frozen.size(); ++i) {
            if (e.frozen[i]) packed[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
        }
        w.bytes(packed.data(), packed.size());
    }
    return w.take();
}

FreezeMask decode_freeze(io::Reader& r) {
    FreezeMask mask;
    mask.frozen_fraction = r.f64();
    const auto n = r.u64();
    for (std::uint64_t i = 0; i < n; ++i) {
        FreezeEntry e;
        e.id = r.str();
        const auto len = r.u64();
        if ((len + 7) / 8 > r.remaining()) throw FormatError("checkpoint: truncated freeze mask");
        std::vector<std::uint8_t> packed((len + 7) / 8);
        r.bytes(packed.data(), packed.size());
        e.frozen.resize(len);
        for (std::size_t k = 0; k < len; ++k) e.frozen[k] = (packed[k / 8] >> (k % 8)) & 1u;
        mask.entries.push_back(std::move(e));
    }
    return mask;
}

std::string encode_optimizer(const OptimizerState& s) {
    io::Writer w;
    w.u64(s.steps);
    w.u64(s.velocity.size());
    for (const auto& v : s.velocity) {
        w.u64(v.size());
        w.f64_array(v);
    }
    return w.take();
}

OptimizerState decode_optimizer(io::Reader& r) {
    OptimizerState s;
    s.steps = r.u64();
    const auto n = r.u64();
    for (std::uint64_t i = 0; i < n; ++i) s.velocity.push_back(r.f64_array(r.u64()));
    return s;
}

std::string encode_progress(const SequenceProgress& p) {
    io::Writer w;
    w.u64(p.completed_domains);
    w.u64(p.results.domains());
    w.f64_array(p.results.values());
    return w.take();
}

SequenceProgress decode_progress(io::Reader& r) {
    SequenceProgress p;
    p.completed_domains = r.u64();
    const auto d = r.u64();
    if (d > 1024) throw FormatError("checkpoint: implausible domain count");
    p.results = TrainTestMatrix(d, r.f64_array(d * d));
    return p;
}

void write_section(io::Writer& w, const char* tag, const std::string& payload) {
    w.str(tag);
    w.u64(payload.size());
    w.bytes(payload.data(), payload.size());
}

} // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    io::Writer w;
    w.bytes(kMagic, sizeof kMagic);
    w.u32(kVersion);
    w.u64(ckpt.params.size());
    for (const auto& e : ckpt.params.entries()) {
        w.str(e.id);
        w.str(e.layer);
        w.u8(static_cast<std::uint8_t>(e.role));
        w.u8(kDtypeF64);
        w.u32(static_cast<std::uint32_t>(e.tensor.rank()));
        for (auto d : e.tensor.shape()) w.u64(d);
        w.f64_array(e.tensor.data());
    }
    if (ckpt.importance) write_section(w, "IMPORTANCE", encode_importance(*ckpt.importance));
    if (ckpt.freeze) write_section(w, "FREEZE", encode_freeze(*ckpt.freeze));
    if (ckpt.optimizer) write_section(w, "OPTSTATE", encode_optimizer(*ckpt.optimizer));
    if (ckpt.progress) write_section(w, "PROGRESS", encode_progress(*ckpt.progress));
    w.str("END");
    io::write_file(path, w.buffer());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    const std::string bytes = io::read_file(path);
    io::Reader r(bytes);
    char magic[8];
    r.bytes(magic, sizeof magic);
    if (!std::equal(std::begin(magic), std::end(magic), std::begin(kMagic))) {
        throw FormatError("checkpoint: bad magic bytes in " + path.string());
    }
    const auto version = r.u32();
    if (version != kVersion) {
        throw FormatError("checkpoint: version " + std::to_string(version) + " not supported (expected " +
                          std::to_string(kVersion) + ")");
    }

    Checkpoint ckpt;
    const auto count = r.u64();
    for (std::uint64_t i = 0; i < count; ++i) {
        std::string id = r.str();
        std::string layer = r.str();
        const auto role = r.u8();
        if (role > 1) throw FormatError("checkpoint: invalid role tag for '" + id + "'");
        if (r.u8() != kDtypeF64) throw FormatError("checkpoint: unsupported dtype for '" + id + "'");
        const auto rank = r.u32();
        if (rank == 0 || rank > 8) throw FormatError("checkpoint: invalid rank for '" + id + "'");
        Shape shape(rank);
        for (auto& d : shape) d = r.u64();
        std::size_t n = 1;
        for (auto d : shape) {
            if (d == 0 || d > r.remaining()) throw FormatError("checkpoint: invalid shape for '" + id + "'");
            n *= d;
        }
        Tensor t(shape, r.f64_array(n));
        ckpt.params.add(std::move(id), std::move(layer), static_cast<ParamRole>(role), std::move(t));
    }

    for (;;) {
        const std::string tag = r.str();
        if (tag == "END") break;
        const auto len = r.u64();
        if (len > r.remaining()) throw FormatError("checkpoint: section " + tag + " overruns file");
        std::string payload(len, '\0');
        r.bytes(payload.data(), len);
        io::Reader section(payload);
        if (tag == "IMPORTANCE") {
            ckpt.importance = decode_importance(section);
        } else if (tag == "FREEZE") {
            ckpt.freeze = decode_freeze(section);
        } else if (tag == "OPTSTATE") {
            ckpt.optimizer = decode_optimizer(section);
        } else if (tag == "PROGRESS") {
            ckpt.progress = decode_progress(section);
        } else {
            throw FormatError("checkpoint: unknown section '" + tag + "'");
        }
        if (!section.at_end()) throw FormatError("checkpoint: trailing bytes in section " + tag);
    }
    if (!r.at_end()) throw FormatError("checkpoint: trailing bytes after END");
    return ckpt;
}

void restore_parameters(SegNet& net, const ParameterStore& saved) {
    auto& params = net.params();
    require_same_ids(params.ids(), saved.ids(), "restore_parameters");
    for (auto& e : params.entries()) {
        const auto* s = saved.find(e.id);
        if (s->tensor.shape() != e.tensor.shape()) {
            throw ShapeError("restore_parameters: '" + e.id + "' has shape " + shape_string(s->tensor.shape()) +
                             " in checkpoint, network expects " + shape_string(e.tensor.shape()));
        }
        std::copy(s->tensor.data().begin(), s->tensor.data().end(), e.tensor.data().begin());
    }
}

} // namespace clseg
