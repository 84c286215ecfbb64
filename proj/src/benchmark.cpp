#include "clseg/benchmark.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "clseg/binary_io.hpp"
#include "clseg/error.hpp"
#include "clseg/rng.hpp"

namespace clseg {

void ShiftSpec::validate() const {
    if (!(intensity_scale > 0.0)) throw ConfigError("shift.intensity_scale", "must be > 0");
    if (!std::isfinite(intensity_bias)) throw ConfigError("shift.intensity_bias", "must be finite");
    if (!(noise_std >= 0.0)) throw ConfigError("shift.noise_std", "must be >= 0");
    if (!(structure_scale > 0.0)) throw ConfigError("shift.structure_scale", "must be > 0");
}

void DomainDataset::validate() const {
    if (images.size() != labels.size()) throw FormatError("dataset: images and labels are not aligned");
    for (std::size_t i = 0; i < images.size(); ++i) {
        if (images[i].shape() != Shape{1, height, width}) throw FormatError("dataset: image shape mismatch");
        if (labels[i].size() != height * width) throw FormatError("dataset: label map size mismatch");
        for (double v : images[i].data()) {
            if (!(v >= 0.0 && v <= 1.0)) throw FormatError("dataset: image value outside [0,1]");
        }
        for (int l : labels[i]) {
            if (l < 0 || static_cast<std::size_t>(l) >= num_classes) throw FormatError("dataset: invalid label");
        }
    }
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

enum Stream : std::uint64_t { geometry = 1, texture = 2, noise = 3 };

struct Ellipse {
    double cx, cy, rx, ry;
    bool contains(double u, double v) const {
        const double a = (u - cx) / rx, b = (v - cy) / ry;
        return a * a + b * b <= 1.0;
    }
};

double class_intensity(std::size_t cls) {
    switch (cls) {
        case 1: return 0.90;
        case 2: return 0.20;
        case 3: return 0.72;
        default: return 0.55 + 0.04 * static_cast<double>(cls - 4);
    }
}

constexpr double kOutsideIntensity = 0.05;
constexpr double kInteriorIntensity = 0.45;
constexpr double kTextureStd = 0.03;

void box_blur(std::vector<double>& img, std::size_t h, std::size_t w, std::size_t radius) {
    if (radius == 0) return;
    const long r = static_cast<long>(radius);
    std::vector<double> tmp(img.size());
    auto clampi = [](long v, long hi) { return std::clamp(v, 0L, hi - 1); };
    const long H = static_cast<long>(h), W = static_cast<long>(w);
    for (long y = 0; y < H; ++y) {
        for (long x = 0; x < W; ++x) {
            double acc = 0.0;
            for (long k = -r; k <= r; ++k) acc += img[static_cast<std::size_t>(y * W + clampi(x + k, W))];
            tmp[static_cast<std::size_t>(y * W + x)] = acc / static_cast<double>(2 * r + 1);
        }
    }
    for (long y = 0; y < H; ++y) {
        for (long x = 0; x < W; ++x) {
            double acc = 0.0;
            for (long k = -r; k <= r; ++k) acc += tmp[static_cast<std::size_t>(clampi(y + k, H) * W + x)];
            img[static_cast<std::size_t>(y * W + x)] = acc / static_cast<double>(2 * r + 1);
        }
    }
}

} // namespace

Scene render_scene(std::size_t height, std::size_t width, std::size_t num_classes, double structure_scale,
                   std::uint64_t image_seed) {
    auto geo = make_rng(image_seed, {Stream::geometry});
    auto tex = make_rng(image_seed, {Stream::texture});
    std::uniform_real_distribution<double> U(0.0, 1.0);
    auto uni = [&](double lo, double hi) { return lo + (hi - lo) * U(geo); };

    const double cx = uni(-0.05, 0.05), cy = uni(-0.05, 0.05);
    const Ellipse outer{cx, cy, uni(0.36, 0.44), uni(0.36, 0.44)};
    const double thickness = uni(0.07, 0.10);
    const Ellipse inner{cx, cy, outer.rx - thickness, outer.ry - thickness};

    const Ellipse central{cx + uni(-0.04, 0.04), cy + uni(-0.03, 0.03), uni(0.11, 0.14) * structure_scale,
                          uni(0.14, 0.17) * structure_scale};
    std::vector<Ellipse> satellites;
    const std::size_t n_sat = num_classes > 3 ? num_classes - 3 : 0;
    const double phase = uni(0.0, 2.0 * std::numbers::pi);
    for (std::size_t k = 0; k < n_sat; ++k) {
        const double angle = phase + 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n_sat);
        const double dist = uni(0.19, 0.21);
        const double rad = uni(0.09, 0.11);
        satellites.push_back({cx + dist * std::cos(angle), cy + dist * std::sin(angle), rad, rad});
    }

    Scene scene{Tensor({1, height, width}), std::vector<int>(height * width, 0)};
    std::normal_distribution<double> texture(0.0, kTextureStd);
    for (std::size_t y = 0; y < height; ++y) {
        for (std::size_t x = 0; x < width; ++x) {
            const double u = (static_cast<double>(x) + 0.5) / static_cast<double>(width) - 0.5;
            const double v = (static_cast<double>(y) + 0.5) / static_cast<double>(height) - 0.5;
            std::size_t cls = 0;
            double intensity = kOutsideIntensity;
            if (outer.contains(u, v)) {
                if (!inner.contains(u, v)) {
                    cls = 1;
                    intensity = class_intensity(1);
                } else {
                    intensity = kInteriorIntensity;
                    for (std::size_t k = 0; k < satellites.size(); ++k) {
                        if (satellites[k].contains(u, v)) {
                            cls = 3 + k;
                            intensity = class_intensity(cls);
                        }
                    }
                    if (num_classes > 2 && central.contains(u, v)) {
                        cls = 2;
                        intensity = class_intensity(2);
                    }
                }
            }
            scene.labels[y * width + x] = static_cast<int>(cls);
            scene.image[y * width + x] = intensity + texture(tex);
        }
    }
    return scene;
}

Tensor apply_shift(const Tensor& clean, const ShiftSpec& shift, std::uint64_t image_seed, bool clamp) {
    shift.validate();
    const std::size_t h = clean.dim(1), w = clean.dim(2);
    std::vector<double> img(clean.data().begin(), clean.data().end());
    for (double& v : img) v = shift.intensity_scale * v + shift.intensity_bias;
    box_blur(img, h, w, shift.blur_radius);
    if (shift.ring_artifact) {
        constexpr double amplitude = 0.06, period_px = 5.0;
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < w; ++x) {
                const double dy = static_cast<double>(y) + 0.5 - static_cast<double>(h) / 2.0;
                const double dx = static_cast<double>(x) + 0.5 - static_cast<double>(w) / 2.0;
                img[y * w + x] += amplitude * std::sin(2.0 * std::numbers::pi * std::hypot(dx, dy) / period_px);
            }
        }
    }
    if (shift.noise_std > 0.0) {
        auto rng = make_rng(image_seed, {Stream::noise});
        std::normal_distribution<double> noise(0.0, shift.noise_std);
        for (double& v : img) v += noise(rng);
    }
    if (clamp) {
        for (double& v : img) v = std::clamp(v, 0.0, 1.0);
    }
    return Tensor(clean.shape(), std::move(img));
}

DomainDataset generate_domain(std::size_t num_images, std::size_t height, std::size_t width, std::size_t num_classes,
                              const ShiftSpec& shift, std::uint64_t seed, Split split) {
    if (height < 16 || width < 16 || height % 4 != 0 || width % 4 != 0) {
        throw ConfigError("benchmark.image_size", "H and W must be >= 16 and divisible by 4");
    }
    if (num_classes < 2 || num_classes > 8) throw ConfigError("benchmark.num_classes", "must be in [2,8]");
    if (num_images < 1) throw ConfigError("benchmark.num_images", "must be >= 1");
    shift.validate();

    DomainDataset ds;
    ds.height = height;
    ds.width = width;
    ds.num_classes = num_classes;
    ds.shift = shift;
    ds.split = split;
    ds.seed = seed;
    for (std::size_t i = 0; i < num_images; ++i) {
        const std::uint64_t image_seed = splitmix64(seed ^ splitmix64(i + 1));
        Scene scene = render_scene(height, width, num_classes, shift.structure_scale, image_seed);
        ds.images.push_back(apply_shift(scene.image, shift, image_seed));
        ds.labels.push_back(std::move(scene.labels));
    }
    return ds;
}

DomainDataset merge_datasets(std::span<const DomainDataset> parts) {
    if (parts.empty()) throw Error("merge_datasets: nothing to merge");
    DomainDataset out = parts.front();
    for (std::size_t k = 1; k < parts.size(); ++k) {
        const auto& p = parts[k];
        if (p.height != out.height || p.width != out.width || p.num_classes != out.num_classes) {
            throw ShapeError("merge_datasets: geometry mismatch");
        }
        out.images.insert(out.images.end(), p.images.begin(), p.images.end());
        out.labels.insert(out.labels.end(), p.labels.begin(), p.labels.end());
    }
    return out;
}

namespace {

constexpr char kDatasetMagic[8] = {'C', 'L', 'S', 'E', 'G', 'D', 'S', '\0'};
constexpr std::uint32_t kDatasetVersion = 1;

} // namespace

void save_dataset(const DomainDataset& ds, const std::filesystem::path& path) {
    ds.validate();
    io::Writer w;
    w.bytes(kDatasetMagic, sizeof kDatasetMagic);
    w.u32(kDatasetVersion);
    w.u64(ds.height);
    w.u64(ds.width);
    w.u64(ds.num_classes);
    w.u8(static_cast<std::uint8_t>(ds.split));
    w.u64(ds.seed);
    w.f64(ds.shift.intensity_scale);
    w.f64(ds.shift.intensity_bias);
    w.f64(ds.shift.noise_std);
    w.u64(ds.shift.blur_radius);
    w.f64(ds.shift.structure_scale);
    w.u8(ds.shift.ring_artifact ? 1 : 0);
    w.u64(ds.images.size());
    for (std::size_t i = 0; i < ds.images.size(); ++i) {
        w.f64_array(ds.images[i].data());
        for (int l : ds.labels[i]) w.u8(static_cast<std::uint8_t>(l));
    }
    io::write_file(path, w.buffer());
}

DomainDataset load_dataset(const std::filesystem::path& path) {
    const std::string bytes = io::read_file(path);
    io::Reader r(bytes);
    char magic[8];
    r.bytes(magic, sizeof magic);
    if (!std::equal(std::begin(magic), std::end(magic), std::begin(kDatasetMagic))) {
        throw FormatError("dataset: bad magic bytes in " + path.string());
    }
    const auto version = r.u32();
    if (version != kDatasetVersion) {
        throw FormatError("dataset: unsupported version " + std::to_string(version) + " in " + path.string());
    }
    DomainDataset ds;
    ds.height = r.u64();
    ds.width = r.u64();
    ds.num_classes = r.u64();
    const auto split = r.u8();
    if (split > 1) throw FormatError("dataset: invalid split tag");
    ds.split = static_cast<Split>(split);
    ds.seed = r.u64();
    ds.shift.intensity_scale = r.f64();
    ds.shift.intensity_bias = r.f64();
    ds.shift.noise_std = r.f64();
    ds.shift.blur_radius = r.u64();
    ds.shift.structure_scale = r.f64();
    ds.shift.ring_artifact = r.u8() != 0;
    if (ds.height == 0 || ds.width == 0 || ds.height > 4096 || ds.width > 4096) {
        throw FormatError("dataset: implausible image size");
    }
    const auto count = r.u64();
    const std::size_t pixels = ds.height * ds.width;
    if (count > r.remaining() / (pixels * (sizeof(double) + 1))) throw FormatError("dataset: truncated image data");
    for (std::uint64_t i = 0; i < count; ++i) {
        ds.images.emplace_back(Shape{1, ds.height, ds.width}, r.f64_array(pixels));
        std::vector<int> labels(pixels);
        for (auto& l : labels) l = r.u8();
        ds.labels.push_back(std::move(labels));
    }
    if (!r.at_end()) throw FormatError("dataset: trailing bytes in " + path.string());
    ds.validate();
    return ds;
}

} // namespace clseg
