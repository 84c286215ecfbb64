#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "clseg/tensor.hpp"

namespace clseg {

/// Acquisition-style perturbations of a synthetic domain. Everything except
/// structure_scale acts on intensities only.
struct ShiftSpec {
    double intensity_scale = 1.0;
    double intensity_bias = 0.0;
    double noise_std = 0.0;
    std::size_t blur_radius = 0;
    /// Grows or shrinks the central structure (class 2), in image and labels.
    double structure_scale = 1.0;
    /// Additive concentric sinusoidal modulation.
    bool ring_artifact = false;

    void validate() const;

    friend bool operator==(const ShiftSpec&, const ShiftSpec&) = default;
};

enum class Split : std::uint8_t { train = 0, eval = 1 };

struct DomainDataset {
    std::vector<Tensor> images;            // each [1,H,W], values in [0,1]
    std::vector<std::vector<int>> labels;  // each H*W, row-major
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t num_classes = 0;
    ShiftSpec shift;
    Split split = Split::train;
    std::uint64_t seed = 0;

    std::size_t size() const noexcept { return images.size(); }
    void validate() const;

    friend bool operator==(const DomainDataset&, const DomainDataset&) = default;
};

struct Scene {
    Tensor image;  // [1,H,W], unclamped clean intensities
    std::vector<int> labels;
};

/// Clean layered scene: background, outer ring (class 1), central blob
/// (class 2) and satellite blobs (classes 3..num_classes-1), with mild texture.
Scene render_scene(std::size_t height, std::size_t width, std::size_t num_classes, double structure_scale,
                   std::uint64_t image_seed);

/// Intensity shift, blur, ring artifact and additive noise, in that order.
Tensor apply_shift(const Tensor& clean, const ShiftSpec& shift, std::uint64_t image_seed, bool clamp = true);

DomainDataset generate_domain(std::size_t num_images, std::size_t height, std::size_t width, std::size_t num_classes,
                              const ShiftSpec& shift, std::uint64_t seed, Split split = Split::train);

struct DomainPair {
    DomainDataset train;
    DomainDataset eval;
};

/// Four domains: a large ring-artifact source domain followed by three small
/// shifted domains. Shift magnitudes live in suite.cpp.
std::vector<DomainPair> default_four_domain_suite(std::uint64_t seed, std::size_t image_size = 32);

/// Concatenation of several datasets with identical geometry.
DomainDataset merge_datasets(std::span<const DomainDataset> parts);

void save_dataset(const DomainDataset& ds, const std::filesystem::path& path);
DomainDataset load_dataset(const std::filesystem::path& path);

} // namespace clseg
