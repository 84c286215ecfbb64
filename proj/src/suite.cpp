// Default four-domain benchmark. Shift magnitudes are tuned so that plain
// fine-tuning measurably forgets the earlier domains; adjust them here only.

#include "clseg/benchmark.hpp"

namespace clseg {
namespace {

struct DomainRecipe {
    std::size_t train_images;
    std::size_t eval_images;
    ShiftSpec shift;
};

const DomainRecipe kSuite[4] = {
    // source domain: clean contrast with ringing
    {12, 4, {.ring_artifact = true}},
    // intensity shift with enlarged central structure
    {2, 4, {.intensity_scale = 0.6, .intensity_bias = 0.3, .structure_scale = 1.3}},
    // noisy acquisition
    {2, 4, {.intensity_bias = 0.05, .noise_std = 0.12}},
    // blurred, contrast-stretched acquisition
    {2, 4, {.intensity_scale = 1.5, .intensity_bias = -0.2, .blur_radius = 1}},
};

constexpr std::size_t kNumClasses = 4;

} // namespace

std::vector<DomainPair> default_four_domain_suite(std::uint64_t seed, std::size_t image_size) {
    std::vector<DomainPair> suite;
    for (std::uint64_t d = 0; d < 4; ++d) {
        const auto& recipe = kSuite[d];
        const std::uint64_t base = seed * 1000003ULL + d * 7919ULL;
        suite.push_back({generate_domain(recipe.train_images, image_size, image_size, kNumClasses, recipe.shift,
                                         base + 1, Split::train),
                         generate_domain(recipe.eval_images, image_size, image_size, kNumClasses, recipe.shift,
                                         base + 2, Split::eval)});
    }
    return suite;
}

} // namespace clseg
