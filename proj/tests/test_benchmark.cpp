#include <doctest.h>

#include <cmath>
#include <fstream>
#include <functional>
#include <set>

#include "clseg/benchmark.hpp"
#include "clseg/error.hpp"
#include "support.hpp"

using namespace clseg;

namespace {

std::size_t count_label(const std::vector<int>& labels, int cls) {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), cls));
}

std::size_t image_hash(const DomainDataset& ds) {
    std::size_t h = 0;
    for (const auto& img : ds.images)
        for (double v : img.data()) h = h * 1000003u ^ std::hash<double>{}(v);
    return h;
}

} // namespace

TEST_CASE("generate_domain: deterministic per seed") {
    const ShiftSpec identity;
    const DomainDataset a = generate_domain(3, 32, 32, 4, identity, 17);
    const DomainDataset b = generate_domain(3, 32, 32, 4, identity, 17);
    CHECK(a == b);
    const DomainDataset c = generate_domain(3, 32, 32, 4, identity, 18);
    CHECK_FALSE(a.images == c.images);

    const ShiftSpec noisy{.noise_std = 0.1, .ring_artifact = true};
    CHECK(generate_domain(2, 16, 24, 3, noisy, 5) == generate_domain(2, 16, 24, 3, noisy, 5));
}

TEST_CASE("generate_domain: value ranges and class coverage") {
    const ShiftSpec strong{.intensity_scale = 2.0, .intensity_bias = -0.5, .noise_std = 0.3, .blur_radius = 2};
    for (std::size_t classes = 2; classes <= 8; ++classes) {
        const DomainDataset ds = generate_domain(4, 32, 32, classes, strong, classes);
        CHECK_NOTHROW(ds.validate());
        for (const auto& img : ds.images)
            for (double v : img.data()) {
                CHECK(v >= 0.0);
                CHECK(v <= 1.0);
            }
        for (const auto& labels : ds.labels) {
            for (int cls = 1; cls < static_cast<int>(classes); ++cls) CHECK(count_label(labels, cls) > 0);
        }
    }
}

TEST_CASE("generate_domain: invalid sizes") {
    const ShiftSpec identity;
    CHECK_THROWS_AS(generate_domain(1, 12, 12, 4, identity, 1), ConfigError);
    CHECK_THROWS_AS(generate_domain(1, 30, 32, 4, identity, 1), ConfigError);
    CHECK_THROWS_AS(generate_domain(1, 32, 32, 1, identity, 1), ConfigError);
    CHECK_THROWS_AS(generate_domain(1, 32, 32, 9, identity, 1), ConfigError);
    CHECK_THROWS_AS(generate_domain(0, 32, 32, 4, identity, 1), ConfigError);
    CHECK_THROWS_AS(generate_domain(1, 32, 32, 4, ShiftSpec{.intensity_scale = 0.0}, 1), ConfigError);
    CHECK_THROWS_AS(generate_domain(1, 32, 32, 4, ShiftSpec{.noise_std = -0.1}, 1), ConfigError);
    CHECK_THROWS_AS(generate_domain(1, 32, 32, 4, ShiftSpec{.structure_scale = -1.0}, 1), ConfigError);
}

TEST_CASE("apply_shift: noise has the requested spread before clamping") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const Scene scene = render_scene(32, 32, 4, 1.0, seed);
        const Tensor shifted = apply_shift(scene.image, ShiftSpec{.noise_std = 0.1}, seed, false);
        double sum = 0.0, sum_sq = 0.0;
        const std::size_t n = scene.image.size();
        for (std::size_t i = 0; i < n; ++i) {
            const double d = shifted[i] - scene.image[i];
            sum += d;
            sum_sq += d * d;
        }
        const double mean = sum / static_cast<double>(n);
        const double std = std::sqrt(sum_sq / static_cast<double>(n) - mean * mean);
        CHECK(std::abs(std - 0.1) <= 0.02);
    }
}

TEST_CASE("shifts: geometry follows structure_scale only") {
    const ShiftSpec base;
    const DomainDataset ref = generate_domain(4, 32, 32, 4, base, 9);
    for (const ShiftSpec& image_only :
         {ShiftSpec{.intensity_scale = 0.5, .intensity_bias = 0.2}, ShiftSpec{.noise_std = 0.2},
          ShiftSpec{.blur_radius = 2}, ShiftSpec{.ring_artifact = true}}) {
        const DomainDataset shifted = generate_domain(4, 32, 32, 4, image_only, 9);
        CHECK(shifted.labels == ref.labels);
        CHECK_FALSE(shifted.images == ref.images);
    }

    const DomainDataset bigger = generate_domain(4, 32, 32, 4, ShiftSpec{.structure_scale = 1.3}, 9);
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(count_label(bigger.labels[i], 2) > count_label(ref.labels[i], 2));
}

TEST_CASE("default suite: sizes, splits and distinct evaluation sets") {
    const auto suite = default_four_domain_suite(1);
    REQUIRE(suite.size() == 4);
    CHECK(suite[0].train.size() == 12);
    for (std::size_t d = 1; d < 4; ++d) CHECK(suite[d].train.size() == 2);
    std::set<std::size_t> hashes;
    for (const auto& pair : suite) {
        CHECK(pair.eval.size() == 4);
        CHECK(pair.train.split == Split::train);
        CHECK(pair.eval.split == Split::eval);
        CHECK(pair.train.height == 32);
        hashes.insert(image_hash(pair.eval));
        // every structure shows up in the training labels
        for (int cls = 1; cls < 4; ++cls) {
            std::size_t seen = 0;
            for (const auto& l : pair.train.labels) seen += count_label(l, cls);
            CHECK(seen > 0);
        }
    }
    CHECK(hashes.size() == 4);
    CHECK(suite[0].train.shift.ring_artifact);
    CHECK(suite[1].train.shift.structure_scale == 1.3);

    const auto again = default_four_domain_suite(1);
    for (std::size_t d = 0; d < 4; ++d) CHECK(again[d].eval == suite[d].eval);
    CHECK_FALSE(default_four_domain_suite(2)[0].train.images == suite[0].train.images);
    CHECK(default_four_domain_suite(1, 48)[2].eval.width == 48);
}

TEST_CASE("merge_datasets") {
    const auto a = generate_domain(2, 16, 16, 3, ShiftSpec{}, 1);
    const auto b = generate_domain(3, 16, 16, 3, ShiftSpec{.noise_std = 0.1}, 2);
    const std::vector<DomainDataset> parts = {a, b};
    const DomainDataset m = merge_datasets(parts);
    CHECK(m.size() == 5);
    CHECK(m.images[2] == b.images[0]);
    const std::vector<DomainDataset> clash = {a, generate_domain(1, 32, 32, 3, ShiftSpec{}, 1)};
    CHECK_THROWS_AS(merge_datasets(clash), ShapeError);
}

TEST_CASE("dataset files: round trip and rejection of corrupt input") {
    testing::TempDir dir("dataset");
    const ShiftSpec shift{.intensity_scale = 0.7, .intensity_bias = 0.1, .noise_std = 0.05, .blur_radius = 1,
                          .structure_scale = 1.2, .ring_artifact = true};
    const DomainDataset ds = generate_domain(3, 16, 20, 5, shift, 123, Split::eval);
    save_dataset(ds, dir / "d.bin");
    const DomainDataset back = load_dataset(dir / "d.bin");
    CHECK(back == ds);
    CHECK(back.shift == shift);
    CHECK(back.seed == 123);
    CHECK(back.split == Split::eval);
    for (std::size_t i = 0; i < ds.size(); ++i) CHECK(testing::same_bits(back.images[i].data(), ds.images[i].data()));

    std::string bytes;
    {
        std::ifstream in(dir / "d.bin", std::ios::binary);
        bytes.assign(std::istreambuf_iterator<char>(in), {});
    }
    auto write = [&](const std::string& name, const std::string& content) {
        std::ofstream out(dir / name, std::ios::binary);
        out << content;
        return dir / name;
    };
    std::string bad_magic = bytes;
    bad_magic[0] = 'X';
    CHECK_THROWS_AS(load_dataset(write("magic.bin", bad_magic)), FormatError);
    std::string bad_version = bytes;
    bad_version[8] = 9;
    CHECK_THROWS_AS(load_dataset(write("version.bin", bad_version)), FormatError);
    CHECK_THROWS_AS(load_dataset(write("short.bin", bytes.substr(0, bytes.size() - 3))), FormatError);
    CHECK_THROWS_AS(load_dataset(write("long.bin", bytes + "x")), FormatError);
    CHECK_THROWS_AS(load_dataset(dir / "absent.bin"), Error);
}
