#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "oracles.hpp"
#include "support.hpp"
#include "suplid/superpixel.hpp"

using namespace suplid;
using namespace suplid::slic;

namespace {

std::vector<std::int32_t> labels_of(const SuperpixelPartition& p) {
    auto s = p.labels.data<std::int32_t>();
    return {s.begin(), s.end()};
}

void check_partition(const SuperpixelPartition& p) {
    const auto lab = labels_of(p);
    const std::size_t h = p.height(), w = p.width();
    REQUIRE(p.pixel_counts.size() == p.num_superpixels);
    REQUIRE(p.centroids.size() == p.num_superpixels);
    std::vector<std::size_t> counts(p.num_superpixels, 0);
    for (auto l : lab) {
        REQUIRE(l >= 0);
        REQUIRE(static_cast<std::size_t>(l) < p.num_superpixels);
        ++counts[static_cast<std::size_t>(l)];
    }
    CHECK(counts == p.pixel_counts);
    std::size_t total = 0;
    for (auto c : counts) {
        CHECK(c >= 1);
        total += c;
    }
    CHECK(total == h * w);
    CHECK(oracle::labels_four_connected(lab, h, w));
}

Tensor label_tensor(std::size_t h, std::size_t w, std::vector<std::int32_t> v) { return Tensor(Shape{h, w}, std::move(v)); }

}  // namespace

TEST_CASE("Lab of white and black") {
    const Tensor img(Shape{1, 2, 3}, std::vector<std::uint8_t>{255, 255, 255, 0, 0, 0});
    const Tensor lab_t = rgb_to_lab(img);
    const auto lab = lab_t.data<float>();
    CHECK(lab[0] == doctest::Approx(100.0).epsilon(1e-3));
    CHECK(std::abs(lab[1]) < 0.5);
    CHECK(std::abs(lab[2]) < 0.5);
    CHECK(lab[3] == doctest::Approx(0.0));
    CHECK(lab[4] == doctest::Approx(0.0));
    CHECK(lab[5] == doctest::Approx(0.0));
}

TEST_CASE("Lab of pure red") {
    const Tensor img(Shape{1, 1, 3}, std::vector<std::uint8_t>{255, 0, 0});
    const Tensor lab_t = rgb_to_lab(img);
    const auto lab = lab_t.data<float>();
    CHECK(std::abs(lab[0] - 53.24) < 0.1);
    CHECK(std::abs(lab[1] - 80.09) < 0.1);
    CHECK(std::abs(lab[2] - 67.20) < 0.1);
}

TEST_CASE("Lab agrees with the textbook formulas on random colors") {
    std::mt19937_64 rng(1);
    const Tensor img = testing::random_image(16, 16, rng);
    const auto px = img.data<std::uint8_t>();
    const Tensor lab_t = rgb_to_lab(img);
    const auto lab = lab_t.data<float>();
    for (std::size_t i = 0; i < 256; ++i) {
        double L, a, b;
        oracle::srgb_to_lab(px[3 * i], px[3 * i + 1], px[3 * i + 2], L, a, b);
        CHECK(std::abs(lab[3 * i] - L) < 0.05);
        CHECK(std::abs(lab[3 * i + 1] - a) < 0.05);
        CHECK(std::abs(lab[3 * i + 2] - b) < 0.05);
        CHECK(lab[3 * i] >= -1e-4);
        CHECK(lab[3 * i] <= 100.0 + 1e-3);
    }
}

TEST_CASE("requested count and spacing for 100x100 at 200 pixels each") {
    CHECK(requested_superpixels(100, 100, 200) == 50);
    CHECK(std::sqrt(100.0 * 100.0 / 50.0) == doctest::Approx(14.142).epsilon(1e-4));
    CHECK(requested_superpixels(10, 10, 25) == 4);
    CHECK(requested_superpixels(7, 3, 4) == 5);
}

TEST_CASE("uniform 10x10 image splits into grid quadrants") {
    const Tensor img = testing::solid_image(10, 10, 90, 120, 30);
    SlicParams p;
    p.pixels_per_superpixel = 25;
    const auto part = slic_segment(img, p);
    REQUIRE(part.num_superpixels == 4);
    for (auto c : part.pixel_counts) CHECK(c == 25);
    const auto lab = labels_of(part);
    for (std::size_t y = 0; y < 10; ++y) {
        for (std::size_t x = 0; x < 10; ++x) {
            const auto quadrant = lab[(y / 5) * 50 + (x / 5) * 5];
            CHECK(lab[y * 10 + x] == quadrant);
        }
    }
    std::set<std::int32_t> distinct(lab.begin(), lab.end());
    CHECK(distinct.size() == 4);
}

TEST_CASE("random images give complete, dense, connected partitions") {
    std::mt19937_64 rng(2);
    for (int t = 0; t < 8; ++t) {
        const std::size_t h = 20 + rng() % 50, w = 20 + rng() % 50;
        const Tensor img = testing::random_image(h, w, rng);
        SlicParams p;
        p.pixels_per_superpixel = 40 + rng() % 160;
        const auto part = slic_segment(img, p);
        check_partition(part);
        const double n = static_cast<double>(requested_superpixels(h, w, p.pixels_per_superpixel));
        CHECK(static_cast<double>(part.num_superpixels) >= 0.5 * n);
        CHECK(static_cast<double>(part.num_superpixels) <= 1.5 * n);
    }
}

TEST_CASE("segmentation is deterministic and schedule-independent") {
    std::mt19937_64 rng(3);
    const Tensor img = testing::random_image(64, 80, rng);
    SlicParams p;
    p.pixels_per_superpixel = 50;
    Tensor a, b, c;
    {
        testing::ThreadCount t(1);
        a = slic_segment(img, p).labels;
        c = slic_segment(img, p).labels;
    }
    {
        testing::ThreadCount t(8);
        b = slic_segment(img, p).labels;
    }
    CHECK(bitwise_equal(a, b));
    CHECK(bitwise_equal(a, c));
}

TEST_CASE("no superpixel straddles a strong color edge") {
    // Left half dark, right half bright: Lab L differs by far more than 50.
    const std::size_t h = 60, w = 80;
    std::vector<std::uint8_t> px(h * w * 3);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            const std::uint8_t v = x < w / 2 ? 20 : 235;
            for (int c = 0; c < 3; ++c) px[(y * w + x) * 3 + c] = v;
        }
    }
    const Tensor img(Shape{h, w, 3}, px);
    double l_dark, l_bright, a, b;
    oracle::srgb_to_lab(20, 20, 20, l_dark, a, b);
    oracle::srgb_to_lab(235, 235, 235, l_bright, a, b);
    REQUIRE(l_bright - l_dark >= 50.0);

    for (std::size_t pps : {50, 100, 200, 400}) {
        SlicParams p;
        p.pixels_per_superpixel = pps;
        const auto part = slic_segment(img, p);
        check_partition(part);
        const auto lab = labels_of(part);
        std::vector<int> side(part.num_superpixels, -1);
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < w; ++x) {
                const int s = x < w / 2 ? 0 : 1;
                auto& seen = side[static_cast<std::size_t>(lab[y * w + x])];
                if (seen == -1) seen = s;
                CHECK(seen == s);
            }
        }
    }
}

TEST_CASE("images smaller than one superpixel are rejected") {
    const Tensor img = testing::solid_image(5, 5, 0, 0, 0);
    SlicParams p;
    p.pixels_per_superpixel = 200;
    CHECK_THROWS_AS(slic_segment(img, p), ValidationError);
}

TEST_CASE("params validation") {
    SlicParams p;
    p.pixels_per_superpixel = 0;
    CHECK_THROWS_AS(p.validate(), ValidationError);
    p = {};
    p.compactness = 0.0;
    CHECK_THROWS_AS(p.validate(), ValidationError);
    p = {};
    p.max_iterations = 0;
    CHECK_THROWS_AS(p.validate(), ValidationError);
    p = {};
    p.min_region_fraction = 1.5;
    CHECK_THROWS_AS(p.validate(), ValidationError);
}

TEST_CASE("connected large regions are a fixpoint up to renumbering") {
    const Tensor in = label_tensor(4, 4, {5, 5, 2, 2, 5, 5, 2, 2, 7, 7, 9, 9, 7, 7, 9, 9});
    const Tensor out = enforce_connectivity(in, 4.0, 0.25);
    const auto o = out.data<std::int32_t>();
    const std::vector<std::int32_t> expect{0, 0, 1, 1, 0, 0, 1, 1, 2, 2, 3, 3, 2, 2, 3, 3};
    CHECK(std::vector<std::int32_t>(o.begin(), o.end()) == expect);
}

TEST_CASE("a stray pixel joins the surrounding region") {
    std::vector<std::int32_t> v(25, 1);
    v[12] = 0;
    const Tensor out = enforce_connectivity(label_tensor(5, 5, v), 25.0, 0.25);
    const auto o = out.data<std::int32_t>();
    for (auto l : o) CHECK(l == o[0]);
}

TEST_CASE("a 1-pixel checkerboard collapses to one label") {
    std::vector<std::int32_t> v(64);
    for (std::size_t i = 0; i < 64; ++i) v[i] = static_cast<std::int32_t>(((i / 8) + (i % 8)) % 2);
    const Tensor out = enforce_connectivity(label_tensor(8, 8, v), 32.0, 0.25);
    CHECK(count_components(out) == 1);
}

TEST_CASE("split labels become separate components") {
    // Label 0 appears in two disconnected blocks, both large.
    const Tensor in = label_tensor(2, 6, {0, 0, 1, 1, 0, 0, 0, 0, 1, 1, 0, 0});
    const Tensor out = enforce_connectivity(in, 4.0, 0.25);
    const auto o = out.data<std::int32_t>();
    CHECK(o[0] != o[4]);
    CHECK(count_components(out) == 3);
    CHECK(oracle::labels_four_connected({o.begin(), o.end()}, 2, 6));
}

TEST_CASE("make_partition bookkeeping and errors") {
    const auto p = make_partition(label_tensor(2, 2, {0, 1, 1, 1}));
    CHECK(p.num_superpixels == 2);
    CHECK(p.pixel_counts == std::vector<std::size_t>{1, 3});
    CHECK(p.centroids[0].row == 0.0);
    CHECK(p.centroids[0].col == 0.0);
    CHECK(p.centroids[1].row == doctest::Approx(2.0 / 3.0));
    CHECK(p.centroids[1].col == doctest::Approx(2.0 / 3.0));
    CHECK_THROWS_AS(make_partition(label_tensor(1, 2, {0, 2})), ValidationError);
    CHECK_THROWS_AS(make_partition(label_tensor(1, 2, {-1, 0})), ValidationError);
}
