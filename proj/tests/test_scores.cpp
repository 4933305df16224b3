#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "oracles.hpp"
#include "support.hpp"
#include "suplid/scores.hpp"

using namespace suplid;
using namespace suplid::scores;

namespace {

std::vector<float> softmax_ref(const std::vector<float>& l) {
    double z = 0.0;
    for (float v : l) z += std::exp(static_cast<double>(v));
    std::vector<float> p;
    for (float v : l) p.push_back(static_cast<float>(std::exp(static_cast<double>(v)) / z));
    return p;
}

double conf(std::vector<float> l, ConfidenceMethod m, const KlTemplates* t = nullptr) { return confidence(l, m, t); }

Tensor logit_map(std::size_t h, std::size_t w, const std::vector<float>& values) {
    return Tensor(Shape{h, w, values.size() / (h * w)}, values);
}

coreset::Coreset make_coreset(const Matrix& z, std::vector<float> w, std::uint32_t classes = 1) {
    coreset::Coreset cs;
    cs.embeddings = z;
    cs.weights = std::move(w);
    cs.class_labels.assign(z.rows(), 0);
    cs.num_classes = classes;
    cs.k_used = 2;
    return cs;
}

slic::SuperpixelPartition random_partition(std::size_t h, std::size_t w, std::mt19937_64& rng) {
    slic::SlicParams p;
    p.pixels_per_superpixel = 30 + rng() % 200;
    return slic::slic_segment(testing::random_image(h, w, rng), p);
}

const std::vector<ConfidenceMethod> kAllConfidence{ConfidenceMethod::msp, ConfidenceMethod::maxlogit,
                                                   ConfidenceMethod::energy, ConfidenceMethod::entropy,
                                                   ConfidenceMethod::kl_match};

}  // namespace

TEST_CASE("uniform logits") {
    CHECK(conf({0, 0}, ConfidenceMethod::msp) == doctest::Approx(0.5));
    CHECK(conf({0, 0}, ConfidenceMethod::maxlogit) == 0.0);
    CHECK(conf({0, 0}, ConfidenceMethod::energy) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(std::abs(conf({0, 0}, ConfidenceMethod::entropy)) < 1e-12);
}

TEST_CASE("logits [2,0] against hand-evaluated formulas") {
    const double e2 = std::exp(2.0);
    const double p0 = e2 / (e2 + 1.0), p1 = 1.0 / (e2 + 1.0);
    const double entropy_conf = std::log(2.0) + p0 * std::log(p0) + p1 * std::log(p1);
    CHECK(conf({2, 0}, ConfidenceMethod::msp) == doctest::Approx(p0).epsilon(1e-12));
    CHECK(conf({2, 0}, ConfidenceMethod::msp) == doctest::Approx(0.88080).epsilon(1e-5));
    CHECK(conf({2, 0}, ConfidenceMethod::energy) == doctest::Approx(std::log(e2 + 1.0)).epsilon(1e-12));
    CHECK(conf({2, 0}, ConfidenceMethod::energy) == doctest::Approx(2.12693).epsilon(1e-5));
    CHECK(conf({2, 0}, ConfidenceMethod::entropy) == doctest::Approx(entropy_conf).epsilon(1e-10));
    CHECK(conf({2, 0}, ConfidenceMethod::entropy) == doctest::Approx(0.32781).epsilon(1e-4));
    CHECK(conf({2, 0}, ConfidenceMethod::maxlogit) == 2.0);
}

TEST_CASE("kl_match peaks at zero on a template") {
    const auto t = build_kl_templates(std::vector<Tensor>{logit_map(1, 2, {std::log(9.0f), 0.0f, 0.0f, std::log(4.0f)})});
    const auto& d0 = t.templates.row(0);
    const std::vector<float> at_template{std::log(d0[0]), std::log(d0[1])};
    CHECK(std::abs(conf(at_template, ConfidenceMethod::kl_match, &t)) < 1e-6);
    std::mt19937_64 rng(1);
    std::normal_distribution<float> n(0.0f, 2.0f);
    for (int i = 0; i < 100; ++i) CHECK(conf({n(rng), n(rng)}, ConfidenceMethod::kl_match, &t) <= 1e-9);
    CHECK_THROWS_AS(conf({0, 1}, ConfidenceMethod::kl_match), ValidationError);
    CHECK_THROWS_AS(conf({0, 1, 2}, ConfidenceMethod::kl_match, &t), ValidationError);
}

TEST_CASE("kl_match is minus the smallest divergence to any template") {
    const auto t = build_kl_templates(std::vector<Tensor>{
        logit_map(1, 3, {2.0f, 0.0f, -1.0f, 0.0f, 3.0f, 0.5f, -2.0f, 0.0f, 1.0f})});
    std::mt19937_64 rng(2);
    std::normal_distribution<float> n(0.0f, 1.5f);
    for (int i = 0; i < 50; ++i) {
        const std::vector<float> l{n(rng), n(rng), n(rng)};
        const auto p = softmax_ref(l);
        double best = INFINITY;
        for (std::size_t c = 0; c < 3; ++c) {
            double kl = 0.0;
            for (std::size_t j = 0; j < 3; ++j) {
                const double d = t.templates.row(c)[j];
                if (d > 0) kl += d * std::log(d / p[j]);
            }
            best = std::min(best, kl);
        }
        CHECK(conf(l, ConfidenceMethod::kl_match, &t) == doctest::Approx(-best).epsilon(1e-5));
    }
}

TEST_CASE("energy tracks arbitrary float shifts") {
    std::mt19937_64 rng(3);
    std::normal_distribution<float> n(0.0f, 3.0f);
    for (int i = 0; i < 200; ++i) {
        std::vector<float> l(2 + rng() % 19);
        for (auto& v : l) v = n(rng);
        const float c = n(rng) * 10.0f;
        auto shifted = l;
        for (auto& v : shifted) v += c;
        const double de = conf(shifted, ConfidenceMethod::energy) - conf(l, ConfidenceMethod::energy);
        // Realized shift of the max entry.
        const auto mx = std::max_element(l.begin(), l.end()) - l.begin();
        const double realized = static_cast<double>(shifted[static_cast<std::size_t>(mx)]) - l[static_cast<std::size_t>(mx)];
        CHECK(std::abs(de - realized) <= 1e-6 * std::max(1.0, std::abs(realized)) + 1e-5);
    }
}

TEST_CASE("exact shifts leave msp and entropy unchanged to 1e-7") {
    std::mt19937_64 rng(4);
    for (int i = 0; i < 200; ++i) {
        std::vector<float> l(2 + rng() % 10);
        for (auto& v : l) v = static_cast<float>(static_cast<int>(rng() % 21) - 10);
        const float c = static_cast<float>(static_cast<int>(rng() % 2001) - 1000);
        auto shifted = l;
        for (auto& v : shifted) v += c;
        CHECK(std::abs(conf(shifted, ConfidenceMethod::msp) - conf(l, ConfidenceMethod::msp)) <= 1e-7);
        CHECK(std::abs(conf(shifted, ConfidenceMethod::entropy) - conf(l, ConfidenceMethod::entropy)) <= 1e-7);
        CHECK(std::abs(conf(shifted, ConfidenceMethod::energy) - conf(l, ConfidenceMethod::energy) - c) <= 1e-6 * std::max(1.0f, std::abs(c)));
    }
}

TEST_CASE("extreme logits stay finite") {
    for (auto m : {ConfidenceMethod::msp, ConfidenceMethod::maxlogit, ConfidenceMethod::energy, ConfidenceMethod::entropy})
        CHECK(std::isfinite(conf({1e30f, -1e30f, 0.0f}, m)));
    CHECK(conf({1000.0f, 0.0f}, ConfidenceMethod::energy) == doctest::Approx(1000.0));
}

TEST_CASE("confidence_from_logits maps every pixel") {
    std::mt19937_64 rng(5);
    std::normal_distribution<float> n(0.0f, 2.0f);
    std::vector<float> v(4 * 5 * 3);
    for (auto& x : v) x = n(rng);
    const Tensor logits = logit_map(4, 5, v);
    const auto t = build_kl_templates(std::vector<Tensor>{logits});
    for (auto m : kAllConfidence) {
        const Tensor map = confidence_from_logits(logits, m, &t);
        REQUIRE(map.shape() == Shape{4, 5});
        const auto s = map.data<float>();
        for (std::size_t i = 0; i < 20; ++i) {
            const std::vector<float> l(v.begin() + static_cast<std::ptrdiff_t>(3 * i), v.begin() + static_cast<std::ptrdiff_t>(3 * i + 3));
            CHECK(s[i] == doctest::Approx(conf(l, m, &t)).epsilon(1e-6));
        }
    }
    CHECK_THROWS_AS(confidence_from_logits(logits, ConfidenceMethod::kl_match, nullptr), ValidationError);
    CHECK_THROWS_AS(confidence_from_logits(logit_map(1, 1, {1.0f}), ConfidenceMethod::energy, nullptr), ValidationError);
    CHECK_THROWS_AS(confidence_from_logits(logit_map(1, 1, {1.0f, NAN}), ConfidenceMethod::energy, nullptr), ValidationError);
}

TEST_CASE("KL templates from a single predicted class") {
    testing::WarningCapture w;
    const auto t = build_kl_templates(std::vector<Tensor>{logit_map(1, 1, {std::log(9.0f), 0.0f})});
    CHECK(t.templates.row(0)[0] == doctest::Approx(0.9).epsilon(1e-6));
    CHECK(t.templates.row(0)[1] == doctest::Approx(0.1).epsilon(1e-6));
    CHECK(t.templates.row(1)[0] == doctest::Approx(0.5));
    CHECK(t.templates.row(1)[1] == doctest::Approx(0.5));
    CHECK(w.contains("class 1 is never predicted"));
}

TEST_CASE("KL templates average the softmax of pixels sharing a prediction") {
    KlTemplateBuilder b;
    b.add(logit_map(1, 1, {std::log(4.0f), 0.0f}));
    b.add(logit_map(1, 2, {std::log(1.5f), 0.0f, 0.0f, 5.0f}));
    CHECK(b.pixels() == 3);
    const auto t = b.finish();
    CHECK(t.templates.row(0)[0] == doctest::Approx(0.7).epsilon(1e-6));
    CHECK(t.templates.row(0)[1] == doctest::Approx(0.3).epsilon(1e-6));
    CHECK_THROWS_AS(b.add(logit_map(1, 1, {0.0f, 0.0f, 0.0f})), ValidationError);
    CHECK_THROWS_AS(KlTemplateBuilder{}.finish(), ValidationError);
}

TEST_CASE("KL templates are distributions") {
    std::mt19937_64 rng(6);
    std::normal_distribution<float> n(0.0f, 4.0f);
    testing::WarningCapture w;
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t k = 2 + rng() % 8;
        std::vector<float> v(10 * 10 * k);
        for (auto& x : v) x = n(rng);
        const auto t = build_kl_templates(std::vector<Tensor>{logit_map(10, 10, v)});
        for (std::size_t c = 0; c < k; ++c) {
            double s = 0.0;
            for (float x : t.templates.row(c)) {
                CHECK(x >= 0.0f);
                s += x;
            }
            CHECK(std::abs(s - 1.0) <= 1e-5);
        }
    }
}

TEST_CASE("aggregation examples") {
    const auto part = slic::make_partition(Tensor(Shape{1, 4}, std::vector<std::int32_t>{0, 0, 0, 1}));
    const auto s = aggregate_confidence(Tensor(Shape{1, 4}, std::vector<float>{1, 2, 3, 7}), part);
    CHECK(s == std::vector<double>{2.0, 7.0});
    const auto c = aggregate_confidence(Tensor(Shape{1, 4}, std::vector<float>(4, -1.25f)), part);
    CHECK(c == std::vector<double>{-1.25, -1.25});
    CHECK_THROWS_AS(aggregate_confidence(Tensor(Shape{2, 2}, std::vector<float>(4)), part), ValidationError);
}

TEST_CASE("aggregation matches brute-force grouping on random 64x64 maps") {
    std::mt19937_64 rng(7);
    std::normal_distribution<float> n(0.0f, 5.0f);
    for (int trial = 0; trial < 20; ++trial) {
        const auto part = random_partition(64, 64, rng);
        std::vector<float> v(64 * 64);
        for (auto& x : v) x = n(rng);
        const auto got = aggregate_confidence(Tensor(Shape{64, 64}, v), part);
        const auto lab = part.labels.data<std::int32_t>();
        const auto expect = oracle::group_means(v, {lab.begin(), lab.end()});
        REQUIRE(expect.size() == got.size());
        for (const auto& [l, mean] : expect)
            CHECK(std::abs(got[static_cast<std::size_t>(l)] - mean) <= 1e-6 * std::max(1.0, std::abs(mean)));
    }
}

TEST_CASE("rectify examples") {
    FusionConfig cfg;
    cfg.calibration_min = -5.0;
    const std::vector<double> in{-5.0, 0.0, -9.0};
    const auto out = rectify(in, cfg);
    CHECK(out[0] == cfg.rectify_floor);
    CHECK(out[1] == 5.0 + cfg.rectify_floor);
    CHECK(out[2] == cfg.rectify_floor);
    const std::vector<double> bad{NAN};
    CHECK_THROWS_AS(rectify(bad, cfg), ValidationError);
    cfg.rectify_floor = 0.0;
    CHECK_THROWS_AS(rectify(in, cfg), ValidationError);
}

TEST_CASE("fusion config validation and defaults") {
    FusionConfig c;
    CHECK(c.confidence_method == ConfidenceMethod::energy);
    CHECK(c.guidance_method == GuidanceMethod::weighted_lid);
    CHECK(c.rectify_floor == 1e-6);
    CHECK(c.calibration_min == 0.0);
    CHECK(c.k_guidance == 400);
    CHECK_NOTHROW(c.validate());
    c.k_guidance = 1;
    CHECK_THROWS_AS(c.validate(), ValidationError);
    c = {};
    c.calibration_min = INFINITY;
    CHECK_THROWS_AS(c.validate(), ValidationError);
}

TEST_CASE("weighted LID on the two-point example") {
    const auto cs = make_coreset(Matrix(2, 2, {1, 0, 0, 1}), {2.0f, 3.0f});
    const Matrix q(1, 2, {0, 0});
    const auto d = guidance_score(q, cs, GuidanceMethod::weighted_lid, 2);
    const double expect = -1.0 / ((std::log(2.0 / 3.0) + 0.0) / 2.0);
    CHECK(d[0] == doctest::Approx(expect).epsilon(1e-12));
    CHECK(std::abs(d[0] - 4.93261) < 1e-4);
    // Unweighted: equal distances hit the cap.
    CHECK(guidance_score(q, cs, GuidanceMethod::unweighted_lid, 2)[0] == 1e6);
    const auto kd = guidance_score(q, cs, GuidanceMethod::knn_distance, 2);
    CHECK(kd[0] == doctest::Approx(1.0 / (1e-6 + 2.5)).epsilon(1e-12));
}

TEST_CASE("no guidance is all ones") {
    const auto cs = make_coreset(Matrix(2, 2, {1, 0, 0, 1}), {2.0f, 3.0f});
    std::mt19937_64 rng(8);
    const auto q = testing::random_matrix(7, 2, rng);
    CHECK(guidance_score(q, cs, GuidanceMethod::none, 2) == std::vector<double>(7, 1.0));
}

TEST_CASE("weighted LID is invariant to jointly scaling queries and pool") {
    std::mt19937_64 rng(9);
    std::uniform_int_distribution<int> u(-100, 100);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t r = 6 + rng() % 20, d = 2 + rng() % 10;
        Matrix z(r, d), z7(r, d), q(5, d), q7(5, d);
        for (std::size_t i = 0; i < z.values().size(); ++i) {
            z.values()[i] = static_cast<float>(u(rng));
            z7.values()[i] = 7.0f * z.values()[i];
        }
        for (std::size_t i = 0; i < q.values().size(); ++i) {
            q.values()[i] = static_cast<float>(u(rng));
            q7.values()[i] = 7.0f * q.values()[i];
        }
        std::vector<float> w(r);
        for (auto& x : w) x = 0.25f * static_cast<float>(1 + rng() % 16);
        const std::size_t k = 2 + rng() % (r - 2);
        const auto a = guidance_score(q, make_coreset(z, w), GuidanceMethod::weighted_lid, k);
        const auto b = guidance_score(q7, make_coreset(z7, w), GuidanceMethod::weighted_lid, k);
        for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) <= 1e-9 * a[i]);
    }
}

TEST_CASE("weighted LID matches a direct oracle over the weighted pool") {
    std::mt19937_64 rng(10);
    const auto z = testing::random_matrix(40, 6, rng);
    std::vector<float> w(40);
    std::uniform_real_distribution<float> u(0.5f, 4.0f);
    for (auto& x : w) x = u(rng);
    const auto cs = make_coreset(z, w);
    std::vector<float> pool;
    for (std::size_t i = 0; i < 40; ++i)
        for (float v : z.row(i)) pool.push_back(static_cast<float>(w[i] * v));
    const auto q = testing::random_matrix(10, 6, rng);
    const auto got = guidance_score(q, cs, GuidanceMethod::weighted_lid, 12);
    for (std::size_t i = 0; i < 10; ++i) {
        const auto nn = oracle::knn(testing::row_vec(q, i), pool, 6, 12);
        CHECK(got[i] == doctest::Approx(oracle::lid_direct(nn.distances)).epsilon(1e-9));
    }
}

TEST_CASE("guidance errors and k clamping") {
    const auto cs = make_coreset(Matrix(3, 2, {1, 0, 0, 1, 1, 1}), {1.0f, 1.0f, 2.0f});
    const Matrix q(1, 2, {0.1f, 0.2f});
    CHECK_THROWS_AS(guidance_score(Matrix(1, 3), cs, GuidanceMethod::weighted_lid, 2), ValidationError);
    CHECK_THROWS_AS(guidance_score(q, cs, GuidanceMethod::weighted_lid, 1), ValidationError);
    CHECK_THROWS_AS(guidance_score(q, make_coreset(Matrix(1, 2, {1, 1}), {1.0f}), GuidanceMethod::weighted_lid, 2),
                    ValidationError);
    testing::WarningCapture w;
    const auto a = guidance_score(q, cs, GuidanceMethod::weighted_lid, 400);
    CHECK(w.contains("k clamped from 400 to coreset size 3"));
    CHECK(a == guidance_score(q, cs, GuidanceMethod::weighted_lid, 3));
}

TEST_CASE("fuse examples") {
    const std::vector<double> s{2.0, 0.0, 1.5}, g{3.0, 42.0, 1.0};
    CHECK(fuse(s, g) == std::vector<double>{6.0, 0.0, 1.5});
    const std::vector<double> ones(3, 1.0);
    CHECK(fuse(s, ones) == s);
    CHECK_THROWS_AS(fuse(s, std::vector<double>{1.0}), ValidationError);
}

TEST_CASE("fusion is monotone in confidence") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 10.0), g(1e-3, 50.0);
    for (int i = 0; i < 1000; ++i) {
        const double a = u(rng), b = u(rng), d = g(rng);
        if (a == b) continue;
        const auto fa = fuse(std::vector<double>{a}, std::vector<double>{d})[0];
        const auto fb = fuse(std::vector<double>{b}, std::vector<double>{d})[0];
        CHECK((a > b) == (fa > fb));
    }
}

TEST_CASE("broadcast examples") {
    const auto part = slic::make_partition(Tensor(Shape{2, 2}, std::vector<std::int32_t>{0, 1, 0, 1}));
    const auto m = broadcast_to_pixels(std::vector<double>{4.5, -1.0}, part);
    const auto v = m.data<float>();
    CHECK(std::vector<float>(v.begin(), v.end()) == std::vector<float>{4.5f, -1.0f, 4.5f, -1.0f});
    CHECK_THROWS_AS(broadcast_to_pixels(std::vector<double>{1.0}, part), ValidationError);
}

TEST_CASE("broadcast maps are constant within superpixels") {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 5; ++trial) {
        const auto part = random_partition(40, 50, rng);
        std::vector<double> s(part.num_superpixels);
        std::normal_distribution<double> n;
        for (auto& x : s) x = n(rng);
        const auto m = broadcast_to_pixels(s, part);
        const auto v = m.data<float>();
        const auto lab = part.labels.data<std::int32_t>();
        for (std::size_t i = 0; i < v.size(); ++i) CHECK(v[i] == static_cast<float>(s[static_cast<std::size_t>(lab[i])]));
        const Tensor c = broadcast_to_pixels(std::vector<double>(part.num_superpixels, 3.0), part);
        for (float x : c.data<float>()) CHECK(x == 3.0f);
    }
}

TEST_CASE("kNN baseline examples and oracle") {
    const auto cs = make_coreset(Matrix(2, 1, {0, 10}), {1.0f, 1.0f});
    CHECK(knn_baseline(Matrix(1, 1, {1}), cs, 1)[0] == -1.0);
    CHECK(knn_baseline(Matrix(1, 1, {10}), cs, 1)[0] == 0.0);
    CHECK(knn_baseline(Matrix(1, 1, {1}), cs, 2)[0] == -9.0);

    std::mt19937_64 rng(13);
    const auto z = testing::random_matrix(50, 7, rng);
    const auto big = make_coreset(z, std::vector<float>(50, 1.0f));
    const auto q = testing::random_matrix(20, 7, rng);
    const auto got = knn_baseline(q, big, 5);
    for (std::size_t i = 0; i < 20; ++i) {
        const auto nn = oracle::knn(testing::row_vec(q, i), z.values(), 7, 5);
        CHECK(got[i] == doctest::Approx(-nn.distances.back()).epsilon(1e-9));
    }
}

TEST_CASE("NNGuide examples and oracle") {
    const auto cs = make_coreset(Matrix(2, 2, {2, 0, -5, -5}), {1.0f, 1.0f});
    CHECK(nnguide_baseline(std::vector<double>{2.0}, Matrix(1, 2, {2, 0}), cs, 1)[0] == 8.0);
    CHECK(nnguide_baseline(std::vector<double>{0.0}, Matrix(1, 2, {2, 0}), cs, 1)[0] == 0.0);
    CHECK_THROWS_AS(nnguide_baseline(std::vector<double>{1.0, 2.0}, Matrix(1, 2, {2, 0}), cs, 1), ValidationError);

    std::mt19937_64 rng(14);
    const auto z = testing::random_matrix(60, 5, rng);
    const auto big = make_coreset(z, std::vector<float>(60, 1.0f));
    const auto q = testing::random_matrix(15, 5, rng);
    std::vector<double> s(15);
    std::uniform_real_distribution<double> u(0.0, 3.0);
    for (auto& x : s) x = u(rng);
    const auto got = nnguide_baseline(s, q, big, 4);
    for (std::size_t i = 0; i < 15; ++i) {
        const auto qi = testing::row_vec(q, i);
        const auto nn = oracle::knn(qi, z.values(), 5, 4);
        double mean = 0.0;
        for (auto idx : nn.indices) {
            for (std::size_t j = 0; j < 5; ++j) mean += static_cast<double>(qi[j]) * z.row(idx)[j];
        }
        mean /= 4.0;
        CHECK(got[i] == doctest::Approx(s[i] * mean).epsilon(1e-9));
    }
}

TEST_CASE("threshold map examples") {
    const Tensor s(Shape{1, 2}, std::vector<float>{1, 3});
    const auto m = threshold_map(s, 2.0);
    CHECK(m.data<std::uint8_t>()[0] == 1);
    CHECK(m.data<std::uint8_t>()[1] == 0);
    const auto all_id = threshold_map(s, -std::numeric_limits<double>::infinity());
    for (auto v : all_id.data<std::uint8_t>()) CHECK(v == 0);
    const auto all_ood = threshold_map(s, 3.5);
    for (auto v : all_ood.data<std::uint8_t>()) CHECK(v == 1);
    CHECK(threshold_map(s, 3.0).data<std::uint8_t>()[1] == 0);
}

TEST_CASE("threshold decisions survive a monotone transform of scores and threshold") {
    std::mt19937_64 rng(15);
    std::normal_distribution<float> n(0.0f, 2.0f);
    std::vector<float> v(30 * 30), t(30 * 30);
    for (std::size_t i = 0; i < v.size(); ++i) {
        v[i] = n(rng);
        t[i] = std::exp(v[i]) * 3.0f + 1.0f;
    }
    for (float tau : {-1.0f, 0.0f, 0.5f, 2.0f}) {
        const auto a = threshold_map(Tensor(Shape{30, 30}, v), tau);
        const auto b = threshold_map(Tensor(Shape{30, 30}, t), std::exp(tau) * 3.0f + 1.0f);
        CHECK(bitwise_equal(a, b));
    }
}

TEST_CASE("method names round-trip") {
    for (auto m : kAllConfidence) CHECK(parse_confidence(confidence_name(m)) == m);
    for (auto g : {GuidanceMethod::weighted_lid, GuidanceMethod::unweighted_lid, GuidanceMethod::knn_distance,
                   GuidanceMethod::none})
        CHECK(parse_guidance(guidance_name(g)) == g);
    CHECK(parse_guidance("weighted-lid") == GuidanceMethod::weighted_lid);
    CHECK_THROWS_AS(parse_confidence("odin"), ValidationError);
    CHECK_THROWS_AS(parse_guidance("mahalanobis"), ValidationError);
}

namespace {

// A 6-D ID manifold around mu on the first axes; OOD queries sit on an
// orthogonal axis 100x farther from the coreset than the ID queries.
struct OrientationScene {
    coreset::Coreset cs;
    Matrix id, ood;
    std::vector<std::vector<float>> id_logits, ood_logits;
};

OrientationScene orientation_scene() {
    std::mt19937_64 rng(16);
    std::normal_distribution<float> n(0.0f, 1.0f);
    constexpr std::size_t d = 16, r = 200, q = 60;
    auto sample = [&](Matrix& m, std::size_t rows, float axis_offset, std::size_t axis) {
        m = Matrix(rows, d);
        for (std::size_t i = 0; i < rows; ++i) {
            auto row = m.row(i);
            for (std::size_t j = 0; j < 6; ++j) row[j] = n(rng);
            row[0] += 5.0f;
            row[axis] += axis_offset;
        }
    };
    OrientationScene s;
    Matrix z;
    sample(z, r, 0.0f, 0);
    std::vector<float> w(r);
    for (auto& x : w) x = 4.0f + 0.5f * n(rng);
    s.cs = make_coreset(z, w);
    sample(s.id, q, 0.0f, 0);
    sample(s.ood, q, 300.0f, 10);
    for (std::size_t i = 0; i < q; ++i) {
        s.id_logits.push_back({6.0f + n(rng), n(rng), n(rng)});
        s.ood_logits.push_back({0.3f * n(rng), 0.3f * n(rng), 0.3f * n(rng)});
    }
    s.cs.kl_templates = Matrix(3, 3, {0.98f, 0.01f, 0.01f, 0.01f, 0.98f, 0.01f, 0.01f, 0.01f, 0.98f});
    return s;
}

double median_of(const std::vector<double>& v) { return oracle::median(v); }

}  // namespace

TEST_CASE("every ID-oriented score ranks the median ID superpixel above the median OOD one") {
    const auto s = orientation_scene();
    const KlTemplates t{*s.cs.kl_templates};
    const std::size_t k = 20;
    const auto guid_id = guidance_score(s.id, s.cs, GuidanceMethod::knn_distance, k);
    const auto guid_ood = guidance_score(s.ood, s.cs, GuidanceMethod::knn_distance, k);
    CHECK(median_of(guid_id) > median_of(guid_ood));
    CHECK(median_of(knn_baseline(s.id, s.cs, k)) > median_of(knn_baseline(s.ood, s.cs, k)));

    for (auto m : kAllConfidence) {
        CAPTURE(confidence_name(m));
        std::vector<double> ci, co;
        for (const auto& l : s.id_logits) ci.push_back(confidence(l, m, &t));
        for (const auto& l : s.ood_logits) co.push_back(confidence(l, m, &t));
        CHECK(median_of(ci) > median_of(co));

        FusionConfig cfg;
        cfg.calibration_min = *std::min_element(ci.begin(), ci.end());
        const auto ri = rectify(ci, cfg), ro = rectify(co, cfg);
        CHECK(median_of(nnguide_baseline(ri, s.id, s.cs, k)) > median_of(nnguide_baseline(ro, s.ood, s.cs, k)));
        const auto fused_id = fuse(ri, guidance_score(s.id, s.cs, GuidanceMethod::weighted_lid, k));
        const auto fused_ood = fuse(ro, guidance_score(s.ood, s.cs, GuidanceMethod::weighted_lid, k));
        CHECK(median_of(fused_id) > median_of(fused_ood));
    }
}

TEST_CASE("LID guidance alone scores far queries as higher-dimensional") {
    const auto s = orientation_scene();
    for (auto g : {GuidanceMethod::weighted_lid, GuidanceMethod::unweighted_lid}) {
        const auto a = guidance_score(s.id, s.cs, g, 20);
        const auto b = guidance_score(s.ood, s.cs, g, 20);
        CHECK(median_of(b) > 10.0 * median_of(a));
    }
}
