#include <doctest.h>

#include <cmath>

#include "sepseg/error.hpp"
#include "sepseg/metrics.hpp"
#include "sepseg/rng.hpp"
#include "support/oracles.hpp"

using namespace sepseg;

namespace {

Mask make_mask(Dims3 dims, Spacing3 sp, const std::vector<std::array<std::int64_t, 3>>& voxels) {
    Mask m{dims, sp, std::vector<std::uint8_t>(static_cast<std::size_t>(dims.count()), 0)};
    for (const auto& v : voxels)
        m.in[static_cast<std::size_t>(linear_index(dims, v[0], v[1], v[2]))] = 1;
    return m;
}

Mask random_mask(Dims3 dims, Spacing3 sp, SplitMix64& rng, double fill) {
    Mask m{dims, sp, std::vector<std::uint8_t>(static_cast<std::size_t>(dims.count()), 0)};
    for (auto& v : m.in) v = rng.next_double() < fill ? 1 : 0;
    if (m.count() == 0) m.in[0] = 1;
    return m;
}

}  // namespace

TEST_CASE("dsc: identical, disjoint, and counted cases") {
    const Dims3 d{1, 2, 4};
    const Mask a = make_mask(d, {1, 1, 1}, {{0, 0, 0}, {0, 0, 1}, {0, 1, 0}});
    CHECK(dsc(a, a) == 1.0);

    const Mask b = make_mask(d, {1, 1, 1}, {{0, 1, 2}, {0, 1, 3}});
    CHECK(dsc(a, b) == 0.0);

    // TP=2, FP=1, FN=1 -> 4/6.
    const Mask pred = make_mask(d, {1, 1, 1}, {{0, 0, 0}, {0, 0, 1}, {0, 0, 2}});
    const Mask gt = make_mask(d, {1, 1, 1}, {{0, 0, 0}, {0, 0, 1}, {0, 0, 3}});
    CHECK(dsc(pred, gt) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));

    const Mask empty{d, {1, 1, 1}, std::vector<std::uint8_t>(8, 0)};
    CHECK(dsc(empty, empty) == 1.0);
    CHECK(dsc(a, empty) == 0.0);
}

TEST_CASE("dsc is symmetric in pred and gt") {
    SplitMix64 rng(3);
    for (int t = 0; t < 20; ++t) {
        const Mask a = random_mask({4, 5, 6}, {3, 1, 1}, rng, 0.3);
        const Mask b = random_mask({4, 5, 6}, {3, 1, 1}, rng, 0.3);
        CHECK(dsc(a, b) == dsc(b, a));
    }
}

TEST_CASE("surface: single voxel, solid cube, empty and full masks") {
    const Mask single = make_mask({3, 3, 3}, {3, 1, 1}, {{1, 1, 1}});
    CHECK(surface(single).points_mm.size() == 1);
    CHECK(surface(single).points_mm[0] == std::array<double, 3>{3.0, 1.0, 1.0});

    // Solid 3x3x3 cube inside a 5x5x5 grid: 26 boundary voxels (all but the center).
    std::vector<std::array<std::int64_t, 3>> cube;
    for (std::int64_t z = 1; z <= 3; ++z)
        for (std::int64_t y = 1; y <= 3; ++y)
            for (std::int64_t x = 1; x <= 3; ++x) cube.push_back({z, y, x});
    CHECK(surface(make_mask({5, 5, 5}, {1, 1, 1}, cube)).points_mm.size() == 26);

    const Mask empty{{2, 2, 2}, {1, 1, 1}, std::vector<std::uint8_t>(8, 0)};
    CHECK(surface(empty).points_mm.empty());

    // A mask filling the whole grid is all border voxels.
    const Mask full{{3, 3, 3}, {1, 1, 1}, std::vector<std::uint8_t>(27, 1)};
    CHECK(surface(full).points_mm.size() == 26);
}

TEST_CASE("hd95: documented anisotropic point cases") {
    const Dims3 d{8, 8, 8};
    const Spacing3 sp{3, 1, 1};
    const Mask a = make_mask(d, sp, {{4, 4, 1}});
    const Mask b = make_mask(d, sp, {{4, 4, 6}});  // 5 in-plane voxels apart
    CHECK(hd95(a, a) == 0.0);
    CHECK(hd95(a, b) == doctest::Approx(5.0).epsilon(1e-12));

    const Mask c = make_mask(d, sp, {{5, 4, 1}});  // 1 slice apart
    CHECK(hd95(a, c) == doctest::Approx(3.0).epsilon(1e-12));

    const Mask empty{d, sp, std::vector<std::uint8_t>(static_cast<std::size_t>(d.count()), 0)};
    CHECK_THROWS_AS(hd95(a, empty), NumericError);
    CHECK_THROWS_AS(assd(empty, a), NumericError);
}

TEST_CASE("assd: identical masks, separated voxels, and an asymmetric L-shape") {
    const Dims3 d{4, 8, 8};
    const Spacing3 sp{3, 1, 1};
    const Mask a = make_mask(d, sp, {{2, 2, 2}});
    CHECK(assd(a, a) == 0.0);

    const Mask b = make_mask(d, sp, {{2, 2, 6}});
    CHECK(assd(a, b) == doctest::Approx(4.0).epsilon(1e-12));

    const Mask l = make_mask(d, sp, {{1, 1, 1}, {1, 2, 1}, {1, 3, 1}, {1, 3, 2}, {1, 3, 3}});
    const Mask square = make_mask(d, sp, {{1, 1, 1}, {1, 1, 2}, {1, 2, 1}, {1, 2, 2}});
    CHECK(assd(l, square) == doctest::Approx(testsupport::brute_assd(l, square)).epsilon(1e-12));
    CHECK(hd95(l, square) == doctest::Approx(testsupport::brute_hd95(l, square)).epsilon(1e-12));
}

TEST_CASE("distance-transform fast path equals brute force on random masks") {
    SplitMix64 rng(7);
    const std::vector<Spacing3> spacings{{1, 1, 1}, {3, 1, 1}, {2.5, 0.8, 1.2}};
    for (int trial = 0; trial < 45; ++trial) {
        const Spacing3 sp = spacings[static_cast<std::size_t>(trial % spacings.size())];
        const Dims3 dims{2 + static_cast<std::int64_t>(rng.next_below(10)),
                         2 + static_cast<std::int64_t>(rng.next_below(14)),
                         2 + static_cast<std::int64_t>(rng.next_below(14))};
        const Mask a = random_mask(dims, sp, rng, 0.2 + 0.4 * rng.next_double());
        const Mask b = random_mask(dims, sp, rng, 0.2 + 0.4 * rng.next_double());
        CHECK(hd95(a, b) == doctest::Approx(testsupport::brute_hd95(a, b)).epsilon(1e-9));
        CHECK(assd(a, b) == doctest::Approx(testsupport::brute_assd(a, b)).epsilon(1e-9));
        CHECK(hd95(a, b) <= testsupport::brute_max_hd(a, b) + 1e-12);
        CHECK(hd95(a, b) == hd95(b, a));
        CHECK(assd(a, b) == assd(b, a));
    }
}

TEST_CASE("translating both masks leaves every metric unchanged") {
    SplitMix64 rng(11);
    const Dims3 dims{12, 12, 12};
    const Spacing3 sp{3, 1, 1};
    auto shift = [&](const Mask& m, std::int64_t dz, std::int64_t dy, std::int64_t dx) {
        Mask out{dims, sp, std::vector<std::uint8_t>(static_cast<std::size_t>(dims.count()), 0)};
        for (std::int64_t z = 0; z < 8; ++z)
            for (std::int64_t y = 0; y < 8; ++y)
                for (std::int64_t x = 0; x < 8; ++x)
                    if (m.in[static_cast<std::size_t>(linear_index(dims, z, y, x))])
                        out.in[static_cast<std::size_t>(linear_index(dims, z + dz, y + dy, x + dx))] = 1;
        return out;
    };
    // Masks confined to the low 8x8x8 corner, then shifted by (3,2,1).
    Mask a{dims, sp, std::vector<std::uint8_t>(static_cast<std::size_t>(dims.count()), 0)};
    Mask b = a;
    for (std::int64_t z = 1; z < 7; ++z)
        for (std::int64_t y = 1; y < 7; ++y)
            for (std::int64_t x = 1; x < 7; ++x) {
                if (rng.next_double() < 0.3) a.in[static_cast<std::size_t>(linear_index(dims, z, y, x))] = 1;
                if (rng.next_double() < 0.3) b.in[static_cast<std::size_t>(linear_index(dims, z, y, x))] = 1;
            }
    a.in[static_cast<std::size_t>(linear_index(dims, 2, 2, 2))] = 1;
    b.in[static_cast<std::size_t>(linear_index(dims, 3, 3, 3))] = 1;

    const Mask a2 = shift(a, 3, 2, 1), b2 = shift(b, 3, 2, 1);
    CHECK(dsc(a2, b2) == dsc(a, b));
    CHECK(hd95(a2, b2) == doctest::Approx(hd95(a, b)).epsilon(1e-12));
    CHECK(assd(a2, b2) == doctest::Approx(assd(a, b)).epsilon(1e-12));
}

TEST_CASE("weighted_report: equal weights reduce to the mean, the documented two-class case") {
    std::vector<ClassMetrics> pc(2);
    pc[0].dsc = 0.8;
    pc[1].dsc = 0.6;
    const MetricsReport equal = weighted_report(pc, {1, 1});
    CHECK(equal.weighted_dsc == doctest::Approx(0.7).epsilon(1e-12));

    const MetricsReport weighted = weighted_report(pc, {100, 50});
    CHECK(weighted.weighted_dsc == doctest::Approx(0.73333333).epsilon(1e-6));

    CHECK_THROWS_AS(weighted_report(pc, {100}), ConfigError);
    CHECK_THROWS_AS(weighted_report(pc, {100, 0}), ConfigError);
}

TEST_CASE("weighted distances skip undefined entries and renormalize") {
    std::vector<ClassMetrics> pc(3);
    pc[0] = {0.9, 2.0, 1.0};
    pc[1] = {0.5, std::nullopt, std::nullopt};
    pc[2] = {0.7, 4.0, 2.0};
    const MetricsReport r = weighted_report(pc, {1, 1, 3});
    CHECK(r.weighted_hd95.has_value());
    CHECK(*r.weighted_hd95 == doctest::Approx((2.0 + 3 * 4.0) / 4.0).epsilon(1e-12));
    CHECK(*r.weighted_assd == doctest::Approx((1.0 + 3 * 2.0) / 4.0).epsilon(1e-12));
}

TEST_CASE("the head-and-neck importance preset has 22 entries summing to 1650") {
    const auto& w = structseg22_weights();
    CHECK(w.size() == 22);
    double sum = 0.0;
    for (double v : w) sum += v;
    CHECK(sum == 1650.0);
    CHECK(structseg22_names().size() == 22);
    CHECK(w[0] == 100.0);   // left eye
    CHECK(w[2] == 50.0);    // left lens
    CHECK(w[8] == 100.0);   // brain stem
    CHECK(w[21] == 100.0);  // right mandible
}

TEST_CASE("evaluate_labelmaps produces per-class metrics and serializations") {
    const Dims3 d{2, 4, 4};
    std::vector<std::uint16_t> gt(static_cast<std::size_t>(d.count()), 0);
    std::vector<std::uint16_t> pred = gt;
    // class 1 region, slightly shifted in the prediction; class 2 absent in both.
    for (std::int64_t y = 0; y < 2; ++y)
        for (std::int64_t x = 0; x < 2; ++x) {
            gt[static_cast<std::size_t>(linear_index(d, 0, y, x))] = 1;
            pred[static_cast<std::size_t>(linear_index(d, 0, y, x + 1))] = 1;
        }
    const LabelMap gtm = make_labelmap(d, {3, 1, 1}, 3, gt);
    const LabelMap prm = make_labelmap(d, {3, 1, 1}, 3, pred);

    const MetricsReport r = evaluate_labelmaps(prm, gtm, {});
    REQUIRE(r.per_class.size() == 2);
    CHECK(r.per_class[0].dsc == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(r.per_class[0].hd95_mm.has_value());
    CHECK(r.per_class[1].dsc == 1.0);            // both empty
    CHECK(!r.per_class[1].hd95_mm.has_value());  // undefined, not a sentinel

    const std::string json = metrics_report_to_json(r);
    CHECK(json.find("\"hd95_mm\": null") != std::string::npos);
    const std::string table = metrics_report_to_table(r);
    CHECK(table.find("undefined") != std::string::npos);
    CHECK(table.find("class_1") != std::string::npos);
    CHECK(table.find("weighted") != std::string::npos);
}
