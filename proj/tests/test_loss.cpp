#include <doctest.h>

#include <cmath>

#include "sepseg/loss.hpp"
#include "sepseg/rng.hpp"

using namespace sepseg;

namespace {

// Independent scalar evaluation of the loss family: naive per-class loops,
// no shared helpers with the library implementation.
double oracle_loss(const std::vector<double>& p, const std::vector<double>& g, std::int64_t C,
                   std::int64_t spatial, const LossConfig& cfg, bool use_ath) {
    std::vector<double> pd = p;
    if (use_ath) {
        for (std::int64_t i = 0; i < C * spatial; ++i)
            pd[static_cast<std::size_t>(i)] =
                p[static_cast<std::size_t>(i)] *
                std::exp((p[static_cast<std::size_t>(i)] - g[static_cast<std::size_t>(i)]) /
                         *cfg.ath_alpha);
    }
    double ldsc = 0.0;
    for (std::int64_t c = 0; c < C; ++c) {
        double inter = 0.0, total = 0.0;
        for (std::int64_t i = 0; i < spatial; ++i) {
            inter += g[static_cast<std::size_t>(c * spatial + i)] * pd[static_cast<std::size_t>(c * spatial + i)];
            total += g[static_cast<std::size_t>(c * spatial + i)] + pd[static_cast<std::size_t>(c * spatial + i)];
        }
        const double dsc = (2.0 * inter + cfg.epsilon) / (total + cfg.epsilon);
        ldsc += std::pow(-std::log(dsc), cfg.gamma_dsc);
    }
    ldsc /= static_cast<double>(C);

    double lcross = 0.0;
    for (std::int64_t c = 0; c < C; ++c) {
        const double w = cfg.class_weights.empty() ? 1.0 : cfg.class_weights[static_cast<std::size_t>(c)];
        for (std::int64_t i = 0; i < spatial; ++i) {
            const double gv = g[static_cast<std::size_t>(c * spatial + i)];
            if (gv == 0.0) continue;
            double pv = p[static_cast<std::size_t>(c * spatial + i)];
            pv = std::min(1.0, std::max(cfg.prob_floor, pv));
            lcross += gv * w * std::pow(-std::log(pv), cfg.gamma_cross);
        }
    }
    lcross /= static_cast<double>(spatial);
    return cfg.omega_dsc * ldsc + cfg.omega_cross * lcross;
}

Tensor<double> tensor4(std::int64_t C, std::int64_t spatial, const std::vector<double>& data) {
    return Tensor<double>({C, 1, 1, spatial}, data);
}

struct RandomCase {
    Tensor<double> p, g;
};

RandomCase random_case(std::int64_t C, std::int64_t spatial, SplitMix64& rng) {
    std::vector<double> p(static_cast<std::size_t>(C * spatial));
    std::vector<double> g(static_cast<std::size_t>(C * spatial), 0.0);
    for (std::int64_t i = 0; i < spatial; ++i) {
        double sum = 0.0;
        for (std::int64_t c = 0; c < C; ++c) {
            const double v = 0.05 + 0.9 * rng.next_double();
            p[static_cast<std::size_t>(c * spatial + i)] = v;
            sum += v;
        }
        for (std::int64_t c = 0; c < C; ++c) p[static_cast<std::size_t>(c * spatial + i)] /= sum * 1.05;
        g[static_cast<std::size_t>(static_cast<std::int64_t>(rng.next_below(static_cast<std::uint64_t>(C))) * spatial + i)] = 1.0;
    }
    return {tensor4(C, spatial, p), tensor4(C, spatial, g)};
}

}  // namespace

TEST_CASE("class_weights follows the inverse-sqrt-frequency rule") {
    const auto w1 = class_weights({0.5, 0.5});
    CHECK(w1[0] == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
    CHECK(w1[1] == doctest::Approx(1.414214).epsilon(1e-6));

    const auto w2 = class_weights({0.99, 0.01});
    CHECK(w2[0] == doctest::Approx(1.005038).epsilon(1e-6));
    CHECK(w2[1] == doctest::Approx(10.0).epsilon(1e-12));

    CHECK(class_weights({1.0}) == std::vector<double>{1.0});
    CHECK_THROWS_WITH_AS(class_weights({1.0, 0.0}), doctest::Contains("pseudo-frequency"), ConfigError);
}

TEST_CASE("soft_dsc hits the documented values") {
    CHECK(soft_dsc({1, 1, 0, 0}, {1, 1, 0, 0}, 1.0) == doctest::Approx(1.0).epsilon(1e-12));
    // Missing label: empty ground truth against empty prediction is perfect.
    CHECK(soft_dsc({0, 0, 0}, {0, 0, 0}, 1.0) == 1.0);
    // Hand arithmetic: (2*1.4 + 1) / (2 + 1.6 + 1) = 3.8 / 4.6.
    CHECK(soft_dsc({0.8, 0.6, 0.2, 0.0}, {1, 1, 0, 0}, 1.0) == doctest::Approx(3.8 / 4.6).epsilon(1e-12));
}

TEST_CASE("l_dsc: perfect prediction scores zero, the 4-voxel case its hand value") {
    LossConfig cfg;
    const auto g = tensor4(1, 4, {1, 1, 0, 0});
    CHECK(l_dsc(g, g, cfg) == doctest::Approx(0.0).epsilon(1e-12));

    const auto p = tensor4(1, 4, {0.8, 0.6, 0.2, 0.0});
    CHECK(l_dsc(p, g, cfg) == doctest::Approx(-std::log(3.8 / 4.6)).epsilon(1e-9));
    CHECK(l_dsc(p, g, cfg) == doctest::Approx(0.1911).epsilon(1e-3));
}

TEST_CASE("l_cross: single voxel at probability 0.5 costs ln 2") {
    LossConfig cfg;
    const auto p = tensor4(1, 1, {0.5});
    const auto g = tensor4(1, 1, {1.0});
    CHECK(l_cross(p, g, cfg) == doctest::Approx(0.6931).epsilon(1e-3));
}

TEST_CASE("l_exp combines the two terms with their weights") {
    LossConfig cfg;
    cfg.omega_dsc = 0.8;
    cfg.omega_cross = 1.5;
    SplitMix64 rng(3);
    const auto rc = random_case(3, 20, rng);
    CHECK(l_exp(rc.p, rc.g, cfg) ==
          doctest::Approx(0.8 * l_dsc(rc.p, rc.g, cfg) + 1.5 * l_cross(rc.p, rc.g, cfg)).epsilon(1e-12));
}

TEST_CASE("grad_l_dsc matches reverse-mode within 1e-10 and finite differences within 1e-6") {
    SplitMix64 rng(5);
    LossConfig cfg;
    const auto rc = random_case(3, 16, rng);

    // Reverse-mode route via the tape.
    Tape<double> tape;
    const int p_node = tape.input(rc.p);
    const int loss_node = build_l_dsc(tape, p_node, rc.g, cfg);
    tape.backward(loss_node);
    const Tensor<double>& rev = tape.grad(p_node);
    const Tensor<double> analytic = grad_l_dsc(rc.p, rc.g, cfg);
    REQUIRE(rev.numel() == analytic.numel());
    for (std::int64_t i = 0; i < rev.numel(); ++i)
        CHECK(std::abs(rev[i] - analytic[i]) < 1e-10);

    // Finite-difference route.
    const Tensor<double> g = rc.g;
    auto build = [&g, &cfg](Tape<double>& t, const std::vector<int>& ids) {
        return build_l_dsc(t, ids[0], g, cfg);
    };
    CHECK(grad_check<double>(build, {rc.p}, 1e-5) < 1e-6);
}

TEST_CASE("gradient of a perfectly predicted voxel is restrained against the hard-region case") {
    LossConfig cfg;
    const std::int64_t n = 100;
    std::vector<double> gv(static_cast<std::size_t>(n), 0.0);
    for (std::int64_t i = 0; i < 50; ++i) gv[static_cast<std::size_t>(i)] = 1.0;
    const auto g = tensor4(1, n, gv);

    const auto grad_perfect = grad_l_dsc(g, g, cfg);  // p = g exactly
    std::vector<double> third = gv;
    for (auto& v : third) v /= 3.0;  // soft Dice around 0.5
    const auto grad_half = grad_l_dsc(tensor4(1, n, third), g, cfg);

    CHECK(std::abs(grad_perfect[0]) < std::abs(grad_half[0]));
}

TEST_CASE("ath weighting values and direction") {
    const auto p = tensor4(1, 1, {0.5});
    const auto g1 = tensor4(1, 1, {1.0});
    const auto g0 = tensor4(1, 1, {0.0});

    CHECK(ath_weight(tensor4(1, 1, {1.0}), g1, 0.5)[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(ath_apply(tensor4(1, 1, {1.0}), g1, 0.5)[0] == doctest::Approx(1.0).epsilon(1e-12));

    CHECK(ath_weight(p, g1, 0.5)[0] == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
    CHECK(ath_apply(p, g1, 0.5)[0] == doctest::Approx(0.183940).epsilon(1e-6));
    CHECK(ath_weight(p, g0, 0.5)[0] == doctest::Approx(std::exp(1.0)).epsilon(1e-12));
    CHECK(ath_apply(p, g0, 0.5)[0] == doctest::Approx(1.359141).epsilon(1e-6));
}

TEST_CASE("ath_apply pushes predictions away from the ground truth everywhere") {
    SplitMix64 rng(7);
    for (double alpha : {0.25, 0.5, 1.0, 4.0}) {
        const auto rc = random_case(2, 64, rng);
        const auto pw = ath_apply(rc.p, rc.g, alpha);
        for (std::int64_t i = 0; i < rc.p.numel(); ++i) {
            if (rc.g[i] == 1.0)
                CHECK(pw[i] <= rc.p[i]);
            else
                CHECK(pw[i] >= rc.p[i]);
        }
    }
}

TEST_CASE("weighted soft Dice stays in (0,1] under randomized search") {
    SplitMix64 rng(9);
    LossConfig cfg;
    for (int trial = 0; trial < 200; ++trial) {
        const double alpha = 0.2 + 2.0 * rng.next_double();
        const auto rc = random_case(3, 24, rng);
        const auto pw = ath_apply(rc.p, rc.g, alpha);
        cfg.ath_alpha = alpha;
        const std::int64_t spatial = 24;
        for (std::int64_t c = 0; c < 3; ++c) {
            std::vector<double> ps(pw.data.begin() + c * spatial, pw.data.begin() + (c + 1) * spatial);
            std::vector<double> gs(rc.g.data.begin() + c * spatial, rc.g.data.begin() + (c + 1) * spatial);
            const double dsc = soft_dsc(ps, gs, cfg.epsilon);
            CHECK(dsc > 0.0);
            CHECK(dsc <= 1.0 + 1e-12);
        }
        CHECK(l_dsc(pw, rc.g, cfg) >= -1e-12);
    }
}

TEST_CASE("ath_l_exp approaches l_exp as alpha grows and on perfect one-hot input") {
    SplitMix64 rng(11);
    LossConfig cfg;
    const auto rc = random_case(3, 32, rng);
    cfg.ath_alpha = 1e6;
    CHECK(ath_l_exp(rc.p, rc.g, cfg) == doctest::Approx(l_exp(rc.p, rc.g, cfg)).epsilon(1e-6));

    cfg.ath_alpha = 0.5;
    CHECK(ath_l_exp(rc.g, rc.g, cfg) == doctest::Approx(l_exp(rc.g, rc.g, cfg)).epsilon(1e-12));
}

TEST_CASE("ath_l_exp of the 4-voxel example matches the independent scalar oracle") {
    LossConfig cfg;
    cfg.ath_alpha = 0.5;
    const std::vector<double> pv{0.8, 0.6, 0.2, 0.0};
    std::vector<double> p2(8);
    std::vector<double> g2(8);
    for (int i = 0; i < 4; ++i) {
        p2[static_cast<std::size_t>(i)] = 1.0 - pv[static_cast<std::size_t>(i)];  // background channel
        p2[static_cast<std::size_t>(4 + i)] = pv[static_cast<std::size_t>(i)];
        g2[static_cast<std::size_t>(i)] = i < 2 ? 0.0 : 1.0;
        g2[static_cast<std::size_t>(4 + i)] = i < 2 ? 1.0 : 0.0;
    }
    const auto p = tensor4(2, 4, p2);
    const auto g = tensor4(2, 4, g2);
    CHECK(ath_l_exp(p, g, cfg) == doctest::Approx(oracle_loss(p2, g2, 2, 4, cfg, true)).epsilon(1e-12));
    CHECK(l_exp(p, g, cfg) == doctest::Approx(oracle_loss(p2, g2, 2, 4, cfg, false)).epsilon(1e-12));
}

TEST_CASE("ath_l_exp dominates l_exp on imperfect predictions (gamma = 1)") {
    SplitMix64 rng(13);
    LossConfig cfg;
    for (int trial = 0; trial < 100; ++trial) {
        const auto rc = random_case(3, 20, rng);
        cfg.ath_alpha = 0.3 + 1.5 * rng.next_double();
        CHECK(ath_l_exp(rc.p, rc.g, cfg) >= l_exp(rc.p, rc.g, cfg) - 1e-12);
    }
}

TEST_CASE("tape losses agree with the direct evaluations") {
    SplitMix64 rng(15);
    LossConfig cfg;
    cfg.class_weights = {1.0, 2.5, 0.5};
    cfg.ath_alpha = 0.7;
    const auto rc = random_case(3, 18, rng);

    Tape<double> tape;
    const int p = tape.input(rc.p);
    CHECK(tape.scalar_value(build_l_dsc(tape, p, rc.g, cfg)) ==
          doctest::Approx(l_dsc(rc.p, rc.g, cfg)).epsilon(1e-12));
    CHECK(tape.scalar_value(build_l_cross(tape, p, rc.g, cfg)) ==
          doctest::Approx(l_cross(rc.p, rc.g, cfg)).epsilon(1e-12));
    CHECK(tape.scalar_value(build_l_exp(tape, p, rc.g, cfg)) ==
          doctest::Approx(l_exp(rc.p, rc.g, cfg)).epsilon(1e-12));
    CHECK(tape.scalar_value(build_ath_l_exp(tape, p, rc.g, cfg)) ==
          doctest::Approx(ath_l_exp(rc.p, rc.g, cfg)).epsilon(1e-12));
    CHECK(tape.scalar_value(build_dice_loss(tape, p, rc.g, cfg)) ==
          doctest::Approx(dice_loss(rc.p, rc.g, cfg)).epsilon(1e-12));
}

TEST_CASE("l_exp and ath_l_exp gradients match finite differences") {
    SplitMix64 rng(17);
    LossConfig cfg;
    cfg.class_weights = {1.0, 3.0};
    const auto rc = random_case(2, 16, rng);
    const Tensor<double> g = rc.g;

    auto build_exp = [&g, &cfg](Tape<double>& t, const std::vector<int>& ids) {
        return build_l_exp(t, ids[0], g, cfg);
    };
    CHECK(grad_check<double>(build_exp, {rc.p}, 1e-6) < 1e-6);

    for (double alpha : {0.5, 1.0}) {
        LossConfig acfg = cfg;
        acfg.ath_alpha = alpha;
        auto build_ath = [&g, &acfg](Tape<double>& t, const std::vector<int>& ids) {
            return build_ath_l_exp(t, ids[0], g, acfg);
        };
        CHECK(grad_check<double>(build_ath, {rc.p}, 1e-6) < 1e-6);
    }

    auto build_dice = [&g, &cfg](Tape<double>& t, const std::vector<int>& ids) {
        return build_dice_loss(t, ids[0], g, cfg);
    };
    CHECK(grad_check<double>(build_dice, {rc.p}, 1e-6) < 1e-6);
}

TEST_CASE("loss config serialization and validation") {
    LossConfig cfg;
    cfg.ath_alpha = 0.5;
    cfg.class_weights = {1, 2, 3};
    const LossConfig back = loss_config_from_json(loss_config_to_json(cfg));
    CHECK(back.ath_alpha == cfg.ath_alpha);
    CHECK(back.class_weights == cfg.class_weights);
    CHECK(back.epsilon == 1.0);

    LossConfig bad;
    bad.epsilon = 0.0;
    CHECK_THROWS_AS(validate_loss_config(bad, 2), ConfigError);
    LossConfig bad2;
    bad2.ath_alpha = -1.0;
    CHECK_THROWS_AS(validate_loss_config(bad2, 2), ConfigError);
}
