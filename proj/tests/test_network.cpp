#include <doctest.h>

#include <cmath>

#include "sepseg/checkpoint.hpp"
#include "sepseg/kernels.hpp"
#include "sepseg/network.hpp"
#include "sepseg/rng.hpp"
#include "support/common.hpp"

using namespace sepseg;

namespace {

Tensor<double> random_tensor(std::vector<std::int64_t> shape, SplitMix64& rng, double scale = 1.0) {
    Tensor<double> t = Tensor<double>::zeros(std::move(shape));
    for (auto& v : t.data) v = scale * (2.0 * rng.next_double() - 1.0);
    return t;
}

}  // namespace

TEST_CASE("separable block parameter count matches the symbolic formula") {
    // enc1.b1 of a 2-scale plan has Cin == Cout == n.
    const auto spec = default_network_spec(BlockKind::Separable, 3, 4, 2);
    const auto m = build_sepnet<double>(spec);
    const std::int64_t n = 8;  // width at scale 1
    const std::int64_t expected = 3 * (9 * n * n + n) + (3 * n * n + n) + (n * n + n) + 4 * (2 * n);
    CHECK(param_count_prefix(m, "enc1.b1.") == expected);
    CHECK(expected == 2088);
}

TEST_CASE("plain block parameter count matches the symbolic formula") {
    const auto spec = default_network_spec(BlockKind::Plain, 3, 4, 3);
    const auto m = build_unet_baseline<double>(spec);
    // enc1.b0 is a non-doubling block: both convs at n = width(scale 1).
    const std::int64_t n = 8;
    CHECK(param_count_prefix(m, "enc1.b0.") == 2 * (27 * n * n + n) + 4 * n);
}

TEST_CASE("a 1x3x3 conv mapping 1->1 channel carries 10 parameters") {
    const auto spec = default_network_spec(BlockKind::Separable, 2, 1, 2);
    const auto m = build_sepnet<double>(spec);
    CHECK(param_count_prefix(m, "enc0.b0.conv0.") == 12);  // 9 + 1 weights/bias + IN affine 2
    // The conv itself (weights + bias) without the normalization affine:
    CHECK(m.param("enc0.b0.conv0.w").numel() + m.param("enc0.b0.conv0.b").numel() == 10);
}

TEST_CASE("param_count equals the sum over named tensors") {
    const auto m = build_sepnet<double>(default_network_spec(BlockKind::Separable, 4, 8, 3));
    std::int64_t total = 0;
    for (const auto& p : m.params) total += p.numel();
    CHECK(param_count(m) == total);
    CHECK(m.names.size() == m.params.size());
}

TEST_CASE("toy forward has the contract shape with channels summing to 1") {
    auto m = build_sepnet<double>(default_network_spec(BlockKind::Separable, 3, 4, 2));
    init_params(m, 11);
    SplitMix64 rng(11);
    const auto x = random_tensor({1, 1, 8, 16, 16}, rng);
    const auto probs = model_forward(m, x);
    CHECK(probs.shape == std::vector<std::int64_t>{1, 3, 8, 16, 16});
    const std::int64_t spatial = 8 * 16 * 16;
    for (std::int64_t v = 0; v < spatial; ++v) {
        double sum = 0.0;
        for (std::int64_t c = 0; c < 3; ++c) sum += probs[c * spatial + v];
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    }

    // Same input, fresh forward: bitwise identical.
    const auto probs2 = model_forward(m, x);
    CHECK(probs.data == probs2.data);
}

TEST_CASE("unet baseline has the identical shape contract") {
    auto m = build_unet_baseline<double>(default_network_spec(BlockKind::Plain, 3, 4, 2));
    init_params(m, 13);
    SplitMix64 rng(13);
    const auto x = random_tensor({1, 1, 8, 16, 16}, rng);
    const auto probs = model_forward(m, x);
    CHECK(probs.shape == std::vector<std::int64_t>{1, 3, 8, 16, 16});
}

TEST_CASE("zero input with zero biases yields the uniform softmax") {
    auto m = build_sepnet<double>(default_network_spec(BlockKind::Separable, 4, 4, 2));
    init_params(m, 17);  // weights random, biases zero
    const auto probs = model_forward(m, Tensor<double>::zeros({1, 1, 4, 8, 8}));
    for (std::int64_t i = 0; i < probs.numel(); ++i)
        CHECK(probs[i] == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("pooling is in-plane only: depth passes through unchanged and undivided") {
    auto m = build_sepnet<double>(default_network_spec(BlockKind::Separable, 2, 4, 3));
    init_params(m, 19);
    SplitMix64 rng(19);
    // Depth 5 is deliberately odd and smaller than 2^(S-1).
    const auto x = random_tensor({1, 1, 5, 8, 8}, rng);
    const auto probs = model_forward(m, x);
    CHECK(probs.shape == std::vector<std::int64_t>{1, 2, 5, 8, 8});

    CHECK_THROWS_AS(model_forward(m, random_tensor({1, 1, 4, 10, 8}, rng)), ConfigError);
}

TEST_CASE("separable conv stack has an inter-slice receptive field of exactly 3 slices") {
    // The block's convolution pathway without normalization (instance
    // statistics couple all voxels and would mask the stencil support).
    SplitMix64 rng(23);
    const std::int64_t D = 9, H = 6, W = 6;
    const auto k_intra1 = random_tensor({3, 1, 1, 3, 3}, rng);
    const auto k_intra2 = random_tensor({3, 3, 1, 3, 3}, rng);
    const auto k_intra3 = random_tensor({3, 3, 1, 3, 3}, rng);
    const auto k_inter = random_tensor({3, 3, 3, 1, 1}, rng);
    const auto k_skip = random_tensor({3, 1, 1, 1, 1}, rng);
    const auto b3 = random_tensor({3}, rng);

    auto block = [&](const Tensor<double>& x) {
        auto t = conv3d(x, k_intra1, b3);
        t = conv3d(t, k_intra2, b3);
        t = conv3d(t, k_intra3, b3);
        t = conv3d(t, k_inter, b3);
        const auto s = conv3d(x, k_skip, b3);
        for (std::int64_t i = 0; i < t.numel(); ++i) t[i] += s[i];
        return t;
    };

    const auto x0 = random_tensor({1, 1, D, H, W}, rng);
    Tensor<double> x1 = x0;
    const std::int64_t zp = 4;  // perturb one slice
    for (std::int64_t y = 0; y < H; ++y)
        for (std::int64_t xx = 0; xx < W; ++xx) x1[(zp * H + y) * W + xx] += 3.0;

    const auto y0 = block(x0);
    const auto y1 = block(x1);
    for (std::int64_t c = 0; c < 3; ++c)
        for (std::int64_t z = 0; z < D; ++z) {
            double diff = 0.0;
            for (std::int64_t i = 0; i < H * W; ++i)
                diff += std::abs(y1[(c * D + z) * H * W + i] - y0[(c * D + z) * H * W + i]);
            if (std::abs(z - zp) <= 1)
                CHECK(diff > 0.0);
            else
                CHECK(diff == 0.0);
        }
}

TEST_CASE("parameter ratio of matched separable vs plain plans sits in the published band") {
    for (int n0 : {4, 8, 16})
        for (int S : {2, 3, 4}) {
            const auto sep = build_sepnet<double>(default_network_spec(BlockKind::Separable, 4, n0, S));
            const auto plain =
                build_unet_baseline<double>(default_network_spec(BlockKind::Plain, 4, n0, S));
            const double ratio = static_cast<double>(param_count(sep)) /
                                 static_cast<double>(param_count(plain));
            INFO("n0=", n0, " S=", S, " ratio=", ratio);
            CHECK(ratio >= 0.25);
            CHECK(ratio <= 0.45);
        }
}

TEST_CASE("full toy model gradient matches finite differences within the composite tolerance") {
    const auto spec = default_network_spec(BlockKind::Separable, 3, 4, 2);
    auto m = build_sepnet<double>(spec);
    init_params(m, 101);
    SplitMix64 rng(101);
    const auto x = random_tensor({1, 1, 4, 8, 8}, rng, 0.7);
    Tensor<double> w = Tensor<double>::zeros({1, 3, 4, 8, 8});
    for (std::int64_t i = 0; i < w.numel(); ++i) w[i] = 0.05 + 0.001 * static_cast<double>(i % 97);

    auto loss_of = [&]() {
        Tape<double> t;
        const int xn = t.constant(x);
        const int p = model_forward_on_tape(m, t, xn);
        return t.scalar_value(t.sum_all(t.mul_const_tensor(p, w)));
    };

    m.zero_grads();
    {
        Tape<double> t;
        const int xn = t.constant(x);
        const int p = model_forward_on_tape(m, t, xn);
        const int root = t.sum_all(t.mul_const_tensor(p, w));
        t.backward(root);
    }

    // 1e-6 keeps the probes from stepping across ReLU kinks.
    const double eps = 1e-6;
    double max_rel = 0.0;
    for (std::size_t i = 0; i < m.params.size(); ++i) {
        for (std::int64_t j = 0; j < m.params[i].numel(); ++j) {
            const double orig = m.params[i][j];
            m.params[i][j] = orig + eps;
            const double fp = loss_of();
            m.params[i][j] = orig - eps;
            const double fm = loss_of();
            m.params[i][j] = orig;
            const double numeric = (fp - fm) / (2.0 * eps);
            const double a = m.grads[i][j];
            const double rel = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
            max_rel = std::max(max_rel, rel);
        }
    }
    CHECK(max_rel < 1e-4);
}

TEST_CASE("checkpoint round-trip restores every tensor bit-exactly") {
    testsupport::TempDir tmp;
    auto m = build_sepnet<float>(default_network_spec(BlockKind::Separable, 3, 4, 2));
    init_params(m, 31);
    const std::string path = tmp.file("model.ckpt");
    save_checkpoint(m, path);
    const Model<float> back = load_checkpoint(path);
    REQUIRE(back.names == m.names);
    for (std::size_t i = 0; i < m.params.size(); ++i) CHECK(back.params[i].data == m.params[i].data);
    CHECK(back.spec.num_classes == 3);
    CHECK(back.spec.base_channels == 4);

    // Saving the reloaded model reproduces the bytes.
    save_checkpoint(back, tmp.file("model2.ckpt"));
    CHECK(testsupport::read_bytes(path) == testsupport::read_bytes(tmp.file("model2.ckpt")));
}

TEST_CASE("checkpoint loader rejects corruption and missing sidecars") {
    testsupport::TempDir tmp;
    auto m = build_sepnet<float>(default_network_spec(BlockKind::Separable, 2, 2, 2));
    init_params(m, 37);
    const std::string path = tmp.file("model.ckpt");
    save_checkpoint(m, path);

    std::string bytes = testsupport::read_bytes(path);
    bytes[bytes.size() / 2] = static_cast<char>(bytes[bytes.size() / 2] ^ 0x40);
    testsupport::write_bytes(path, bytes);
    CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("CRC"), DataError);

    save_checkpoint(m, path);
    std::filesystem::remove(path + ".json");
    CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("sidecar"), DataError);
}

TEST_CASE("network spec JSON round-trip and validation") {
    auto spec = default_network_spec(BlockKind::Plain, 5, 6, 3);
    spec.pool_inplane_only = false;
    const NetworkSpec back = network_spec_from_json(network_spec_to_json(spec));
    CHECK(back.num_classes == 5);
    CHECK(back.base_channels == 6);
    CHECK(back.num_scales == 3);
    CHECK(back.block_kind == BlockKind::Plain);
    CHECK(back.pool_inplane_only == false);
    CHECK(back.encoder_blocks == spec.encoder_blocks);

    CHECK_THROWS_AS(network_spec_from_json("{\"block_kind\":\"diagonal\"}"), ConfigError);
    NetworkSpec bad = spec;
    bad.encoder_blocks = {1};
    CHECK_THROWS_AS(build_sepnet<float>(bad), ConfigError);
}

TEST_CASE("probmap_from_tensor carries geometry and clamps to [0,1]") {
    Tensor<float> t = Tensor<float>::zeros({1, 2, 2, 2, 2});
    for (std::int64_t i = 0; i < 8; ++i) {
        t[i] = 0.25f;
        t[8 + i] = 0.75f;
    }
    const ProbMap p = probmap_from_tensor(t, Spacing3{3, 1, 1});
    CHECK(p.num_classes == 2);
    CHECK(p.dims == Dims3{2, 2, 2});
    CHECK(p.at(1, 0) == 0.75f);
}
