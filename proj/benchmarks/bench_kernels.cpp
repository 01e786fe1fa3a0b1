#include <benchmark/benchmark.h>

#include "sepseg/kernels.hpp"
#include "sepseg/network.hpp"
#include "sepseg/rng.hpp"
#include "sepseg/tape.hpp"

namespace {

using namespace sepseg;

template <class T>
Tensor<T> random_tensor(std::vector<std::int64_t> shape, SplitMix64& rng) {
    Tensor<T> t = Tensor<T>::zeros(std::move(shape));
    for (auto& v : t.data) v = static_cast<T>(2.0 * rng.next_double() - 1.0);
    return t;
}

void BM_Conv3dIntraSlice(benchmark::State& state) {
    SplitMix64 rng(1);
    const auto x = random_tensor<float>({1, 16, 8, 64, 64}, rng);
    const auto k = random_tensor<float>({16, 16, 1, 3, 3}, rng);
    const auto b = random_tensor<float>({16}, rng);
    for (auto _ : state) {
        auto y = conv3d(x, k, b);
        benchmark::DoNotOptimize(y.data.data());
    }
    state.SetItemsProcessed(state.iterations() * x.numel());
}
BENCHMARK(BM_Conv3dIntraSlice)->Unit(benchmark::kMillisecond);

void BM_Conv3dInterSlice(benchmark::State& state) {
    SplitMix64 rng(2);
    const auto x = random_tensor<float>({1, 16, 8, 64, 64}, rng);
    const auto k = random_tensor<float>({16, 16, 3, 1, 1}, rng);
    const auto b = random_tensor<float>({16}, rng);
    for (auto _ : state) {
        auto y = conv3d(x, k, b);
        benchmark::DoNotOptimize(y.data.data());
    }
    state.SetItemsProcessed(state.iterations() * x.numel());
}
BENCHMARK(BM_Conv3dInterSlice)->Unit(benchmark::kMillisecond);

void BM_SepNetForward(benchmark::State& state) {
    auto m = build_sepnet<float>(
        default_network_spec(BlockKind::Separable, 4, static_cast<int>(state.range(0)), 3));
    init_params(m, 3);
    SplitMix64 rng(3);
    const auto x = random_tensor<float>({1, 1, 8, 32, 32}, rng);
    for (auto _ : state) {
        auto probs = model_forward(m, x);
        m.tape.reset();
        benchmark::DoNotOptimize(probs.data.data());
    }
}
BENCHMARK(BM_SepNetForward)->Arg(8)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_SepNetForwardBackward(benchmark::State& state) {
    auto m = build_sepnet<float>(default_network_spec(BlockKind::Separable, 4, 8, 3));
    init_params(m, 4);
    SplitMix64 rng(4);
    const auto x = random_tensor<float>({1, 1, 8, 32, 32}, rng);
    Tensor<float> seed = Tensor<float>::full({1, 4, 8, 32, 32}, 1e-3f);
    for (auto _ : state) {
        Tape<float> t;
        const int p = model_forward_on_tape(m, t, t.constant(x));
        m.zero_grads();
        t.backward(p, seed);
        benchmark::DoNotOptimize(m.grads[0].data.data());
    }
}
BENCHMARK(BM_SepNetForwardBackward)->Unit(benchmark::kMillisecond);

}  // namespace
