#include <benchmark/benchmark.h>

#include "sepseg/metrics.hpp"
#include "sepseg/rng.hpp"

namespace {

using namespace sepseg;

Mask random_mask(Dims3 dims, Spacing3 sp, std::uint64_t seed, double fill) {
    sepseg::SplitMix64 rng(seed);
    Mask m{dims, sp, std::vector<std::uint8_t>(static_cast<std::size_t>(dims.count()), 0)};
    for (auto& v : m.in) v = rng.next_double() < fill ? 1 : 0;
    m.in[0] = 1;
    return m;
}

void BM_Hd95DistanceTransform(benchmark::State& state) {
    const std::int64_t n = state.range(0);
    const Mask a = random_mask({n / 4, n, n}, {3, 1, 1}, 7, 0.25);
    const Mask b = random_mask({n / 4, n, n}, {3, 1, 1}, 8, 0.3);
    for (auto _ : state) {
        benchmark::DoNotOptimize(hd95(a, b));
    }
    state.SetItemsProcessed(state.iterations() * a.dims.count());
}
BENCHMARK(BM_Hd95DistanceTransform)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_Assd(benchmark::State& state) {
    const Mask a = random_mask({16, 64, 64}, {3, 1, 1}, 9, 0.25);
    const Mask b = random_mask({16, 64, 64}, {3, 1, 1}, 10, 0.3);
    for (auto _ : state) {
        benchmark::DoNotOptimize(assd(a, b));
    }
}
BENCHMARK(BM_Assd)->Unit(benchmark::kMillisecond);

}  // namespace
