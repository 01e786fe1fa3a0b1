#include <benchmark/benchmark.h>

#include "sepseg/rng.hpp"
#include "sepseg/transform.hpp"
#include "sepseg/volume.hpp"

namespace {

void BM_ApplyTransformVolume(benchmark::State& state) {
    const auto dims = sepseg::Dims3{16, 128, 128};
    std::vector<std::int16_t> data(static_cast<std::size_t>(dims.count()));
    sepseg::SplitMix64 rng(1);
    for (auto& v : data) v = static_cast<std::int16_t>(rng.next_below(3000)) - 1000;
    const auto vol = sepseg::make_volume(dims, {3, 1, 1}, sepseg::IntensityKind::HU, data);
    const auto t = sepseg::transform_preset("SLF1");
    for (auto _ : state) {
        auto out = sepseg::apply_transform(vol, t);
        benchmark::DoNotOptimize(out.f32().data());
    }
    state.SetItemsProcessed(state.iterations() * dims.count());
}
BENCHMARK(BM_ApplyTransformVolume)->Unit(benchmark::kMillisecond);

}  // namespace
