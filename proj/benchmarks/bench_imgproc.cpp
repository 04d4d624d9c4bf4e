#include <benchmark/benchmark.h>

#include "derm/imgproc.hpp"
#include "derm/rng.hpp"

using namespace derm::imgproc;

namespace {

ImageRGB random_image(int size, std::uint64_t seed) {
    ImageRGB img(size, size);
    derm::Rng rng(seed);
    for (auto& v : img.pixels) v = rng.uniform();
    return img;
}

void BM_ShadesOfGray224(benchmark::State& state) {
    const auto img = random_image(224, 1);
    for (auto _ : state) {
        benchmark::DoNotOptimize(shades_of_gray(img, 6.0));
    }
}
BENCHMARK(BM_ShadesOfGray224);

void BM_ResizeBilinear448To224(benchmark::State& state) {
    const auto img = random_image(448, 2);
    for (auto _ : state) {
        benchmark::DoNotOptimize(resize_bilinear(img, 224, 224));
    }
}
BENCHMARK(BM_ResizeBilinear448To224);

void BM_Augment224(benchmark::State& state) {
    const auto img = random_image(224, 3);
    AugmentParams params;
    std::uint64_t seed = 0;
    for (auto _ : state) {
        params.seed = seed++;
        benchmark::DoNotOptimize(augment(img, params));
    }
}
BENCHMARK(BM_Augment224);

}  // namespace
