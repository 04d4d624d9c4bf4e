#include <benchmark/benchmark.h>

#include <cmath>

#include "derm/features.hpp"
#include "derm/rng.hpp"

namespace {

struct Scene {
    derm::imgproc::ImageRGB img;
    derm::segmask::BinaryMask mask;
};

Scene lesion_scene(int size) {
    Scene s{derm::imgproc::ImageRGB(size, size), derm::segmask::BinaryMask(size, size)};
    derm::Rng rng(7);
    const int cx = size / 2, cy = size / 2, r = size / 4;
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            const int dx = x - cx, dy = y - cy;
            const bool inside = dx * dx + dy * dy <= r * r;
            s.mask.at(x, y) = inside ? 1 : 0;
            for (int c = 0; c < 3; ++c) {
                s.img.at(x, y, c) = inside ? 0.3 + 0.1 * std::sin(0.5 * dx + 0.8 * dy)
                                           : 0.7 + 0.02 * rng.uniform();
            }
        }
    }
    return s;
}

void BM_ExtractFeatures224(benchmark::State& state) {
    const auto scene = lesion_scene(224);
    for (auto _ : state) {
        benchmark::DoNotOptimize(derm::features::extract_features(scene.img, scene.mask));
    }
}
BENCHMARK(BM_ExtractFeatures224);

void BM_ExtractFeatures64(benchmark::State& state) {
    const auto scene = lesion_scene(64);
    for (auto _ : state) {
        benchmark::DoNotOptimize(derm::features::extract_features(scene.img, scene.mask));
    }
}
BENCHMARK(BM_ExtractFeatures64);

}  // namespace
