#include <benchmark/benchmark.h>

#include "derm/hybridnet.hpp"
#include "derm/rng.hpp"

using namespace derm::hybridnet;

namespace {

struct Fixture {
    HybridModel model;
    derm::imgproc::ImageRGB img;
    derm::features::FeatureVector hand;

    Fixture() : img(64, 64) {
        HybridModelConfig cfg;  // default 16/32/64 at 64x64
        cfg.seed = 5;
        model = init_model(cfg);
        derm::Rng rng(6);
        for (auto& v : img.pixels) v = rng.uniform();
        for (auto& v : hand.values) v = rng.uniform(-1.0, 1.0);
    }
};

void BM_Forward64(benchmark::State& state) {
    const Fixture fx;
    for (auto _ : state) {
        benchmark::DoNotOptimize(forward(fx.model, fx.img, &fx.hand));
    }
}
BENCHMARK(BM_Forward64);

void BM_LossAndGradient64(benchmark::State& state) {
    const Fixture fx;
    std::vector<double> grad(fx.model.params.size(), 0.0);
    for (auto _ : state) {
        std::fill(grad.begin(), grad.end(), 0.0);
        benchmark::DoNotOptimize(loss_and_gradient(fx.model, fx.img, &fx.hand, 3, grad));
    }
}
BENCHMARK(BM_LossAndGradient64);

void BM_Embed64(benchmark::State& state) {
    const Fixture fx;
    for (auto _ : state) {
        benchmark::DoNotOptimize(embed(fx.model, fx.img, &fx.hand));
    }
}
BENCHMARK(BM_Embed64);

}  // namespace
