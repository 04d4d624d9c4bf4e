#include <benchmark/benchmark.h>

#include "derm/fusion.hpp"
#include "derm/metrics.hpp"
#include "derm/rng.hpp"

namespace {

void BM_RocAucBinary3004(benchmark::State& state) {
    derm::Rng rng(1);
    std::vector<double> scores(3004);
    std::vector<int> truth(3004);
    for (std::size_t i = 0; i < scores.size(); ++i) {
        scores[i] = rng.uniform();
        truth[i] = rng.bernoulli(0.3) ? 1 : 0;
    }
    truth[0] = 1;
    truth[1] = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(derm::metrics::roc_auc_binary(scores, truth));
    }
}
BENCHMARK(BM_RocAucBinary3004);

void BM_SummarizeK7(benchmark::State& state) {
    derm::Rng rng(2);
    std::vector<int> truth(3004), pred(3004);
    for (int i = 0; i < 3004; ++i) {
        truth[i] = static_cast<int>(rng.below(7));
        pred[i] = static_cast<int>(rng.below(7));
    }
    const auto cm = derm::metrics::confusion_matrix(pred, truth, 7);
    for (auto _ : state) {
        benchmark::DoNotOptimize(derm::metrics::summarize(cm));
    }
}
BENCHMARK(BM_SummarizeK7);

void BM_SvmFitBlobs(benchmark::State& state) {
    derm::Rng rng(3);
    std::vector<std::vector<double>> x;
    std::vector<int> y;
    for (int c = 0; c < 7; ++c) {
        for (int i = 0; i < 50; ++i) {
            x.push_back({c + 0.2 * rng.normal(), 0.2 * rng.normal(), 0.2 * rng.normal()});
            y.push_back(c);
        }
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(derm::fusion::svm_fit(x, y, 1.0, 9));
    }
}
BENCHMARK(BM_SvmFitBlobs);

}  // namespace
