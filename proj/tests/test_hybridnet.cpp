#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "derm/hybridnet.hpp"
#include "derm/rng.hpp"
#include "test_util.hpp"

using namespace derm::hybridnet;
using derm::features::FeatureVector;
using derm::imgproc::ImageRGB;
using derm::segmask::BinaryMask;
using derm::segmask::ProbMap;

namespace {

HybridModelConfig tiny_config(std::uint64_t seed, bool injection = true) {
    HybridModelConfig cfg;
    cfg.input_w = 16;
    cfg.input_h = 16;
    cfg.conv_blocks = {{4, 1, true}, {8, 1, true}};
    cfg.conv_embed_dim = 8;
    cfg.fc_hidden = 12;
    cfg.use_injection = injection;
    cfg.seed = seed;
    return cfg;
}

ImageRGB random_image(int w, int h, std::uint64_t seed) {
    ImageRGB img(w, h);
    derm::Rng rng(seed);
    for (auto& v : img.pixels) v = rng.uniform();
    return img;
}

FeatureVector random_hand(std::uint64_t seed) {
    FeatureVector fv;
    derm::Rng rng(seed);
    for (auto& v : fv.values) v = rng.uniform(-1.5, 1.5);
    return fv;
}

}  // namespace

TEST_SUITE("hybridnet") {

TEST_CASE("init_model is seed-deterministic with zero biases") {
    const auto cfg = tiny_config(42);
    const auto a = init_model(cfg);
    const auto b = init_model(cfg);
    CHECK(a.params == b.params);
    CHECK(a.params.size() == parameter_count(cfg));

    auto cfg2 = cfg;
    cfg2.seed = 43;
    CHECK(init_model(cfg2).params != a.params);
}

TEST_CASE("first FC layer input width is conv_embed_dim + 200") {
    auto cfg = tiny_config(1);
    cfg.conv_blocks.back().out_channels = 128;
    cfg.conv_embed_dim = 128;
    const auto inj = injection_facing_indices(cfg);
    // one column slice of width 200 per hidden unit
    CHECK(inj.size() == static_cast<std::size_t>(cfg.fc_hidden) * 200);
    // The parameter layout spans (128 + 200) inputs per hidden unit.
    const std::size_t fc1_weights = static_cast<std::size_t>(cfg.fc_hidden) * (128 + 200);
    std::size_t conv = 0;
    int in_c = 3;
    for (const auto& blk : cfg.conv_blocks) {
        conv += static_cast<std::size_t>(blk.out_channels) * (in_c * 9 + 1);
        in_c = blk.out_channels;
    }
    const std::size_t fc2 = static_cast<std::size_t>(7) * cfg.fc_hidden + 7;
    CHECK(parameter_count(cfg) == conv + fc1_weights + cfg.fc_hidden + fc2);
}

TEST_CASE("config validation") {
    auto cfg = tiny_config(0);
    cfg.conv_blocks.clear();
    CHECK_THROWS_AS(init_model(cfg), std::invalid_argument);

    cfg = tiny_config(0);
    cfg.conv_embed_dim = 5;  // last block has 8 channels
    CHECK_THROWS_AS(init_model(cfg), std::invalid_argument);

    cfg = tiny_config(0);
    cfg.num_classes = 5;
    CHECK_THROWS_AS(init_model(cfg), std::invalid_argument);

    cfg = tiny_config(0);
    cfg.injection_dim = 100;
    CHECK_THROWS_AS(init_model(cfg), std::invalid_argument);
}

TEST_CASE("all-zero parameters map everything to zero logits") {
    auto m = init_model(tiny_config(7));
    std::fill(m.params.begin(), m.params.end(), 0.0);
    const auto hand = random_hand(1);
    const auto logits = forward(m, random_image(16, 16, 2), &hand);
    for (double v : logits) CHECK(v == 0.0);
    for (double v : embed(m, random_image(16, 16, 3), &hand)) CHECK(v == 0.0);
}

TEST_CASE("forward is deterministic and validates inputs") {
    const auto m = init_model(tiny_config(9));
    const auto img = random_image(16, 16, 4);
    const auto hand = random_hand(5);
    CHECK(forward(m, img, &hand) == forward(m, img, &hand));

    CHECK_THROWS_AS(forward(m, random_image(8, 8, 1), &hand), std::runtime_error);
    CHECK_THROWS_AS(forward(m, img, nullptr), std::runtime_error);

    const auto plain = init_model(tiny_config(9, false));
    CHECK_THROWS_AS(forward(plain, img, &hand), std::runtime_error);
    CHECK_NOTHROW(forward(plain, img, nullptr));
}

TEST_CASE("perturbing one injected feature changes the logits") {
    const auto m = init_model(tiny_config(31));
    const auto img = random_image(16, 16, 6);
    auto hand = random_hand(7);
    const auto base = forward(m, img, &hand);
    hand.values[0] += 0.5;
    const auto moved = forward(m, img, &hand);
    double delta = 0.0;
    for (int k = 0; k < kNumClasses; ++k) delta += std::abs(moved[k] - base[k]);
    CHECK(delta > 1e-8);
}

TEST_CASE("cross_entropy on the pinned values") {
    std::array<double, 7> uniform{};
    CHECK(cross_entropy(uniform, 3) == doctest::Approx(std::log(7.0)).epsilon(1e-12));
    CHECK(std::log(7.0) == doctest::Approx(1.945910149).epsilon(1e-9));

    std::array<double, 7> saturated{};
    saturated[0] = 100.0;
    CHECK(cross_entropy(saturated, 0) < 1e-8);

    // oracle = direct softmax evaluation: -log(e^0 / (e^1 + 6 e^0)) = ln(e + 6)
    std::array<double, 7> one{};
    one[0] = 1.0;
    const double oracle = std::log(std::exp(1.0) + 6.0);
    CHECK(cross_entropy(one, 1) == doctest::Approx(oracle).epsilon(1e-12));
    CHECK(oracle == doctest::Approx(2.165422180486).epsilon(1e-9));

    std::array<double, 7> bad{};
    bad[2] = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(cross_entropy(bad, 0), std::runtime_error);
    CHECK_THROWS_AS(cross_entropy(uniform, 9), std::invalid_argument);
}

TEST_CASE("softmax sums to one") {
    derm::Rng rng(1);
    for (int trial = 0; trial < 50; ++trial) {
        std::array<double, 7> logits;
        for (auto& v : logits) v = rng.uniform(-30.0, 30.0);
        const auto p = softmax(logits);
        double sum = 0.0;
        for (double v : p) {
            CHECK(v >= 0.0);
            sum += v;
        }
        CHECK(std::abs(sum - 1.0) < 1e-12);
    }
}

TEST_CASE("dice_loss pinned values") {
    BinaryMask gt(10, 10);
    for (int y = 0; y < 10; ++y) {
        for (int x = 0; x < 5; ++x) gt.at(x, y) = 1;
    }
    ProbMap perfect(10, 10);
    for (std::size_t i = 0; i < perfect.values.size(); ++i) {
        perfect.values[i] = gt.values[i] ? 1.0 : 0.0;
    }
    CHECK(dice_loss(perfect, gt) == doctest::Approx(0.0).epsilon(1e-15));

    BinaryMask big_gt(100, 100);
    for (int y = 0; y < 100; ++y) {
        for (int x = 0; x < 50; ++x) big_gt.at(x, y) = 1;
    }
    ProbMap miss(100, 100);
    for (std::size_t i = 0; i < miss.values.size(); ++i) {
        miss.values[i] = big_gt.values[i] ? 0.0 : 1.0;
    }
    CHECK(dice_loss(miss, big_gt) > 0.999);

    // all-0.5 prediction on half-covered frame: closed form
    const int n = 10 * 10;
    const double eps = 1.0;
    ProbMap half(10, 10, 0.5);
    const double expected = 1.0 - (0.5 * n + eps) / (n + eps);
    CHECK(dice_loss(half, gt, eps) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(expected == doctest::Approx(0.5).epsilon(0.02));

    CHECK_THROWS_AS(dice_loss(ProbMap(3, 3), BinaryMask(4, 3)), std::runtime_error);
}

TEST_CASE("dice_loss is within [0,1] and decreasing in the overlap") {
    derm::Rng rng(17);
    BinaryMask gt(8, 8);
    for (auto& v : gt.values) v = rng.bernoulli(0.5) ? 1 : 0;
    double prev = 2.0;
    for (double q : {0.0, 0.25, 0.5, 0.75, 1.0}) {
        // prediction q on the lesion, (1-q) outside keeps the marginal sum fixed
        ProbMap p(8, 8);
        for (std::size_t i = 0; i < p.values.size(); ++i) {
            p.values[i] = gt.values[i] ? q : 1.0 - q;
        }
        const double loss = dice_loss(p, gt);
        CHECK(loss >= 0.0);
        CHECK(loss <= 1.0);
        CHECK(loss < prev);
        prev = loss;
    }
}

TEST_CASE("dice_loss analytic gradient matches finite differences on a 4x4 map") {
    derm::Rng rng(23);
    BinaryMask gt(4, 4);
    ProbMap pred(4, 4);
    for (auto& v : gt.values) v = rng.bernoulli(0.5) ? 1 : 0;
    for (auto& v : pred.values) v = rng.uniform(0.05, 0.95);

    const auto analytic = dice_loss_grad(pred, gt);
    const double h = 1e-6;
    double max_err = 0.0;
    for (std::size_t i = 0; i < pred.values.size(); ++i) {
        ProbMap probe = pred;
        probe.values[i] = pred.values[i] + h;
        const double fp = dice_loss(probe, gt);
        probe.values[i] = pred.values[i] - h;
        const double fm = dice_loss(probe, gt);
        const double fd = (fp - fm) / (2.0 * h);
        max_err = std::max(max_err, std::abs(fd - analytic.values[i]) /
                                        std::max({std::abs(fd), std::abs(analytic.values[i]), 1e-8}));
    }
    CHECK(max_err < 1e-6);
}

TEST_CASE("gradient_check: near-linear model is exact to FD truncation") {
    // One block, all ReLU pre-activations positive: the map from parameters
    // to logits is locally linear, so only softmax curvature remains. The
    // fc2 rows are constant except the label row, which keeps every
    // backpropagated signal the same sign and every parameter gradient away
    // from the cancellation floor of the finite-difference probe.
    HybridModelConfig cfg;
    cfg.input_w = 8;
    cfg.input_h = 8;
    cfg.conv_blocks = {{4, 1, true}};
    cfg.conv_embed_dim = 4;
    cfg.fc_hidden = 6;
    cfg.seed = 3;
    auto m = init_model(cfg);
    for (auto& v : m.params) v = std::abs(v) * 0.2 + 0.05;  // positive weights

    const int label = 2;
    const std::size_t fc2_w = m.params.size() - (7 * cfg.fc_hidden + 7);
    for (int k = 0; k < 7; ++k) {
        for (int j = 0; j < cfg.fc_hidden; ++j) {
            m.params[fc2_w + static_cast<std::size_t>(k) * cfg.fc_hidden + j] =
                k == label ? 0.05 : 0.3;
        }
        m.params[m.params.size() - 7 + k] = 0.0;  // fc2 biases
    }

    ImageRGB img(8, 8);
    derm::Rng rng(5);
    for (auto& v : img.pixels) v = rng.uniform(0.2, 1.0);
    FeatureVector hand;
    for (auto& v : hand.values) v = rng.uniform(0.2, 0.6);  // positive injection

    REQUIRE(relu_margin(m, img, &hand) > 1e-3);
    CHECK(gradient_check(m, img, &hand, label, 5e-5, 1) < 1e-8);
}

TEST_CASE("gradient_check: full hybrid model under 1e-4") {
    for (std::uint64_t seed : {0ULL, 1ULL}) {
        const auto cfg = tiny_config(100 + seed);
        const auto m = init_model(cfg);
        auto img = random_image(16, 16, 200 + seed);
        auto hand = random_hand(300 + seed);
        std::uint64_t bump = 0;
        while (relu_margin(m, img, &hand) < 1e-4 && bump < 16) {
            img = random_image(16, 16, 400 + seed + ++bump);
            hand = random_hand(500 + seed + bump);
        }
        REQUIRE(relu_margin(m, img, &hand) >= 1e-4);
        const double err = gradient_check(m, img, &hand, static_cast<int>(seed % 7), 1e-5, seed);
        CHECK(err < 1e-4);
    }
}

TEST_CASE("gradient_check validates eps") {
    const auto m = init_model(tiny_config(1));
    const auto img = random_image(16, 16, 1);
    const auto hand = random_hand(1);
    CHECK_THROWS_AS(gradient_check(m, img, &hand, 0, 1e-8), std::invalid_argument);
    CHECK_THROWS_AS(gradient_check(m, img, &hand, 0, 1e-2), std::invalid_argument);
}

TEST_CASE("train with zero learning rate returns the input parameters") {
    const auto m = init_model(tiny_config(8));
    std::vector<TrainSample> data;
    for (int i = 0; i < 4; ++i) {
        data.push_back({random_image(16, 16, i), random_hand(i), i % 7});
    }
    TrainConfig tc;
    tc.learning_rate = 0.0;
    tc.epochs = 3;
    const auto result = train(m, data, tc);
    CHECK(result.model.params == m.params);
    CHECK(result.history.size() == 3);
}

TEST_CASE("train is deterministic per seed") {
    const auto m = init_model(tiny_config(12));
    std::vector<TrainSample> data;
    for (int i = 0; i < 8; ++i) {
        data.push_back({random_image(16, 16, 50 + i), random_hand(60 + i), i % 7});
    }
    TrainConfig tc;
    tc.epochs = 4;
    tc.batch_size = 3;
    tc.seed = 77;
    const auto r1 = train(m, data, tc);
    const auto r2 = train(m, data, tc);
    CHECK(r1.model.params == r2.model.params);
    REQUIRE(r1.history.size() == r2.history.size());
    for (std::size_t i = 0; i < r1.history.size(); ++i) {
        CHECK(r1.history[i].train_loss == r2.history[i].train_loss);
    }
}

TEST_CASE("train fits a linearly separable toy set") {
    // two classes encoded by mean brightness, 8x8 images
    HybridModelConfig cfg;
    cfg.input_w = 8;
    cfg.input_h = 8;
    cfg.conv_blocks = {{4, 1, true}};
    cfg.conv_embed_dim = 4;
    cfg.fc_hidden = 8;
    cfg.seed = 21;
    const auto m = init_model(cfg);

    std::vector<TrainSample> data;
    for (int i = 0; i < 8; ++i) {
        const int label = i % 2;
        ImageRGB img(8, 8, label == 0 ? 0.2 : 0.8);
        derm::Rng rng(i);
        for (auto& v : img.pixels) v += rng.uniform(-0.05, 0.05);
        FeatureVector hand;
        hand.values.fill(label == 0 ? -1.0 : 1.0);
        data.push_back({img, hand, label});
    }

    TrainConfig tc;
    tc.learning_rate = 0.05;
    tc.epochs = 200;
    tc.batch_size = 4;
    tc.seed = 9;
    const auto result = train(m, data, tc);

    int correct = 0;
    for (const auto& s : data) {
        const auto logits = forward(result.model, s.image, &s.hand);
        const int pred =
            static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
        correct += pred == s.label ? 1 : 0;
    }
    CHECK(correct == 8);
    CHECK(result.history.back().train_loss < result.history.front().train_loss);
}

TEST_CASE("train validates inputs") {
    const auto m = init_model(tiny_config(1));
    CHECK_THROWS_AS(train(m, {}, TrainConfig{}), std::invalid_argument);
    std::vector<TrainSample> data{{random_image(16, 16, 1), random_hand(1), 0}};
    TrainConfig tc;
    tc.use_injection = false;  // disagrees with the model
    CHECK_THROWS_AS(train(m, data, tc), std::invalid_argument);
    tc = TrainConfig{};
    tc.momentum = 1.0;
    CHECK_THROWS_AS(train(m, data, tc), std::invalid_argument);
}

TEST_CASE("embed returns the penultimate width") {
    const auto m = init_model(tiny_config(14));
    const auto hand = random_hand(2);
    const auto e = embed(m, random_image(16, 16, 3), &hand);
    CHECK(e.size() == 12);
    for (double v : e) CHECK(v >= 0.0);  // post-ReLU
}

TEST_CASE("checkpoint round trip preserves config and parameters") {
    derm::testutil::TempDir tmp("hybn");
    const auto m = init_model(tiny_config(99));
    const auto path = tmp.path() / "model.hybn";
    save_model(m, path);
    const auto back = load_model(path);
    CHECK(back.params == m.params);
    CHECK(back.config.fc_hidden == m.config.fc_hidden);
    CHECK(back.config.use_injection == m.config.use_injection);
    CHECK(back.config.conv_blocks.size() == m.config.conv_blocks.size());

    const auto img = random_image(16, 16, 5);
    const auto hand = random_hand(6);
    CHECK(forward(m, img, &hand) == forward(back, img, &hand));

    std::ofstream(tmp.path() / "junk.hybn") << "NOPE";
    CHECK_THROWS_AS(load_model(tmp.path() / "junk.hybn"), std::runtime_error);
}

TEST_CASE("history CSV carries the fixed header") {
    derm::testutil::TempDir tmp("hist");
    std::vector<EpochStats> h{{0, 1.5, 1.6, 0.3}, {1, 1.2, 1.4, 0.5}};
    save_history_csv(h, tmp.path() / "h.csv");
    const auto text = derm::testutil::read_file(tmp.path() / "h.csv");
    CHECK(text.find("epoch,train_loss,val_loss,val_bacc") == 0);
}

}  // TEST_SUITE
