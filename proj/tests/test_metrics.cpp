#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "derm/metrics.hpp"
#include "derm/rng.hpp"

using namespace derm::metrics;

namespace {

// Oracle: per-sample one-vs-rest TP/TN/FP/FN tallies straight from the label
// lists, no confusion matrix involved.
struct OracleCounts {
    std::uint64_t tp = 0, tn = 0, fp = 0, fn = 0;
};

std::vector<OracleCounts> oracle_counts(const std::vector<int>& pred,
                                        const std::vector<int>& truth, int k) {
    std::vector<OracleCounts> out(k);
    for (int c = 0; c < k; ++c) {
        for (std::size_t i = 0; i < pred.size(); ++i) {
            const bool is_pos = truth[i] == c;
            const bool said_pos = pred[i] == c;
            if (is_pos && said_pos) ++out[c].tp;
            else if (is_pos) ++out[c].fn;
            else if (said_pos) ++out[c].fp;
            else ++out[c].tn;
        }
    }
    return out;
}

// Oracle: Mann-Whitney by explicit pair counting with 0.5 tie credit.
double oracle_auc_pairs(const std::vector<double>& scores, const std::vector<int>& truth) {
    double credit = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (!truth[i]) continue;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (truth[j]) continue;
            ++pairs;
            if (scores[i] > scores[j]) credit += 1.0;
            else if (scores[i] == scores[j]) credit += 0.5;
        }
    }
    return credit / static_cast<double>(pairs);
}

// Oracle: trapezoidal area under the ROC curve.
double oracle_auc_trapezoid(const std::vector<double>& scores, const std::vector<int>& truth) {
    const auto pts = roc_curve(scores, truth);
    double area = 0.0;
    for (std::size_t i = 1; i < pts.size(); ++i) {
        area += (pts[i].first - pts[i - 1].first) * 0.5 * (pts[i].second + pts[i - 1].second);
    }
    return area;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("confusion_matrix tallies and errors") {
    const auto cm = confusion_matrix({0, 1, 1}, {0, 0, 1}, 2);
    CHECK(cm.at(0, 0) == 1);
    CHECK(cm.at(0, 1) == 1);
    CHECK(cm.at(1, 1) == 1);
    CHECK(cm.at(1, 0) == 0);
    CHECK(cm.total() == 3);

    CHECK_THROWS_AS(confusion_matrix({0}, {0, 1}, 2), std::runtime_error);
    CHECK_THROWS_AS(confusion_matrix({5}, {0}, 2), std::runtime_error);
    CHECK_THROWS_AS(confusion_matrix({}, {}, 2), std::runtime_error);
}

TEST_CASE("summarize on the hand-tallied binary example") {
    // TP=74 FN=26 TN=96 FP=4 with class 1 as positive
    std::vector<int> truth, pred;
    auto push = [&](int t, int p, int n) {
        for (int i = 0; i < n; ++i) {
            truth.push_back(t);
            pred.push_back(p);
        }
    };
    push(1, 1, 74);
    push(1, 0, 26);
    push(0, 0, 96);
    push(0, 1, 4);

    const auto report = summarize(confusion_matrix(pred, truth, 2));
    CHECK(report.per_class[1].sens == doctest::Approx(0.74).epsilon(1e-15));
    CHECK(report.per_class[1].spec == doctest::Approx(0.96).epsilon(1e-15));
    CHECK(report.bacc == doctest::Approx(0.85).epsilon(1e-15));
    CHECK(report.accuracy == doctest::Approx(0.85).epsilon(1e-15));
    // the K=2 identity: BACC from macro recall equals (SENS + SPEC)/2
    CHECK(report.bacc ==
          doctest::Approx((report.per_class[1].sens + report.per_class[1].spec) / 2.0));
}

TEST_CASE("summarize gives all ones on a perfect diagonal") {
    std::vector<int> labels;
    for (int c = 0; c < 7; ++c) {
        for (int i = 0; i <= c; ++i) labels.push_back(c);
    }
    const auto report = summarize(confusion_matrix(labels, labels, 7));
    CHECK(report.bacc == 1.0);
    CHECK(report.spec == 1.0);
    CHECK(report.sens == 1.0);
    CHECK(report.accuracy == 1.0);
}

TEST_CASE("summarize equals the per-sample oracle on random instances") {
    derm::Rng rng(123);
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 5 + static_cast<int>(rng.below(196));
        std::vector<int> truth(n), pred(n);
        for (int i = 0; i < n; ++i) {
            truth[i] = static_cast<int>(rng.below(7));
            pred[i] = static_cast<int>(rng.below(7));
        }
        const auto counts = oracle_counts(pred, truth, 7);
        const auto report = summarize(confusion_matrix(pred, truth, 7));

        double sens_sum = 0.0, spec_sum = 0.0;
        std::uint64_t trace = 0;
        int present = 0;
        for (int c = 0; c < 7; ++c) {
            trace += counts[c].tp;
            if (counts[c].tp + counts[c].fn == 0) continue;
            ++present;
            sens_sum += static_cast<double>(counts[c].tp) / (counts[c].tp + counts[c].fn);
            spec_sum += static_cast<double>(counts[c].tn) / (counts[c].tn + counts[c].fp);
        }
        CHECK(report.bacc == doctest::Approx(sens_sum / present).epsilon(1e-15));
        CHECK(report.sens == doctest::Approx(sens_sum / present).epsilon(1e-15));
        CHECK(report.spec == doctest::Approx(spec_sum / present).epsilon(1e-15));
        CHECK(report.accuracy == doctest::Approx(static_cast<double>(trace) / n).epsilon(1e-15));
    }
}

TEST_CASE("summarize micro pooling reduces sens to accuracy") {
    derm::Rng rng(77);
    std::vector<int> truth(50), pred(50);
    for (int i = 0; i < 50; ++i) {
        truth[i] = static_cast<int>(rng.below(7));
        pred[i] = static_cast<int>(rng.below(7));
    }
    const auto cm = confusion_matrix(pred, truth, 7);
    const auto micro = summarize(cm, Averaging::Micro);
    CHECK(micro.sens == doctest::Approx(micro.accuracy).epsilon(1e-12));
}

TEST_CASE("summarize warns about absent classes and errors on empty input") {
    std::vector<std::string> warnings;
    const auto cm = confusion_matrix({0, 1, 0}, {0, 1, 1}, 7);
    const auto report = summarize(cm, Averaging::Macro, &warnings);
    CHECK(warnings.size() == 5);  // classes 2..6 absent
    CHECK(report.bacc >= 0.0);
    CHECK_THROWS_AS(summarize(ConfusionMatrix(7)), std::invalid_argument);
}

TEST_CASE("roc_auc_binary on the listed examples") {
    CHECK(roc_auc_binary({0.9, 0.8, 0.3, 0.1}, {1, 1, 0, 0}) == 1.0);
    CHECK(roc_auc_binary({0.1, 0.2, 0.8, 0.9}, {1, 1, 0, 0}) == 0.0);
    // oracle: 3 of 4 (pos, neg) pairs rank correctly
    const std::vector<double> scores{0.9, 0.4, 0.6, 0.1};
    const std::vector<int> truth{1, 1, 0, 0};
    CHECK(oracle_auc_pairs(scores, truth) == doctest::Approx(0.75));
    CHECK(roc_auc_binary(scores, truth) == doctest::Approx(0.75).epsilon(1e-15));

    CHECK_THROWS_AS(roc_auc_binary({0.5, 0.4}, {1, 1}), std::invalid_argument);
}

TEST_CASE("pair counting equals trapezoidal ROC area within 1e-12") {
    derm::Rng rng(321);
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 4 + static_cast<int>(rng.below(47));
        std::vector<double> scores(n);
        std::vector<int> truth(n);
        bool has0 = false, has1 = false;
        for (int i = 0; i < n; ++i) {
            // quantized scores force ties
            scores[i] = static_cast<double>(rng.below(8)) / 8.0;
            truth[i] = rng.bernoulli(0.5) ? 1 : 0;
            (truth[i] ? has1 : has0) = true;
        }
        if (!has0 || !has1) {
            truth[0] = 0;
            truth[1] = 1;
        }
        const double pairs = oracle_auc_pairs(scores, truth);
        const double trap = oracle_auc_trapezoid(scores, truth);
        const double impl = roc_auc_binary(scores, truth);
        CHECK(std::abs(pairs - trap) < 1e-12);
        CHECK(std::abs(impl - pairs) < 1e-12);
    }
}

TEST_CASE("auc is invariant under strictly increasing score transforms") {
    derm::Rng rng(55);
    std::vector<double> scores(40);
    std::vector<int> truth(40);
    for (int i = 0; i < 40; ++i) {
        scores[i] = rng.uniform();
        truth[i] = rng.bernoulli(0.4) ? 1 : 0;
    }
    truth[0] = 0;
    truth[1] = 1;
    std::vector<double> warped(40);
    for (int i = 0; i < 40; ++i) warped[i] = std::exp(3.0 * scores[i]) + 7.0;
    CHECK(roc_auc_binary(scores, truth) ==
          doctest::Approx(roc_auc_binary(warped, truth)).epsilon(1e-15));
}

TEST_CASE("roc_auc_macro basics") {
    // two classes, binary AUCs 1.0 and 0.5 -> 0.75
    // class 0 scores perfectly ranked; class 1 scores constant (AUC 0.5)
    const std::vector<int> truth{0, 0, 1, 1};
    const std::vector<double> matrix{
        0.9, 0.5, 0.8, 0.5, 0.1, 0.5, 0.2, 0.5,
    };
    const double auc = roc_auc_macro(matrix, 2, truth);
    CHECK(auc == doctest::Approx(0.75).epsilon(1e-15));

    std::vector<std::string> warnings;
    std::vector<double> m7;
    std::vector<int> t7;
    derm::Rng rng(9);
    for (int i = 0; i < 30; ++i) {
        t7.push_back(static_cast<int>(rng.below(3)));  // classes 3..6 absent
        for (int c = 0; c < 7; ++c) m7.push_back(rng.uniform());
    }
    roc_auc_macro(m7, 7, t7, &warnings);
    CHECK(warnings.size() == 4);

    CHECK_THROWS_AS(roc_auc_macro({0.1, 0.9}, 2, {0}), std::invalid_argument);
}

TEST_CASE("roc_auc_macro sits near 0.5 for random scores") {
    derm::Rng rng(2024);
    const int n = 2000;
    std::vector<double> matrix(static_cast<std::size_t>(n) * 7);
    std::vector<int> truth(n);
    for (int i = 0; i < n; ++i) {
        truth[i] = static_cast<int>(rng.below(7));
        for (int c = 0; c < 7; ++c) matrix[i * 7 + c] = rng.uniform();
    }
    const double auc = roc_auc_macro(matrix, 7, truth);
    CHECK(auc > 0.45);
    CHECK(auc < 0.55);
}

}  // TEST_SUITE
