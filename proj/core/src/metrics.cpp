#include "derm/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace derm::metrics {

ConfusionMatrix confusion_matrix(const std::vector<int>& pred,
                                 const std::vector<int>& truth, int k) {
    if (pred.size() != truth.size()) {
        throw std::runtime_error("confusion_matrix: pred/truth length mismatch");
    }
    if (pred.empty()) throw std::runtime_error("confusion_matrix: empty input");
    ConfusionMatrix cm(k);
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (truth[i] < 0 || truth[i] >= k || pred[i] < 0 || pred[i] >= k) {
            throw std::runtime_error("confusion_matrix: label out of range at sample " +
                                     std::to_string(i));
        }
        ++cm.at(truth[i], pred[i]);
    }
    return cm;
}

MetricsReport summarize(const ConfusionMatrix& cm, Averaging averaging,
                        std::vector<std::string>* warnings) {
    const std::uint64_t total = cm.total();
    if (cm.k <= 0 || total == 0) throw std::invalid_argument("summarize: empty confusion matrix");

    MetricsReport report;
    report.per_class.resize(cm.k);

    std::uint64_t trace = 0;
    std::uint64_t pool_tp = 0, pool_fn = 0, pool_tn = 0, pool_fp = 0;
    double sens_sum = 0.0, spec_sum = 0.0;
    int present = 0;

    for (int c = 0; c < cm.k; ++c) {
        std::uint64_t row = 0, col = 0;
        for (int j = 0; j < cm.k; ++j) {
            row += cm.at(c, j);
            col += cm.at(j, c);
        }
        const std::uint64_t tp = cm.at(c, c);
        const std::uint64_t fn = row - tp;
        const std::uint64_t fp = col - tp;
        const std::uint64_t tn = total - tp - fn - fp;
        trace += tp;

        auto& pc = report.per_class[c];
        pc.label = c;
        pc.present = row > 0;
        pc.spec = (tn + fp) > 0 ? static_cast<double>(tn) / static_cast<double>(tn + fp) : 0.0;
        if (pc.present) {
            pc.sens = static_cast<double>(tp) / static_cast<double>(tp + fn);
            sens_sum += pc.sens;
            spec_sum += pc.spec;
            pool_tp += tp;
            pool_fn += fn;
            pool_tn += tn;
            pool_fp += fp;
            ++present;
        } else if (warnings) {
            warnings->push_back("summarize: class " + std::to_string(c) +
                                " absent from truth, excluded from averages");
        }
    }

    // BACC is macro-averaged recall regardless of the SPEC/SENS averaging mode.
    report.bacc = sens_sum / present;
    if (averaging == Averaging::Macro) {
        report.sens = sens_sum / present;
        report.spec = spec_sum / present;
    } else {
        report.sens = static_cast<double>(pool_tp) / static_cast<double>(pool_tp + pool_fn);
        report.spec = static_cast<double>(pool_tn) / static_cast<double>(pool_tn + pool_fp);
    }
    report.accuracy = static_cast<double>(trace) / static_cast<double>(total);
    return report;
}

double roc_auc_binary(const std::vector<double>& scores, const std::vector<int>& truth) {
    if (scores.size() != truth.size() || scores.empty()) {
        throw std::invalid_argument("roc_auc_binary: bad input lengths");
    }
    std::size_t n_pos = 0;
    for (int t : truth) n_pos += t ? 1 : 0;
    const std::size_t n_neg = truth.size() - n_pos;
    if (n_pos == 0 || n_neg == 0) {
        throw std::invalid_argument("roc_auc_binary: both label values must be present");
    }

    // Rank-sum form of the Mann-Whitney statistic with midranks on ties.
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double midrank = 0.5 * static_cast<double>((i + 1) + (j + 1));
        for (std::size_t t = i; t <= j; ++t) {
            if (truth[order[t]]) rank_sum_pos += midrank;
        }
        i = j + 1;
    }
    const double u = rank_sum_pos - 0.5 * static_cast<double>(n_pos) * (n_pos + 1);
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

std::vector<std::pair<double, double>> roc_curve(const std::vector<double>& scores,
                                                 const std::vector<int>& truth) {
    if (scores.size() != truth.size() || scores.empty()) {
        throw std::invalid_argument("roc_curve: bad input lengths");
    }
    std::size_t n_pos = 0;
    for (int t : truth) n_pos += t ? 1 : 0;
    const std::size_t n_neg = truth.size() - n_pos;
    if (n_pos == 0 || n_neg == 0) {
        throw std::invalid_argument("roc_curve: both label values must be present");
    }

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    std::vector<std::pair<double, double>> points{{0.0, 0.0}};
    std::size_t tp = 0, fp = 0, i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
        for (std::size_t t = i; t <= j; ++t) {
            if (truth[order[t]]) ++tp;
            else ++fp;
        }
        points.emplace_back(static_cast<double>(fp) / n_neg, static_cast<double>(tp) / n_pos);
        i = j + 1;
    }
    return points;
}

double roc_auc_macro(const std::vector<double>& score_matrix, int k,
                     const std::vector<int>& truth,
                     std::vector<std::string>* warnings,
                     std::vector<PerClassMetrics>* per_class) {
    const std::size_t n = truth.size();
    if (k <= 0 || n == 0 || score_matrix.size() != n * static_cast<std::size_t>(k)) {
        throw std::invalid_argument("roc_auc_macro: bad score matrix shape");
    }
    std::vector<std::size_t> class_count(k, 0);
    for (int t : truth) {
        if (t < 0 || t >= k) throw std::invalid_argument("roc_auc_macro: label out of range");
        ++class_count[t];
    }
    int present = 0;
    for (auto c : class_count) present += c > 0 ? 1 : 0;
    if (present < 2) {
        throw std::invalid_argument("roc_auc_macro: fewer than 2 classes present");
    }

    double sum = 0.0;
    for (int c = 0; c < k; ++c) {
        if (class_count[c] == 0) {
            if (warnings) {
                warnings->push_back("roc_auc_macro: class " + std::to_string(c) +
                                    " absent from truth, skipped");
            }
            continue;
        }
        std::vector<double> scores(n);
        std::vector<int> binary(n);
        for (std::size_t i = 0; i < n; ++i) {
            scores[i] = score_matrix[i * k + c];
            binary[i] = truth[i] == c ? 1 : 0;
        }
        const double auc = roc_auc_binary(scores, binary);
        sum += auc;
        if (per_class && static_cast<int>(per_class->size()) == k) {
            (*per_class)[c].auc = auc;
        }
    }
    return sum / present;
}

}  // namespace derm::metrics
