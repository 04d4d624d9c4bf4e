#ifndef DERM_METRICS_HPP
#define DERM_METRICS_HPP

#include <cstdint>
#include <string>
#include <vector>

namespace derm::metrics {

// K x K counts, rows = true class, columns = predicted class.
struct ConfusionMatrix {
    int k = 0;
    std::vector<std::uint64_t> counts;  // row-major k*k

    explicit ConfusionMatrix(int classes = 0)
        : k(classes), counts(static_cast<std::size_t>(classes) * classes, 0) {}

    std::uint64_t& at(int truth, int pred) {
        return counts[static_cast<std::size_t>(truth) * k + pred];
    }
    std::uint64_t at(int truth, int pred) const {
        return counts[static_cast<std::size_t>(truth) * k + pred];
    }
    std::uint64_t total() const {
        std::uint64_t t = 0;
        for (auto c : counts) t += c;
        return t;
    }
};

struct PerClassMetrics {
    int label = 0;
    bool present = false;  // class appears in the truth column sums
    double sens = 0.0;
    double spec = 0.0;
    double auc = 0.0;
};

struct MetricsReport {
    double bacc = 0.0;
    double spec = 0.0;
    double sens = 0.0;
    double accuracy = 0.0;
    double auc = 0.0;  // filled by roc_auc_macro, not by summarize
    std::vector<PerClassMetrics> per_class;
};

enum class Averaging { Macro, Micro };

ConfusionMatrix confusion_matrix(const std::vector<int>& pred,
                                 const std::vector<int>& truth, int k);

// Derives one-vs-rest TP/TN/FP/FN per class. BACC is the mean of per-class
// sensitivity over classes present in the truth; SPEC and SENS are macro
// averages by default (micro pools the one-vs-rest counts). Accuracy is
// trace/total. Classes absent from the truth are excluded from averages and
// reported through `warnings` when given.
MetricsReport summarize(const ConfusionMatrix& cm, Averaging averaging = Averaging::Macro,
                        std::vector<std::string>* warnings = nullptr);

// Mann-Whitney AUC: over all (positive, negative) pairs, credit 1 when the
// positive scores higher, 0.5 on ties. Equals the trapezoidal ROC area.
double roc_auc_binary(const std::vector<double>& scores, const std::vector<int>& truth);

// Unweighted mean of per-class one-vs-rest binary AUC; classes absent from
// the truth are skipped with a warning. score_matrix is row-major N x k.
double roc_auc_macro(const std::vector<double>& score_matrix, int k,
                     const std::vector<int>& truth,
                     std::vector<std::string>* warnings = nullptr,
                     std::vector<PerClassMetrics>* per_class = nullptr);

// ROC curve points (fpr, tpr) at every distinct threshold, for export.
std::vector<std::pair<double, double>> roc_curve(const std::vector<double>& scores,
                                                 const std::vector<int>& truth);

}  // namespace derm::metrics

#endif  // DERM_METRICS_HPP
