#ifndef DERM_FUSION_HPP
#define DERM_FUSION_HPP

#include <array>
#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

namespace derm::fusion {

inline constexpr int kNumClasses = 7;

// Linear one-vs-rest SVM over concatenated penultimate embeddings.
struct SvmModel {
    int k = kNumClasses;
    int dim = 0;
    double reg_c = 1.0;
    std::vector<double> weights;  // k * dim, row-major
    std::vector<double> biases;   // k
};

// Per-column mean/std scaling for embedding matrices (the feature-table
// Standardizer is fixed at 200 columns, embeddings are not).
struct ColumnScaler {
    std::vector<double> means;
    std::vector<double> scales;
};

ColumnScaler fit_column_scaler(const std::vector<std::vector<double>>& rows);
std::vector<double> apply_column_scaler(const ColumnScaler& s, const std::vector<double>& row);

// Bakes the scaler into the model so the stored weights act on raw inputs:
// w'/s and b' = b - w . (m/s). Lets the model file stay self-contained.
SvmModel fold_scaler(const SvmModel& m, const ColumnScaler& s);

// One-vs-rest L2-regularized hinge loss, each binary problem solved by
// deterministic subgradient descent with seed-fixed shuffling. Epochs whose
// objective would increase are retried with a halved step, so the accepted
// objective sequence is non-increasing; fitting stops once the per-epoch
// improvement drops below 1e-6 or at the epoch cap. Inputs are expected
// standardized. `objective_history`, when given, receives the accepted
// objective values per class.
SvmModel svm_fit(const std::vector<std::vector<double>>& embeddings,
                 const std::vector<int>& labels, double reg_c, std::uint64_t seed,
                 int max_epochs = 500,
                 std::vector<std::vector<double>>* objective_history = nullptr);

// scores = Wx + b; predicted label is the argmax, lowest ordinal on ties.
std::pair<int, std::array<double, kNumClasses>> svm_predict(const SvmModel& m,
                                                            const std::vector<double>& x);

// Text model file: header `K,D,reg_c`, then K rows of D+1 reals (weights then bias).
void save_svm_csv(const SvmModel& m, const std::filesystem::path& path);
SvmModel load_svm_csv(const std::filesystem::path& path);

}  // namespace derm::fusion

#endif  // DERM_FUSION_HPP
