#include "derm/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "derm/rng.hpp"

namespace derm::fusion {

namespace {

constexpr double kTol = 1e-6;

double binary_objective(const std::vector<std::vector<double>>& x, const std::vector<int>& y,
                        const std::vector<double>& w, double b, double lambda) {
    const std::size_t n = x.size();
    double hinge = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double score = b;
        for (std::size_t j = 0; j < w.size(); ++j) score += w[j] * x[i][j];
        hinge += std::max(0.0, 1.0 - y[i] * score);
    }
    double reg = 0.0;
    for (double v : w) reg += v * v;
    return 0.5 * lambda * reg + hinge / static_cast<double>(n);
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

ColumnScaler fit_column_scaler(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) throw std::invalid_argument("fit_column_scaler: empty input");
    const std::size_t dim = rows[0].size();
    ColumnScaler s;
    s.means.assign(dim, 0.0);
    s.scales.assign(dim, 1.0);
    const double n = static_cast<double>(rows.size());
    for (const auto& r : rows) {
        if (r.size() != dim) throw std::invalid_argument("fit_column_scaler: ragged rows");
        for (std::size_t j = 0; j < dim; ++j) s.means[j] += r[j];
    }
    for (double& m : s.means) m /= n;
    for (std::size_t j = 0; j < dim; ++j) {
        double var = 0.0;
        for (const auto& r : rows) {
            const double d = r[j] - s.means[j];
            var += d * d;
        }
        const double sd = std::sqrt(var / n);
        s.scales[j] = sd < 1e-12 ? 1.0 : sd;
    }
    return s;
}

std::vector<double> apply_column_scaler(const ColumnScaler& s, const std::vector<double>& row) {
    if (row.size() != s.means.size()) {
        throw std::invalid_argument("apply_column_scaler: dimension mismatch");
    }
    std::vector<double> out(row.size());
    for (std::size_t j = 0; j < row.size(); ++j) out[j] = (row[j] - s.means[j]) / s.scales[j];
    return out;
}

SvmModel fold_scaler(const SvmModel& m, const ColumnScaler& s) {
    if (static_cast<std::size_t>(m.dim) != s.means.size()) {
        throw std::invalid_argument("fold_scaler: dimension mismatch");
    }
    SvmModel out = m;
    for (int k = 0; k < m.k; ++k) {
        double shift = 0.0;
        for (int j = 0; j < m.dim; ++j) {
            const double wj = m.weights[static_cast<std::size_t>(k) * m.dim + j] / s.scales[j];
            out.weights[static_cast<std::size_t>(k) * m.dim + j] = wj;
            shift += wj * s.means[j];
        }
        out.biases[k] = m.biases[k] - shift;
    }
    return out;
}

SvmModel svm_fit(const std::vector<std::vector<double>>& embeddings,
                 const std::vector<int>& labels, double reg_c, std::uint64_t seed,
                 int max_epochs, std::vector<std::vector<double>>* objective_history) {
    if (embeddings.size() != labels.size()) {
        throw std::invalid_argument("svm_fit: embedding/label count mismatch");
    }
    if (embeddings.empty()) throw std::invalid_argument("svm_fit: empty input");
    if (reg_c <= 0.0) throw std::invalid_argument("svm_fit: reg_c must be positive");

    const std::size_t n = embeddings.size();
    const std::size_t dim = embeddings[0].size();
    for (const auto& e : embeddings) {
        if (e.size() != dim) throw std::invalid_argument("svm_fit: ragged embeddings");
    }
    std::vector<std::size_t> class_count(kNumClasses, 0);
    for (int l : labels) {
        if (l < 0 || l >= kNumClasses) throw std::invalid_argument("svm_fit: label out of range");
        ++class_count[l];
    }
    int distinct = 0;
    for (auto c : class_count) distinct += c > 0 ? 1 : 0;
    if (distinct < 2) throw std::invalid_argument("svm_fit: need at least 2 distinct labels");

    SvmModel model;
    model.k = kNumClasses;
    model.dim = static_cast<int>(dim);
    model.reg_c = reg_c;
    model.weights.assign(static_cast<std::size_t>(kNumClasses) * dim, 0.0);
    model.biases.assign(kNumClasses, 0.0);
    if (objective_history) objective_history->assign(kNumClasses, {});

    const double lambda = 1.0 / (reg_c * static_cast<double>(n));

    for (int cls = 0; cls < kNumClasses; ++cls) {
        std::vector<int> y(n);
        for (std::size_t i = 0; i < n; ++i) y[i] = labels[i] == cls ? 1 : -1;

        std::vector<double> w(dim, 0.0), best_w(dim, 0.0);
        double b = 0.0, best_b = 0.0;
        double best_obj = binary_objective(embeddings, y, w, b, lambda);
        if (objective_history) (*objective_history)[cls].push_back(best_obj);

        double eta = 1.0;
        std::vector<std::size_t> order(n);
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(cls)));
        int stall = 0;

        for (int epoch = 0; epoch < max_epochs && stall < 3 && eta > 1e-12;) {
            std::iota(order.begin(), order.end(), 0);
            rng.shuffle(order);

            // One stochastic pass from the best-known point.
            w = best_w;
            b = best_b;
            for (std::size_t t : order) {
                double score = b;
                const auto& x = embeddings[t];
                for (std::size_t j = 0; j < dim; ++j) score += w[j] * x[j];
                const double margin = y[t] * score;
                const double decay = 1.0 - eta * lambda;
                for (double& v : w) v *= decay;
                if (margin < 1.0) {
                    const double step = eta * y[t];
                    for (std::size_t j = 0; j < dim; ++j) w[j] += step * x[j];
                    b += step;
                }
            }

            const double obj = binary_objective(embeddings, y, w, b, lambda);
            if (obj <= best_obj) {
                stall = obj > best_obj - kTol ? stall + 1 : 0;
                best_obj = obj;
                best_w = w;
                best_b = b;
                if (objective_history) (*objective_history)[cls].push_back(best_obj);
                ++epoch;
            } else {
                eta *= 0.5;  // reject the pass, retry finer
            }
        }

        std::copy(best_w.begin(), best_w.end(),
                  model.weights.begin() + static_cast<std::size_t>(cls) * dim);
        model.biases[cls] = best_b;
    }
    return model;
}

std::pair<int, std::array<double, kNumClasses>> svm_predict(const SvmModel& m,
                                                            const std::vector<double>& x) {
    if (static_cast<int>(x.size()) != m.dim) {
        throw std::runtime_error("svm_predict: dimension mismatch");
    }
    std::array<double, kNumClasses> scores{};
    for (int k = 0; k < m.k; ++k) {
        double acc = m.biases[k];
        const double* row = m.weights.data() + static_cast<std::size_t>(k) * m.dim;
        for (int j = 0; j < m.dim; ++j) acc += row[j] * x[j];
        scores[k] = acc;
    }
    const int label = static_cast<int>(std::max_element(scores.begin(), scores.end()) -
                                       scores.begin());
    return {label, scores};
}

void save_svm_csv(const SvmModel& m, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write svm model: " + path.string());
    out << m.k << ',' << m.dim << ',' << format_double(m.reg_c) << '\n';
    for (int k = 0; k < m.k; ++k) {
        for (int j = 0; j < m.dim; ++j) {
            out << format_double(m.weights[static_cast<std::size_t>(k) * m.dim + j]) << ',';
        }
        out << format_double(m.biases[k]) << '\n';
    }
    if (!out) throw std::runtime_error("failed writing svm model: " + path.string());
}

SvmModel load_svm_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open svm model: " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty svm model file");
    SvmModel m;
    if (std::sscanf(line.c_str(), "%d,%d,%lf", &m.k, &m.dim, &m.reg_c) != 3 ||
        m.k != kNumClasses || m.dim <= 0) {
        throw std::runtime_error("bad svm model header: " + line);
    }
    m.weights.assign(static_cast<std::size_t>(m.k) * m.dim, 0.0);
    m.biases.assign(m.k, 0.0);
    for (int k = 0; k < m.k; ++k) {
        if (!std::getline(in, line)) throw std::runtime_error("svm model truncated");
        std::stringstream ss(line);
        std::string field;
        for (int j = 0; j <= m.dim; ++j) {
            if (!std::getline(ss, field, ',')) throw std::runtime_error("svm model row too short");
            const double v = std::stod(field);
            if (j < m.dim) m.weights[static_cast<std::size_t>(k) * m.dim + j] = v;
            else m.biases[k] = v;
        }
    }
    return m;
}

}  // namespace derm::fusion
