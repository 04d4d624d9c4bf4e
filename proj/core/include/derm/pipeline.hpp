#ifndef DERM_PIPELINE_HPP
#define DERM_PIPELINE_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "derm/dataset.hpp"
#include "derm/fusion.hpp"
#include "derm/hybridnet.hpp"
#include "derm/imgproc.hpp"
#include "derm/metrics.hpp"

namespace derm::pipeline {

// Flat `key = value` config (# comments). The documented key list ships in
// configs/example.conf.
struct PipelineConfig {
    std::filesystem::path data_root;
    std::filesystem::path labels_file;
    std::filesystem::path workdir;
    std::vector<std::filesystem::path> probmap_dirs;

    dataset::SplitRatios ratios;
    std::uint64_t split_seed = 0;
    // Final training may either honor the 90/10 validation carve or fold the
    // carve back in and train on the full 70%.
    bool train_on_val = false;

    double sog_p = 6.0;
    int input_size = 64;

    int augment_copies = 0;  // extra augmented copies per training image
    imgproc::AugmentParams aug;
    int tta_samples = 0;  // 0 = no test-time augmentation (default)

    double mask_threshold = 0.5;

    hybridnet::HybridModelConfig model_a;
    hybridnet::HybridModelConfig model_b;
    hybridnet::TrainConfig train_cfg;

    double svm_reg_c = 1.0;
    std::uint64_t svm_seed = 0;
    bool svm_grid = false;  // select reg_c over {0.01, 0.1, 1, 10} on the val carve
    bool svm_include_handcrafted = false;

    metrics::Averaging averaging = metrics::Averaging::Macro;
    bool write_roc = false;
};

PipelineConfig parse_config_text(const std::string& text);
// Reads the file, honors the DERM_HYBRID_WORKDIR environment override, and
// validates that referenced input paths exist.
PipelineConfig load_config(const std::filesystem::path& path);

// Re-derives every stage seed from one master seed (--seed flag).
void apply_master_seed(PipelineConfig& cfg, std::uint64_t master);

// Thrown by stages; `stage` names the failing pipeline stage for diagnostics.
struct StageError : std::runtime_error {
    std::string stage;
    StageError(std::string stage_name, const std::string& message)
        : std::runtime_error(message), stage(std::move(stage_name)) {}
};

struct ArtifactPaths {
    std::filesystem::path manifest, features, catalog, standardizer;
    std::filesystem::path model_a, model_b, history_a, history_b, svm, run_log;
    std::filesystem::path prep_dir, mask_dir;
};
ArtifactPaths artifact_paths(const PipelineConfig& cfg);

// Individually runnable stages. Each depends only on the artifacts of the
// stages before it and fails with a StageError naming anything missing.
void run_split(const PipelineConfig& cfg);
void run_prep(const PipelineConfig& cfg);
void run_features(const PipelineConfig& cfg);

// Full training pipeline: split -> prep -> masks -> features -> standardizer
// (train rows only) -> hybrid models A and B -> embeddings -> SVM. Writes
// manifest, feature table, standardizer, two checkpoints, the SVM model and a
// run log. In-progress artifacts carry a .partial suffix until complete.
void run_train_pipeline(const PipelineConfig& cfg);

struct EvalResult {
    metrics::MetricsReport report;
    metrics::ConfusionMatrix confusion{hybridnet::kNumClasses};
    std::filesystem::path metrics_csv;
    std::filesystem::path confusion_csv;
};
EvalResult run_evaluate(const PipelineConfig& cfg, const std::string& split);

struct PredictResult {
    int label = 0;
    std::string label_name;
    std::array<double, hybridnet::kNumClasses> scores{};
    bool mask_fallback = false;  // no mask source; an all-true mask was used
};
PredictResult predict_single(const PipelineConfig& cfg, const std::filesystem::path& image,
                             const std::optional<std::filesystem::path>& mask,
                             const std::vector<std::filesystem::path>& probmaps);

}  // namespace derm::pipeline

#endif  // DERM_PIPELINE_HPP
