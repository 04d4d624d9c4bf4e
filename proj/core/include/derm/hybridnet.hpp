#ifndef DERM_HYBRIDNET_HPP
#define DERM_HYBRIDNET_HPP

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "derm/features.hpp"
#include "derm/imgproc.hpp"
#include "derm/segmask.hpp"

namespace derm::hybridnet {

inline constexpr int kNumClasses = 7;
inline constexpr int kInjectionDim = features::kFeatureCount;

// One conv stage: 3x3 kernel, padding 1, given stride, optional 2x2 average
// pool (stride 2) after the ReLU.
struct ConvBlockSpec {
    int out_channels = 16;
    int stride = 1;
    bool pool = true;
};

struct HybridModelConfig {
    int input_w = 64;
    int input_h = 64;
    std::vector<ConvBlockSpec> conv_blocks = {{16, 1, true}, {32, 1, true}, {64, 1, true}};
    int conv_embed_dim = 64;  // must equal the last block's out_channels
    int injection_dim = kInjectionDim;
    int fc_hidden = 64;
    int num_classes = kNumClasses;
    // The first FC layer always reserves conv_embed_dim + 200 inputs; with
    // injection disabled the 200 slots are fed zeros so the image-only
    // ablation shares the architecture.
    bool use_injection = true;
    std::uint64_t seed = 0;
};

// Flat parameter storage in registry order: per block conv weights
// [out][in][3][3] then biases [out], then fc1 weights [hidden][embed+200],
// fc1 biases, fc2 weights [7][hidden], fc2 biases.
struct HybridModel {
    HybridModelConfig config;
    std::vector<double> params;
};

struct TrainConfig {
    double learning_rate = 0.01;
    int epochs = 10;
    int batch_size = 16;
    double momentum = 0.9;
    std::uint64_t seed = 0;
    bool use_injection = true;
};

struct TrainSample {
    imgproc::ImageRGB image;
    features::FeatureVector hand;  // standardized by the caller
    int label = 0;
};

struct EpochStats {
    int epoch = 0;
    double train_loss = 0.0;
    // NaN when no validation set was supplied.
    double val_loss = 0.0;
    double val_bacc = 0.0;
};

struct TrainResult {
    HybridModel model;
    std::vector<EpochStats> history;
};

void validate_config(const HybridModelConfig& cfg);
std::size_t parameter_count(const HybridModelConfig& cfg);

// Offsets of the injection-facing fc1 weight columns within the flat
// parameter vector, used by the gradient checker.
std::vector<std::size_t> injection_facing_indices(const HybridModelConfig& cfg);

// Weights drawn from uniform(-sqrt(3/fan_in), sqrt(3/fan_in)) with the config
// seed; biases zero.
HybridModel init_model(const HybridModelConfig& cfg);

// Conv stack -> ReLU -> global average pool -> concat standardized 200-vector
// -> FC hidden ReLU -> 7 logits. `hand` must be present iff the model was
// built with use_injection.
std::array<double, kNumClasses> forward(const HybridModel& m, const imgproc::ImageRGB& img,
                                        const features::FeatureVector* hand);

// Post-ReLU activation of the hidden FC layer (penultimate representation).
std::vector<double> embed(const HybridModel& m, const imgproc::ImageRGB& img,
                          const features::FeatureVector* hand);

std::array<double, kNumClasses> softmax(const std::array<double, kNumClasses>& logits);

// -log softmax(logits)[label] with max-subtraction stabilization.
double cross_entropy(const std::array<double, kNumClasses>& logits, int label);

// Soft Dice loss 1 - (2*sum(p*g) + eps) / (sum(p) + sum(g) + eps).
double dice_loss(const segmask::ProbMap& pred, const segmask::BinaryMask& gt, double eps = 1.0);
// Analytic d(dice_loss)/d(pred), same layout as pred.
segmask::ProbMap dice_loss_grad(const segmask::ProbMap& pred, const segmask::BinaryMask& gt,
                                double eps = 1.0);

// Cross-entropy loss of one sample plus its gradient accumulated (+=) into
// `grad`, which must have parameter_count entries.
double loss_and_gradient(const HybridModel& m, const imgproc::ImageRGB& img,
                         const features::FeatureVector* hand, int label,
                         std::vector<double>& grad);

// Mini-batch SGD with momentum on mean cross-entropy; batch order reshuffled
// per epoch from tc.seed. Deterministic given (m, data, tc). When `val` is
// given, per-epoch validation loss and balanced accuracy are recorded.
TrainResult train(const HybridModel& m, const std::vector<TrainSample>& data,
                  const TrainConfig& tc, const std::vector<TrainSample>* val = nullptr);

// Smallest |pre-activation| across every ReLU input for the sample; callers
// resample the evaluation point when this is within ~10*eps of a kink.
double relu_margin(const HybridModel& m, const imgproc::ImageRGB& img,
                   const features::FeatureVector* hand);

// Central finite differences against the analytic gradient on a seeded
// coordinate subset (>= min_coords total, >= min_injection of them from the
// injection-facing fc1 columns). Returns the max relative error.
double gradient_check(const HybridModel& m, const imgproc::ImageRGB& img,
                      const features::FeatureVector* hand, int label, double eps,
                      std::uint64_t seed = 0, std::size_t min_coords = 200,
                      std::size_t min_injection = 50);

// Versioned little-endian checkpoint: magic "HYBN", format version, config
// block, parameters in registry order as 64-bit floats.
void save_model(const HybridModel& m, const std::filesystem::path& path);
HybridModel load_model(const std::filesystem::path& path);

void save_history_csv(const std::vector<EpochStats>& history, const std::filesystem::path& path);

}  // namespace derm::hybridnet

#endif  // DERM_HYBRIDNET_HPP
