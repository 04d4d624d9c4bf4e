#ifndef DERM_DATASET_HPP
#define DERM_DATASET_HPP

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace derm::dataset {

// The seven ISIC 2018 lesion categories. Ordinals are canonical and stable.
enum class ClassLabel : int {
    AKIEC = 0,  // Actinic keratosis
    BCC = 1,    // Basal cell carcinoma
    BKL = 2,    // Benign keratosis
    DF = 3,     // Dermatofibroma
    NV = 4,     // Melanocytic nevus
    MEL = 5,    // Melanoma
    VASC = 6,   // Vascular lesion
};

inline constexpr int kNumClasses = 7;
inline constexpr std::array<std::string_view, kNumClasses> kClassNames = {
    "AKIEC", "BCC", "BKL", "DF", "NV", "MEL", "VASC"};

ClassLabel parse_label(std::string_view text);  // throws on unknown label
std::string_view label_name(ClassLabel label);

struct SampleRecord {
    std::string sample_id;
    std::filesystem::path image_path;
    ClassLabel label = ClassLabel::AKIEC;
    std::optional<std::filesystem::path> mask_path;
    std::vector<std::filesystem::path> probmap_paths;
};

struct SplitRatios {
    double train_frac = 0.7;
    double test_frac = 0.3;
    double val_frac_of_train = 0.1;  // 0 disables the validation carve
};

struct SplitManifest {
    std::vector<SampleRecord> train;
    std::vector<SampleRecord> val;
    std::vector<SampleRecord> test;
    std::uint64_t seed = 0;
    SplitRatios ratios;
    // Per-class train counts before and after the validation carve; Table-2
    // style reporting uses the pre-carve numbers.
    std::array<std::size_t, kNumClasses> train_counts_pre_carve{};
    std::array<std::size_t, kNumClasses> train_counts_post_carve{};
};

// Reads a labels CSV with header `sample_id,label`; images are expected as
// `<sample_id>.png` under root and optional masks as `<sample_id>_mask.png`.
// Rows are preserved in file order. Missing image, unknown label, or
// duplicate sample_id are hard errors naming the offending row.
std::vector<SampleRecord> load_manifest(const std::filesystem::path& root,
                                        const std::filesystem::path& labels_file);

// Attaches `<sample_id>.png` or `<sample_id>.f32` probability maps found in
// each listed directory (one external segmentation model per directory).
void attach_probmaps(std::vector<SampleRecord>& records,
                     const std::vector<std::filesystem::path>& probmap_dirs);

// Per-class deterministic split. Train takes round-half-up(n_c * train_frac)
// of each class, test the remainder; the validation carve then takes
// round-half-up(train_c * val_frac_of_train) out of train. Membership within
// a class follows a permutation drawn from the pinned PRNG seeded by
// derive_seed(seed, class ordinal). Output lists preserve input record order.
SplitManifest stratified_split(const std::vector<SampleRecord>& records,
                               const SplitRatios& ratios, std::uint64_t seed);

// Round-half-up used by the split (80.5 -> 81). Exposed for tests.
std::size_t round_half_up(double x);

// Manifest persistence: UTF-8 CSV `sample_id,label,split`.
void save_manifest_csv(const SplitManifest& manifest, const std::filesystem::path& path);

// Split assignments read back from a manifest CSV, applied to `records`.
// Every manifest row must name a known sample_id.
SplitManifest apply_manifest_csv(const std::vector<SampleRecord>& records,
                                 const std::filesystem::path& path);

}  // namespace derm::dataset

#endif  // DERM_DATASET_HPP
