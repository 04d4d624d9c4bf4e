#ifndef DERM_FEATURES_HPP
#define DERM_FEATURES_HPP

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "derm/imgproc.hpp"
#include "derm/segmask.hpp"

namespace derm::features {

inline constexpr int kFeatureCount = 200;
inline constexpr int kGeometricCount = 56;
inline constexpr int kIntensityPerChannel = 48;
inline constexpr const char* kCatalogVersion = "derm-feat-v1";

enum class Family { Geometric, Intensity };
enum class Channel { None, R, G, B };

struct CatalogEntry {
    int index = 0;
    std::string name;
    Family family = Family::Geometric;
    Channel channel = Channel::None;
};

// The versioned feature registry: 56 mask-geometry entries followed by 48
// intensity entries for each of R, G, B (in that order). Extraction output
// order equals registry order.
const std::vector<CatalogEntry>& catalog();

// Registry persisted as CSV `index,name,family,channel` for auditability.
void save_catalog_csv(const std::filesystem::path& path);

struct FeatureVector {
    std::array<double, kFeatureCount> values{};
    std::string catalog_version = kCatalogVersion;
};

// Computes the catalog-ordered 200-vector from an RGB image and its lesion
// mask. The mask needs at least one foreground pixel (callers run the
// segmask fallback first) and must match the image dimensions.
FeatureVector extract_features(const imgproc::ImageRGB& img, const segmask::BinaryMask& mask);

struct Standardizer {
    std::array<double, kFeatureCount> means{};
    std::array<double, kFeatureCount> scales{};  // strictly positive
    std::string catalog_version = kCatalogVersion;
};

// Column means and population standard deviations; a column with std below
// 1e-12 keeps scale 1 so standardization stays total.
Standardizer fit_standardizer(const std::vector<FeatureVector>& table);

// (value - mean) / scale per column. Catalog versions must match.
FeatureVector apply_standardizer(const Standardizer& s, const FeatureVector& v);

void save_standardizer_csv(const Standardizer& s, const std::filesystem::path& path);
Standardizer load_standardizer_csv(const std::filesystem::path& path);

// Feature table: `sample_id,f000..f199` preceded by a comment line carrying
// the catalog version.
void save_feature_table(const std::filesystem::path& path,
                        const std::vector<std::string>& sample_ids,
                        const std::vector<FeatureVector>& rows);
void load_feature_table(const std::filesystem::path& path,
                        std::vector<std::string>& sample_ids,
                        std::vector<FeatureVector>& rows);

}  // namespace derm::features

#endif  // DERM_FEATURES_HPP
