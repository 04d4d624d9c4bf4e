#ifndef DERM_IMGPROC_HPP
#define DERM_IMGPROC_HPP

#include <array>
#include <cstdint>
#include <vector>

namespace derm::imgproc {

// Row-major H x W x 3 image, components in [0, 1].
struct ImageRGB {
    int width = 0;
    int height = 0;
    std::vector<double> pixels;  // size = height * width * 3

    ImageRGB() = default;
    ImageRGB(int w, int h, double fill = 0.0)
        : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3, fill) {}

    double& at(int x, int y, int c) {
        return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
    }
    double at(int x, int y, int c) const {
        return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
    }
    std::size_t pixel_count() const {
        return static_cast<std::size_t>(width) * height;
    }
};

struct AugmentParams {
    // Crop fraction drawn uniformly from [crop_lo, crop_hi] subset of (0, 1].
    double crop_lo = 0.8;
    double crop_hi = 1.0;
    // Rotation angle in degrees drawn uniformly from [rot_lo, rot_hi], bounds
    // within [0, 180]. Setting lo == hi pins the angle.
    double rot_lo = 0.0;
    double rot_hi = 180.0;
    // Shear angle in degrees drawn uniformly from [shear_lo, shear_hi],
    // bounds within [0, 30].
    double shear_lo = 0.0;
    double shear_hi = 30.0;
    bool allow_hflip = true;
    bool allow_vflip = true;
    std::uint64_t seed = 0;
};

// Validates AugmentParams bounds; throws std::invalid_argument on violation.
void validate(const AugmentParams& params);

// Per-channel Minkowski-p illuminant gains: e_c = (mean I_c^p)^(1/p),
// e is L2-normalized, gain_c = 1 / (sqrt(3) * e_c). Exposed so callers can
// reason about the pre-clip linear map.
std::array<double, 3> shades_of_gray_gains(const ImageRGB& img, double p);

// Shades of Gray color constancy: applies the gains above and clips to [0,1].
ImageRGB shades_of_gray(const ImageRGB& img, double p);

// Bilinear resize with half-pixel-centered sampling and edge clamping.
ImageRGB resize_bilinear(const ImageRGB& img, int out_w, int out_h);

// Seeded augmentation: crop -> rotate -> flips -> shear, then resize back to
// the input dimensions. Geometric gaps are filled by edge replication. All
// randomness comes from params.seed; equal inputs give bit-identical outputs.
ImageRGB augment(const ImageRGB& img, const AugmentParams& params);

}  // namespace derm::imgproc

#endif  // DERM_IMGPROC_HPP
