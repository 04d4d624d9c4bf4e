#ifndef DERM_SEGMASK_HPP
#define DERM_SEGMASK_HPP

#include <cstdint>
#include <vector>

namespace derm::segmask {

// H x W per-pixel lesion probability in [0, 1].
struct ProbMap {
    int width = 0;
    int height = 0;
    std::vector<double> values;

    ProbMap() = default;
    ProbMap(int w, int h, double fill = 0.0)
        : width(w), height(h), values(static_cast<std::size_t>(w) * h, fill) {}

    double& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
    double at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
};

// H x W boolean lesion mask, 1 = lesion.
struct BinaryMask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> values;

    BinaryMask() = default;
    BinaryMask(int w, int h, bool fill = false)
        : width(w), height(h),
          values(static_cast<std::size_t>(w) * h, fill ? 1 : 0) {}

    std::uint8_t& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }

    std::size_t foreground_count() const {
        std::size_t n = 0;
        for (auto v : values) n += v ? 1 : 0;
        return n;
    }

    bool operator==(const BinaryMask&) const = default;
};

// Per-pixel arithmetic mean over an unweighted ensemble of probability maps.
ProbMap ensemble_average(const std::vector<ProbMap>& maps);

// Pixel is lesion iff value >= threshold.
BinaryMask binarize(const ProbMap& map, double threshold);

// Keeps the largest 4-connected foreground component and fills its interior
// holes. An all-background input degrades to an all-true mask; *warned (when
// non-null) is set in that case.
BinaryMask postprocess_mask(const BinaryMask& mask, bool* warned = nullptr);

// Sorensen-Dice coefficient 2|A n B| / (|A| + |B|); 1 when both masks are empty.
double dice(const BinaryMask& a, const BinaryMask& b);

}  // namespace derm::segmask

#endif  // DERM_SEGMASK_HPP
