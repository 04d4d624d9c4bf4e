#include "derm/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "derm/dataset.hpp"
#include "derm/imgproc.hpp"
#include "derm/io.hpp"
#include "derm/rng.hpp"
#include "derm/segmask.hpp"

namespace fs = std::filesystem;

namespace derm::synth {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Lesion palettes; background is skin-toned.
constexpr double kPalette[4][3] = {
    {0.52, 0.30, 0.24},  // brown
    {0.30, 0.44, 0.28},  // olive
    {0.28, 0.34, 0.56},  // blue-gray
    {0.52, 0.28, 0.50},  // violet
};

struct Blob {
    double cx, cy, radius, phase1, phase2;
    int freq1, freq2;
    double amp;
};

double blob_radius(const Blob& b, double angle) {
    return b.radius * (1.0 + b.amp * std::sin(b.freq1 * angle + b.phase1) +
                       0.5 * b.amp * std::sin(b.freq2 * angle + b.phase2));
}

}  // namespace

void generate_dataset(const fs::path& root, const SynthConfig& cfg) {
    if (cfg.samples_per_class < 1 || cfg.image_size < 16) {
        throw std::invalid_argument("generate_dataset: bad config");
    }
    fs::create_directories(root);
    if (cfg.write_probmaps) {
        fs::create_directories(root / "probmaps_a");
        fs::create_directories(root / "probmaps_b");
    }

    std::ofstream labels(root / "labels.csv", std::ios::trunc);
    if (!labels) throw std::runtime_error("cannot write labels.csv under " + root.string());
    labels << "sample_id,label\n";

    const int n = cfg.image_size;
    for (int cls = 0; cls < dataset::kNumClasses; ++cls) {
        const int palette = cls / 2;
        const bool wobbly = cls % 2 == 1;
        for (int s = 0; s < cfg.samples_per_class; ++s) {
            Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(cls) * 100000 + s));

            Blob blob;
            blob.radius = rng.uniform(0.16, 0.27) * n;
            blob.cx = rng.uniform(0.35, 0.65) * n;
            blob.cy = rng.uniform(0.35, 0.65) * n;
            blob.phase1 = rng.uniform(0.0, 2.0 * kPi);
            blob.phase2 = rng.uniform(0.0, 2.0 * kPi);
            // Shape cue: low-frequency gentle boundary vs high-frequency wobble.
            blob.freq1 = wobbly ? 5 + static_cast<int>(rng.below(3)) : 2;
            blob.freq2 = wobbly ? 8 + static_cast<int>(rng.below(4)) : 3;
            blob.amp = wobbly ? rng.uniform(0.16, 0.24) : rng.uniform(0.02, 0.05);

            double color[3];
            for (int c = 0; c < 3; ++c) {
                color[c] = kPalette[palette][c] + rng.uniform(-0.05, 0.05);
            }
            const double bg_base[3] = {0.76 + rng.uniform(-0.04, 0.04),
                                       0.62 + rng.uniform(-0.04, 0.04),
                                       0.55 + rng.uniform(-0.04, 0.04)};
            const double grad_x = rng.uniform(-0.06, 0.06);
            const double grad_y = rng.uniform(-0.06, 0.06);

            imgproc::ImageRGB img(n, n);
            segmask::BinaryMask mask(n, n);
            for (int y = 0; y < n; ++y) {
                for (int x = 0; x < n; ++x) {
                    const double dx = x - blob.cx, dy = y - blob.cy;
                    const double dist = std::hypot(dx, dy);
                    const double rim = blob_radius(blob, std::atan2(dy, dx));
                    const bool inside = dist <= rim;
                    mask.at(x, y) = inside ? 1 : 0;
                    // soft 1px edge so the lesion boundary is not aliased
                    const double t = std::clamp((rim - dist) + 0.5, 0.0, 1.0);
                    for (int c = 0; c < 3; ++c) {
                        const double bg = bg_base[c] + grad_x * (x / static_cast<double>(n) - 0.5) +
                                          grad_y * (y / static_cast<double>(n) - 0.5);
                        double v = bg * (1.0 - t) + color[c] * t;
                        v += rng.normal() * cfg.noise_std;
                        img.at(x, y, c) = std::clamp(v, 0.0, 1.0);
                    }
                }
            }

            char id[32];
            std::snprintf(id, sizeof(id), "syn%d_%04d", cls, s);
            io::write_image_png(root / (std::string(id) + ".png"), img);
            io::write_mask_png(root / (std::string(id) + "_mask.png"), mask);
            labels << id << ',' << dataset::label_name(static_cast<dataset::ClassLabel>(cls))
                   << '\n';

            if (cfg.write_probmaps) {
                // Two imperfect "external model" outputs around the truth.
                segmask::ProbMap pa(n, n), pb(n, n);
                for (int y = 0; y < n; ++y) {
                    for (int x = 0; x < n; ++x) {
                        const double g = mask.at(x, y) ? 1.0 : 0.0;
                        pa.at(x, y) = std::clamp(g * 0.9 + 0.05 + rng.normal() * 0.05, 0.0, 1.0);
                        pb.at(x, y) = std::clamp(g * 0.8 + 0.1 + rng.normal() * 0.08, 0.0, 1.0);
                    }
                }
                io::write_probmap_png(root / "probmaps_a" / (std::string(id) + ".png"), pa);
                io::write_probmap_f32(root / "probmaps_b" / (std::string(id) + ".f32"), pb);
            }
        }
    }
    if (!labels) throw std::runtime_error("failed writing labels.csv");
}

}  // namespace derm::synth
