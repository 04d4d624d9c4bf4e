#ifndef DERM_SYNTH_HPP
#define DERM_SYNTH_HPP

#include <cstdint>
#include <filesystem>

namespace derm::synth {

// Synthetic dermoscopy-style dataset where class identity depends jointly on
// a lesion color cue (4 palettes) and a mask-shape cue (smooth vs wobbly
// boundary): class c uses palette c/2 and shape c%2. Neither cue alone
// identifies all 7 classes, which is what the injection ablation exercises.
struct SynthConfig {
    int samples_per_class = 100;
    int image_size = 64;
    std::uint64_t seed = 0;
    double noise_std = 0.04;
    // When set, two probability-map directories are emitted (one PNG-backed,
    // one f32-backed) to exercise the segmentation-ensemble path.
    bool write_probmaps = false;
};

// Writes `<id>.png`, `<id>_mask.png`, `labels.csv` (and optionally
// `probmaps_a/`, `probmaps_b/`) under root.
void generate_dataset(const std::filesystem::path& root, const SynthConfig& cfg);

}  // namespace derm::synth

#endif  // DERM_SYNTH_HPP
