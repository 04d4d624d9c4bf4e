#include "derm/segmask.hpp"

#include <stdexcept>
#include <string>

namespace derm::segmask {

namespace {

// 4-connected flood fill over `grid` positions equal to `match`, writing
// `label` into `labels`. Returns the component size.
std::size_t flood_fill(const std::vector<std::uint8_t>& grid, int width, int height,
                       std::vector<int>& labels, int start, int label, std::uint8_t match) {
    std::vector<int> stack{start};
    labels[start] = label;
    std::size_t size = 0;
    while (!stack.empty()) {
        const int idx = stack.back();
        stack.pop_back();
        ++size;
        const int x = idx % width;
        const int y = idx / width;
        const int nbr[4] = {x > 0 ? idx - 1 : -1, x < width - 1 ? idx + 1 : -1,
                            y > 0 ? idx - width : -1, y < height - 1 ? idx + width : -1};
        for (int n : nbr) {
            if (n >= 0 && labels[n] == 0 && grid[n] == match) {
                labels[n] = label;
                stack.push_back(n);
            }
        }
    }
    return size;
}

}  // namespace

ProbMap ensemble_average(const std::vector<ProbMap>& maps) {
    if (maps.empty()) throw std::invalid_argument("ensemble_average: empty map list");
    const int w = maps[0].width;
    const int h = maps[0].height;
    for (std::size_t i = 1; i < maps.size(); ++i) {
        if (maps[i].width != w || maps[i].height != h) {
            throw std::runtime_error("ensemble_average: dimension mismatch between maps 0 and " +
                                     std::to_string(i));
        }
    }
    ProbMap out(w, h);
    const double inv = 1.0 / static_cast<double>(maps.size());
    for (std::size_t px = 0; px < out.values.size(); ++px) {
        double sum = 0.0;
        for (const auto& m : maps) sum += m.values[px];
        out.values[px] = sum * inv;
    }
    return out;
}

BinaryMask binarize(const ProbMap& map, double threshold) {
    BinaryMask out(map.width, map.height);
    for (std::size_t i = 0; i < map.values.size(); ++i) {
        out.values[i] = map.values[i] >= threshold ? 1 : 0;
    }
    return out;
}

BinaryMask postprocess_mask(const BinaryMask& mask, bool* warned) {
    if (warned) *warned = false;
    const int w = mask.width;
    const int h = mask.height;
    const std::size_t n = mask.values.size();

    std::vector<int> labels(n, 0);
    int best_label = 0;
    std::size_t best_size = 0;
    int next_label = 1;
    for (std::size_t i = 0; i < n; ++i) {
        if (mask.values[i] && labels[i] == 0) {
            const std::size_t size =
                flood_fill(mask.values, w, h, labels, static_cast<int>(i), next_label, 1);
            if (size > best_size) {
                best_size = size;
                best_label = next_label;
            }
            ++next_label;
        }
    }

    if (best_label == 0) {
        if (warned) *warned = true;
        return BinaryMask(w, h, true);
    }

    BinaryMask out(w, h);
    for (std::size_t i = 0; i < n; ++i) {
        out.values[i] = labels[i] == best_label ? 1 : 0;
    }

    // Fill holes: background not reachable from the frame border is interior.
    std::vector<int> bg(n, 0);
    for (int x = 0; x < w; ++x) {
        for (int y : {0, h - 1}) {
            const int idx = y * w + x;
            if (!out.values[idx] && bg[idx] == 0) flood_fill(out.values, w, h, bg, idx, 1, 0);
        }
    }
    for (int y = 0; y < h; ++y) {
        for (int x : {0, w - 1}) {
            const int idx = y * w + x;
            if (!out.values[idx] && bg[idx] == 0) flood_fill(out.values, w, h, bg, idx, 1, 0);
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (!out.values[i] && bg[i] == 0) out.values[i] = 1;
    }
    return out;
}

double dice(const BinaryMask& a, const BinaryMask& b) {
    if (a.width != b.width || a.height != b.height) {
        throw std::runtime_error("dice: dimension mismatch");
    }
    std::size_t inter = 0, total = 0;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        const bool av = a.values[i] != 0;
        const bool bv = b.values[i] != 0;
        inter += (av && bv) ? 1 : 0;
        total += (av ? 1 : 0) + (bv ? 1 : 0);
    }
    if (total == 0) return 1.0;
    return 2.0 * static_cast<double>(inter) / static_cast<double>(total);
}

}  // namespace derm::segmask
