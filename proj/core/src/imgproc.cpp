#include "derm/imgproc.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "derm/rng.hpp"

namespace derm::imgproc {

namespace {

constexpr double kPi = 3.14159265358979323846;

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

// Bilinear sample with edge-replicated (clamped) coordinates.
void sample_bilinear(const ImageRGB& img, double sx, double sy, double out[3]) {
    sx = std::clamp(sx, 0.0, static_cast<double>(img.width - 1));
    sy = std::clamp(sy, 0.0, static_cast<double>(img.height - 1));
    const int x0 = static_cast<int>(std::floor(sx));
    const int y0 = static_cast<int>(std::floor(sy));
    const int x1 = std::min(x0 + 1, img.width - 1);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double fx = sx - x0;
    const double fy = sy - y0;
    for (int c = 0; c < 3; ++c) {
        const double top = img.at(x0, y0, c) * (1.0 - fx) + img.at(x1, y0, c) * fx;
        const double bot = img.at(x0, y1, c) * (1.0 - fx) + img.at(x1, y1, c) * fx;
        out[c] = top * (1.0 - fy) + bot * fy;
    }
}

// Inverse-mapped affine warp: for each output pixel, dst->src coordinates are
// computed from the 2x3 matrix [a b tx; c d ty] applied to centered coords.
ImageRGB warp_affine(const ImageRGB& img, double a, double b, double c, double d) {
    ImageRGB out(img.width, img.height);
    const double cx = (img.width - 1) * 0.5;
    const double cy = (img.height - 1) * 0.5;
    double px[3];
    for (int y = 0; y < img.height; ++y) {
        const double dy = y - cy;
        for (int x = 0; x < img.width; ++x) {
            const double dx = x - cx;
            const double sx = cx + a * dx + b * dy;
            const double sy = cy + c * dx + d * dy;
            sample_bilinear(img, sx, sy, px);
            for (int ch = 0; ch < 3; ++ch) out.at(x, y, ch) = px[ch];
        }
    }
    return out;
}

void check_dims(const ImageRGB& img) {
    if (img.width < 1 || img.height < 1 ||
        img.pixels.size() != static_cast<std::size_t>(img.width) * img.height * 3) {
        throw std::invalid_argument("imgproc: malformed image");
    }
}

}  // namespace

void validate(const AugmentParams& p) {
    if (!(p.crop_lo > 0.0 && p.crop_lo <= p.crop_hi && p.crop_hi <= 1.0)) {
        throw std::invalid_argument("augment: crop fraction range must satisfy 0 < lo <= hi <= 1");
    }
    if (!(p.rot_lo >= 0.0 && p.rot_lo <= p.rot_hi && p.rot_hi <= 180.0)) {
        throw std::invalid_argument("augment: rotation range must lie within [0, 180] degrees");
    }
    if (!(p.shear_lo >= 0.0 && p.shear_lo <= p.shear_hi && p.shear_hi <= 30.0)) {
        throw std::invalid_argument("augment: shear range must lie within [0, 30] degrees");
    }
}

std::array<double, 3> shades_of_gray_gains(const ImageRGB& img, double p) {
    check_dims(img);
    if (p < 1.0) throw std::invalid_argument("shades_of_gray: p must be >= 1");

    const std::size_t n = img.pixel_count();
    double e[3] = {0.0, 0.0, 0.0};
    for (std::size_t i = 0; i < n; ++i) {
        for (int c = 0; c < 3; ++c) {
            e[c] += std::pow(img.pixels[i * 3 + c], p);
        }
    }
    for (double& v : e) v = std::pow(v / static_cast<double>(n), 1.0 / p);

    const double norm = std::sqrt(e[0] * e[0] + e[1] * e[1] + e[2] * e[2]);
    if (norm <= 0.0) throw std::runtime_error("shades_of_gray: degenerate illuminant");

    const double sqrt3 = std::sqrt(3.0);
    return {1.0 / (sqrt3 * e[0] / norm),
            1.0 / (sqrt3 * e[1] / norm),
            1.0 / (sqrt3 * e[2] / norm)};
}

ImageRGB shades_of_gray(const ImageRGB& img, double p) {
    const auto gain = shades_of_gray_gains(img, p);
    ImageRGB out(img.width, img.height);
    const std::size_t n = img.pixel_count();
    for (std::size_t i = 0; i < n; ++i) {
        for (int c = 0; c < 3; ++c) {
            out.pixels[i * 3 + c] = clamp01(img.pixels[i * 3 + c] * gain[c]);
        }
    }
    return out;
}

ImageRGB resize_bilinear(const ImageRGB& img, int out_w, int out_h) {
    check_dims(img);
    if (out_w < 1 || out_h < 1) {
        throw std::invalid_argument("resize_bilinear: target dimensions must be >= 1");
    }
    ImageRGB out(out_w, out_h);
    const double scale_x = static_cast<double>(img.width) / out_w;
    const double scale_y = static_cast<double>(img.height) / out_h;
    double px[3];
    for (int y = 0; y < out_h; ++y) {
        const double sy = (y + 0.5) * scale_y - 0.5;
        for (int x = 0; x < out_w; ++x) {
            const double sx = (x + 0.5) * scale_x - 0.5;
            sample_bilinear(img, sx, sy, px);
            for (int c = 0; c < 3; ++c) out.at(x, y, c) = px[c];
        }
    }
    return out;
}

ImageRGB augment(const ImageRGB& img, const AugmentParams& params) {
    check_dims(img);
    validate(params);
    if (img.width < 2 || img.height < 2) {
        throw std::invalid_argument("augment: image must be at least 2x2");
    }

    Rng rng(params.seed);

    // Draw order is fixed: crop fraction, crop offsets, rotation, flips, shear.
    const double frac = rng.uniform(params.crop_lo, params.crop_hi);
    const int cw = std::max(1, static_cast<int>(std::lround(frac * img.width)));
    const int ch = std::max(1, static_cast<int>(std::lround(frac * img.height)));
    const int ox = static_cast<int>(rng.below(static_cast<std::uint64_t>(img.width - cw + 1)));
    const int oy = static_cast<int>(rng.below(static_cast<std::uint64_t>(img.height - ch + 1)));

    const double rot_deg = rng.uniform(params.rot_lo, params.rot_hi);
    const bool hflip = params.allow_hflip && rng.bernoulli(0.5);
    const bool vflip = params.allow_vflip && rng.bernoulli(0.5);
    const double shear_deg = rng.uniform(params.shear_lo, params.shear_hi);

    ImageRGB cur(cw, ch);
    for (int y = 0; y < ch; ++y) {
        for (int x = 0; x < cw; ++x) {
            for (int c = 0; c < 3; ++c) cur.at(x, y, c) = img.at(x + ox, y + oy, c);
        }
    }

    if (rot_deg != 0.0) {
        // Content rotates by rot_deg CCW; the warp matrix is the inverse map.
        const double t = rot_deg * kPi / 180.0;
        cur = warp_affine(cur, std::cos(t), std::sin(t), -std::sin(t), std::cos(t));
    }

    if (hflip) {
        ImageRGB flipped(cur.width, cur.height);
        for (int y = 0; y < cur.height; ++y) {
            for (int x = 0; x < cur.width; ++x) {
                for (int c = 0; c < 3; ++c) {
                    flipped.at(x, y, c) = cur.at(cur.width - 1 - x, y, c);
                }
            }
        }
        cur = std::move(flipped);
    }
    if (vflip) {
        ImageRGB flipped(cur.width, cur.height);
        for (int y = 0; y < cur.height; ++y) {
            for (int x = 0; x < cur.width; ++x) {
                for (int c = 0; c < 3; ++c) {
                    flipped.at(x, y, c) = cur.at(x, cur.height - 1 - y, c);
                }
            }
        }
        cur = std::move(flipped);
    }

    if (shear_deg != 0.0) {
        // Horizontal shear about the center: src_x = x + tan(theta) * dy.
        cur = warp_affine(cur, 1.0, std::tan(shear_deg * kPi / 180.0), 0.0, 1.0);
    }

    if (cur.width != img.width || cur.height != img.height) {
        cur = resize_bilinear(cur, img.width, img.height);
    }
    return cur;
}

}  // namespace derm::imgproc
