#include "derm/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace fs = std::filesystem;

namespace derm::features {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kTiny = 1e-12;

// ---------------------------------------------------------------------------
// catalog
// ---------------------------------------------------------------------------

std::vector<CatalogEntry> build_catalog() {
    std::vector<CatalogEntry> entries;
    entries.reserve(kFeatureCount);
    auto add = [&](const std::string& name, Family fam, Channel ch) {
        entries.push_back({static_cast<int>(entries.size()), name, fam, ch});
    };

    const char* geometric[] = {
        "area_fraction", "perimeter_fraction", "compactness", "eccentricity",
        "major_axis_fraction", "minor_axis_fraction", "axis_ratio",
        "orientation_sin", "orientation_cos", "solidity", "extent",
        "equiv_diameter_fraction", "centroid_offset_x", "centroid_offset_y",
        "bbox_aspect", "bbox_diag_fraction",
        "hu1", "hu2", "hu3", "hu4", "hu5", "hu6", "hu7",
        "eta20", "eta11", "eta02", "eta30", "eta21", "eta12", "eta03",
        "radial_mean_frac", "radial_std_frac", "radial_min_frac", "radial_max_frac",
        "radial_max_min_ratio", "radial_cv", "radial_p25_frac", "radial_p75_frac",
        "asymmetry_major", "asymmetry_minor", "asymmetry_min", "asymmetry_mean",
        "border_irregularity", "hull_perimeter_fraction", "hull_area_fraction",
        "defect_area_fraction", "defect_depth_mean_frac", "defect_depth_max_frac",
        "defect_depth_std_frac", "defect_boundary_frac",
        "bbox_width_fraction", "bbox_height_fraction", "feret_diameter_frac",
        "radial_crossing_frac", "hole_area_fraction", "largest_component_fraction",
    };
    static_assert(sizeof(geometric) / sizeof(geometric[0]) == kGeometricCount);
    for (const char* name : geometric) add(name, Family::Geometric, Channel::None);

    const char* intensity[] = {
        "in_mean", "in_std", "in_min", "in_max", "in_median", "in_mad",
        "in_skewness", "in_kurtosis", "in_entropy32",
        "in_p10", "in_p25", "in_p75", "in_p90",
        "out_mean", "out_std", "out_min", "out_max", "out_median", "out_mad",
        "out_skewness", "out_kurtosis", "out_entropy32",
        "out_p10", "out_p25", "out_p75", "out_p90",
        "ctr_mean_diff", "ctr_median_diff", "ctr_mean_ratio", "ctr_michelson",
        "grad_mean", "grad_std", "grad_min", "grad_max", "grad_median", "grad_mad",
        "grad_p10", "grad_p25", "grad_p75", "grad_p90",
        "hist_bin0", "hist_bin1", "hist_bin2", "hist_bin3",
        "hist_bin4", "hist_bin5", "hist_bin6", "hist_bin7",
    };
    static_assert(sizeof(intensity) / sizeof(intensity[0]) == kIntensityPerChannel);
    const Channel channels[] = {Channel::R, Channel::G, Channel::B};
    const char* suffix[] = {"_R", "_G", "_B"};
    for (int c = 0; c < 3; ++c) {
        for (const char* name : intensity) {
            add(std::string(name) + suffix[c], Family::Intensity, channels[c]);
        }
    }
    return entries;
}

// ---------------------------------------------------------------------------
// mask geometry helpers
// ---------------------------------------------------------------------------

struct Point {
    int x = 0;
    int y = 0;
};

// 4-connected labeling; labels start at 1. Returns component sizes (index 0
// unused).
std::vector<std::size_t> label_components(const segmask::BinaryMask& mask,
                                          std::vector<int>& labels) {
    const int w = mask.width, h = mask.height;
    labels.assign(mask.values.size(), 0);
    std::vector<std::size_t> sizes{0};
    std::vector<int> stack;
    for (std::size_t start = 0; start < mask.values.size(); ++start) {
        if (!mask.values[start] || labels[start]) continue;
        const int label = static_cast<int>(sizes.size());
        sizes.push_back(0);
        stack.assign(1, static_cast<int>(start));
        labels[start] = label;
        while (!stack.empty()) {
            const int idx = stack.back();
            stack.pop_back();
            ++sizes[label];
            const int x = idx % w, y = idx / w;
            const int nbr[4] = {x > 0 ? idx - 1 : -1, x < w - 1 ? idx + 1 : -1,
                                y > 0 ? idx - w : -1, y < h - 1 ? idx + w : -1};
            for (int n : nbr) {
                if (n >= 0 && mask.values[n] && !labels[n]) {
                    labels[n] = label;
                    stack.push_back(n);
                }
            }
        }
    }
    return sizes;
}

// Outer-contour length of one 4-connected component via Moore-neighbor
// tracing; axial steps weigh 1, diagonal steps sqrt(2). Isolated pixels count
// as length 1 by convention.
double trace_perimeter(const std::vector<int>& labels, int w, int h, int comp,
                       int start_idx) {
    static const int dx[8] = {1, 1, 0, -1, -1, -1, 0, 1};   // E SE S SW W NW N NE
    static const int dy[8] = {0, 1, 1, 1, 0, -1, -1, -1};
    const double kSqrt2 = std::sqrt(2.0);

    auto same = [&](int x, int y) {
        return x >= 0 && x < w && y >= 0 && y < h && labels[y * w + x] == comp;
    };

    const int sx = start_idx % w, sy = start_idx / w;
    int cx = sx, cy = sy;
    int prev_dir = 4;  // the virtual backtrack pixel sits to the west
    double total = 0.0;
    int first_x = -1, first_y = -1, first_d = -1;

    const std::size_t guard = 8 * static_cast<std::size_t>(w) * h + 16;
    for (std::size_t iter = 0; iter < guard; ++iter) {
        int d = -1;
        for (int k = 1; k <= 8; ++k) {
            const int cand = (prev_dir + k) & 7;
            if (same(cx + dx[cand], cy + dy[cand])) {
                d = cand;
                break;
            }
        }
        if (d < 0) return 1.0;  // isolated pixel
        if (first_d < 0) {
            first_x = cx;
            first_y = cy;
            first_d = d;
        } else if (cx == first_x && cy == first_y && d == first_d) {
            return total;
        }
        total += (d & 1) ? kSqrt2 : 1.0;
        prev_dir = (d + 4) & 7;
        cx += dx[d];
        cy += dy[d];
    }
    return total;  // unreachable for well-formed masks
}

long long cross(const Point& o, const Point& a, const Point& b) {
    return static_cast<long long>(a.x - o.x) * (b.y - o.y) -
           static_cast<long long>(a.y - o.y) * (b.x - o.x);
}

// Andrew monotone chain; returns hull with counterclockwise signed area.
std::vector<Point> convex_hull(std::vector<Point> pts) {
    std::sort(pts.begin(), pts.end(), [](const Point& a, const Point& b) {
        return a.x != b.x ? a.x < b.x : a.y < b.y;
    });
    pts.erase(std::unique(pts.begin(), pts.end(),
                          [](const Point& a, const Point& b) { return a.x == b.x && a.y == b.y; }),
              pts.end());
    if (pts.size() < 3) return pts;

    std::vector<Point> hull(2 * pts.size());
    std::size_t k = 0;
    for (const auto& p : pts) {
        while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
        hull[k++] = p;
    }
    const std::size_t lower = k + 1;
    for (auto it = pts.rbegin() + 1; it != pts.rend(); ++it) {
        while (k >= lower && cross(hull[k - 2], hull[k - 1], *it) <= 0) --k;
        hull[k++] = *it;
    }
    hull.resize(k - 1);
    return hull;
}

bool inside_hull(const std::vector<Point>& hull, int px, int py) {
    if (hull.size() == 1) return hull[0].x == px && hull[0].y == py;
    if (hull.size() == 2) {
        const Point& a = hull[0];
        const Point& b = hull[1];
        if (cross(a, b, {px, py}) != 0) return false;
        return px >= std::min(a.x, b.x) && px <= std::max(a.x, b.x) &&
               py >= std::min(a.y, b.y) && py <= std::max(a.y, b.y);
    }
    for (std::size_t i = 0; i < hull.size(); ++i) {
        const Point& a = hull[i];
        const Point& b = hull[(i + 1) % hull.size()];
        if (cross(a, b, {px, py}) < 0) return false;
    }
    return true;
}

double polygon_perimeter(const std::vector<Point>& hull) {
    if (hull.size() < 2) return 1.0;  // matches the single-pixel trace convention
    if (hull.size() == 2) return 2.0 * std::hypot(hull[1].x - hull[0].x, hull[1].y - hull[0].y);
    double p = 0.0;
    for (std::size_t i = 0; i < hull.size(); ++i) {
        const Point& a = hull[i];
        const Point& b = hull[(i + 1) % hull.size()];
        p += std::hypot(b.x - a.x, b.y - a.y);
    }
    return p;
}

double point_segment_distance(double px, double py, const Point& a, const Point& b) {
    const double vx = b.x - a.x, vy = b.y - a.y;
    const double wx = px - a.x, wy = py - a.y;
    const double len2 = vx * vx + vy * vy;
    double t = len2 > 0.0 ? (wx * vx + wy * vy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    return std::hypot(px - (a.x + t * vx), py - (a.y + t * vy));
}

double hull_boundary_distance(const std::vector<Point>& hull, double px, double py) {
    if (hull.size() < 2) return 0.0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < hull.size(); ++i) {
        best = std::min(best, point_segment_distance(px, py, hull[i], hull[(i + 1) % hull.size()]));
    }
    return best;
}

segmask::BinaryMask dilate8(const segmask::BinaryMask& m) {
    segmask::BinaryMask out(m.width, m.height);
    for (int y = 0; y < m.height; ++y) {
        for (int x = 0; x < m.width; ++x) {
            std::uint8_t v = 0;
            for (int ddy = -1; ddy <= 1 && !v; ++ddy) {
                for (int ddx = -1; ddx <= 1 && !v; ++ddx) {
                    const int nx = x + ddx, ny = y + ddy;
                    if (nx >= 0 && nx < m.width && ny >= 0 && ny < m.height && m.at(nx, ny)) v = 1;
                }
            }
            out.at(x, y) = v;
        }
    }
    return out;
}

segmask::BinaryMask erode8(const segmask::BinaryMask& m) {
    segmask::BinaryMask out(m.width, m.height);
    for (int y = 0; y < m.height; ++y) {
        for (int x = 0; x < m.width; ++x) {
            std::uint8_t v = 1;
            for (int ddy = -1; ddy <= 1 && v; ++ddy) {
                for (int ddx = -1; ddx <= 1 && v; ++ddx) {
                    const int nx = x + ddx, ny = y + ddy;
                    if (nx < 0 || nx >= m.width || ny < 0 || ny >= m.height || !m.at(nx, ny)) v = 0;
                }
            }
            out.at(x, y) = v;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// statistics helpers
// ---------------------------------------------------------------------------

double percentile_sorted(const std::vector<double>& sorted, double q) {
    if (sorted.empty()) return 0.0;
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

struct DistStats {
    double mean = 0, std = 0, min = 0, max = 0, median = 0, mad = 0;
    double skew = 0, kurt = 0, entropy32 = 0;
    double p10 = 0, p25 = 0, p75 = 0, p90 = 0;
};

DistStats dist_stats(std::vector<double> v) {
    DistStats s;
    if (v.empty()) return s;
    const double n = static_cast<double>(v.size());
    s.mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
    double m2 = 0, m3 = 0, m4 = 0;
    for (double x : v) {
        const double d = x - s.mean;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    s.std = std::sqrt(m2);
    if (s.std > kTiny) {
        s.skew = m3 / (s.std * s.std * s.std);
        s.kurt = m4 / (m2 * m2);
    }

    double hist[32] = {};
    for (double x : v) {
        const int bin = std::min(31, static_cast<int>(std::clamp(x, 0.0, 1.0) * 32.0));
        hist[bin] += 1.0;
    }
    for (double c : hist) {
        if (c > 0.0) {
            const double p = c / n;
            s.entropy32 -= p * std::log(p);
        }
    }

    std::sort(v.begin(), v.end());
    s.min = v.front();
    s.max = v.back();
    s.median = percentile_sorted(v, 0.5);
    s.p10 = percentile_sorted(v, 0.10);
    s.p25 = percentile_sorted(v, 0.25);
    s.p75 = percentile_sorted(v, 0.75);
    s.p90 = percentile_sorted(v, 0.90);

    std::vector<double> dev(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) dev[i] = std::abs(v[i] - s.median);
    std::sort(dev.begin(), dev.end());
    s.mad = percentile_sorted(dev, 0.5);
    return s;
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

// ---------------------------------------------------------------------------
// public surface
// ---------------------------------------------------------------------------

const std::vector<CatalogEntry>& catalog() {
    static const std::vector<CatalogEntry> entries = build_catalog();
    return entries;
}

void save_catalog_csv(const fs::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write catalog: " + path.string());
    out << "# catalog_version=" << kCatalogVersion << "\n";
    out << "index,name,family,channel\n";
    for (const auto& e : catalog()) {
        const char* fam = e.family == Family::Geometric ? "geometric" : "intensity";
        const char* ch = e.channel == Channel::None ? "none"
                         : e.channel == Channel::R  ? "R"
                         : e.channel == Channel::G  ? "G"
                                                    : "B";
        out << e.index << ',' << e.name << ',' << fam << ',' << ch << '\n';
    }
}

FeatureVector extract_features(const imgproc::ImageRGB& img, const segmask::BinaryMask& mask) {
    if (img.width != mask.width || img.height != mask.height) {
        throw std::runtime_error("extract_features: image/mask dimension mismatch");
    }
    const int w = img.width, h = img.height;
    const double diag = std::hypot(static_cast<double>(w), static_cast<double>(h));

    std::vector<int> labels;
    const auto comp_sizes = label_components(mask, labels);
    std::size_t area = 0;
    for (std::size_t i = 1; i < comp_sizes.size(); ++i) area += comp_sizes[i];
    if (area == 0) throw std::runtime_error("extract_features: empty mask");

    FeatureVector fv;
    double* f = fv.values.data();

    // --- region scalars ------------------------------------------------
    int minx = w, maxx = -1, miny = h, maxy = -1;
    double sx = 0, sy = 0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (!mask.at(x, y)) continue;
            minx = std::min(minx, x);
            maxx = std::max(maxx, x);
            miny = std::min(miny, y);
            maxy = std::max(maxy, y);
            sx += x;
            sy += y;
        }
    }
    const double a = static_cast<double>(area);
    const double cx = sx / a, cy = sy / a;
    const double bbw = maxx - minx + 1, bbh = maxy - miny + 1;

    // central moments through order 3
    double mu20 = 0, mu11 = 0, mu02 = 0, mu30 = 0, mu21 = 0, mu12 = 0, mu03 = 0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (!mask.at(x, y)) continue;
            const double dx = x - cx, dy = y - cy;
            mu20 += dx * dx;
            mu11 += dx * dy;
            mu02 += dy * dy;
            mu30 += dx * dx * dx;
            mu21 += dx * dx * dy;
            mu12 += dx * dy * dy;
            mu03 += dy * dy * dy;
        }
    }

    // perimeter: sum of outer contours over 4-connected components
    double perimeter = 0.0;
    {
        std::vector<int> first_idx(comp_sizes.size(), -1);
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (labels[i] > 0 && first_idx[labels[i]] < 0) first_idx[labels[i]] = static_cast<int>(i);
        }
        for (std::size_t c = 1; c < comp_sizes.size(); ++c) {
            perimeter += trace_perimeter(labels, w, h, static_cast<int>(c), first_idx[c]);
        }
    }

    // boundary pixels (4-connected boundary)
    std::vector<Point> boundary;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (!mask.at(x, y)) continue;
            const bool edge = x == 0 || x == w - 1 || y == 0 || y == h - 1 ||
                              !mask.at(x - 1, y) || !mask.at(x + 1, y) ||
                              !mask.at(x, y - 1) || !mask.at(x, y + 1);
            if (edge) boundary.push_back({x, y});
        }
    }

    const auto hull = convex_hull(boundary);
    std::size_t hull_px = 0;
    for (int y = miny; y <= maxy; ++y) {
        for (int x = minx; x <= maxx; ++x) {
            if (inside_hull(hull, x, y)) ++hull_px;
        }
    }
    hull_px = std::max(hull_px, area);  // guards degenerate-hull rounding
    const double hull_perim = polygon_perimeter(hull);

    // principal axes from second central moments
    const double common = std::hypot(mu20 - mu02, 2.0 * mu11);
    const double lam1 = std::max(0.0, (mu20 + mu02 + common) / (2.0 * a));
    const double lam2 = std::max(0.0, (mu20 + mu02 - common) / (2.0 * a));
    const double major = 4.0 * std::sqrt(lam1);
    const double minor = 4.0 * std::sqrt(lam2);
    const double theta = 0.5 * std::atan2(2.0 * mu11, mu20 - mu02);

    f[0] = a / (static_cast<double>(w) * h);
    f[1] = perimeter / diag;
    f[2] = 4.0 * kPi * a / (perimeter * perimeter);
    f[3] = lam1 > 0.0 ? std::sqrt(std::max(0.0, 1.0 - lam2 / lam1)) : 0.0;
    f[4] = major / diag;
    f[5] = minor / diag;
    f[6] = major > kTiny ? minor / major : 0.0;
    f[7] = std::sin(theta);
    f[8] = std::cos(theta);
    f[9] = a / static_cast<double>(hull_px);
    f[10] = a / (bbw * bbh);
    f[11] = std::sqrt(4.0 * a / kPi) / diag;
    f[12] = (cx - (w - 1) * 0.5) / w;
    f[13] = (cy - (h - 1) * 0.5) / h;
    f[14] = bbw / bbh;
    f[15] = std::hypot(bbw, bbh) / diag;

    // --- moment invariants ----------------------------------------------
    const double n20 = mu20 / (a * a), n11 = mu11 / (a * a), n02 = mu02 / (a * a);
    const double p25 = std::pow(a, 2.5);
    const double n30 = mu30 / p25, n21 = mu21 / p25, n12 = mu12 / p25, n03 = mu03 / p25;
    {
        const double q30 = n30 + n12, q03 = n21 + n03;
        const double r30 = n30 - 3.0 * n12, r03 = 3.0 * n21 - n03;
        f[16] = n20 + n02;
        f[17] = (n20 - n02) * (n20 - n02) + 4.0 * n11 * n11;
        f[18] = r30 * r30 + r03 * r03;
        f[19] = q30 * q30 + q03 * q03;
        f[20] = r30 * q30 * (q30 * q30 - 3.0 * q03 * q03) +
                r03 * q03 * (3.0 * q30 * q30 - q03 * q03);
        f[21] = (n20 - n02) * (q30 * q30 - q03 * q03) + 4.0 * n11 * q30 * q03;
        f[22] = r03 * q30 * (q30 * q30 - 3.0 * q03 * q03) -
                r30 * q03 * (3.0 * q30 * q30 - q03 * q03);
    }
    f[23] = n20;
    f[24] = n11;
    f[25] = n02;
    f[26] = n30;
    f[27] = n21;
    f[28] = n12;
    f[29] = n03;

    // --- radial boundary-distance statistics -----------------------------
    {
        std::vector<double> r(boundary.size());
        for (std::size_t i = 0; i < boundary.size(); ++i) {
            r[i] = std::hypot(boundary[i].x - cx, boundary[i].y - cy);
        }
        const double n = static_cast<double>(r.size());
        const double mean = std::accumulate(r.begin(), r.end(), 0.0) / n;
        double var = 0.0;
        for (double v : r) var += (v - mean) * (v - mean);
        var /= n;
        const double sd = std::sqrt(var);
        std::vector<double> sorted = r;
        std::sort(sorted.begin(), sorted.end());
        f[30] = mean / diag;
        f[31] = sd / diag;
        f[32] = sorted.front() / diag;
        f[33] = sorted.back() / diag;
        f[34] = sorted.back() / std::max(sorted.front(), kTiny);
        f[35] = sd / std::max(mean, kTiny);
        f[36] = percentile_sorted(sorted, 0.25) / diag;
        f[37] = percentile_sorted(sorted, 0.75) / diag;

        // crossings of the centered radial sequence, boundary ordered by angle
        std::vector<std::size_t> order(boundary.size());
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
            const double ai = std::atan2(boundary[i].y - cy, boundary[i].x - cx);
            const double aj = std::atan2(boundary[j].y - cy, boundary[j].x - cx);
            return ai != aj ? ai < aj : r[i] < r[j];
        });
        std::size_t crossings = 0;
        for (std::size_t i = 0; i < order.size(); ++i) {
            const double cur = r[order[i]] - mean;
            const double nxt = r[order[(i + 1) % order.size()]] - mean;
            if ((cur >= 0.0) != (nxt >= 0.0)) ++crossings;
        }
        f[53] = static_cast<double>(crossings) / n;
    }

    // --- asymmetry about the principal axes ------------------------------
    {
        const double ct = std::cos(theta), st = std::sin(theta);
        std::size_t miss_major = 0, miss_minor = 0;
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                if (!mask.at(x, y)) continue;
                const double dx = x - cx, dy = y - cy;
                const double u = ct * dx + st * dy;
                const double v = -st * dx + ct * dy;
                // reflection across the major (u) axis
                const double mrx = cx + ct * u - st * (-v);
                const double mry = cy + st * u + ct * (-v);
                const int ix = static_cast<int>(std::lround(mrx));
                const int iy = static_cast<int>(std::lround(mry));
                if (ix < 0 || ix >= w || iy < 0 || iy >= h || !mask.at(ix, iy)) ++miss_major;
                // reflection across the minor (v) axis
                const double nrx = cx + ct * (-u) - st * v;
                const double nry = cy + st * (-u) + ct * v;
                const int jx = static_cast<int>(std::lround(nrx));
                const int jy = static_cast<int>(std::lround(nry));
                if (jx < 0 || jx >= w || jy < 0 || jy >= h || !mask.at(jx, jy)) ++miss_minor;
            }
        }
        f[38] = static_cast<double>(miss_major) / a;
        f[39] = static_cast<double>(miss_minor) / a;
        f[40] = std::min(f[38], f[39]);
        f[41] = 0.5 * (f[38] + f[39]);
    }

    // --- convexity / border ----------------------------------------------
    {
        std::vector<double> depth(boundary.size());
        for (std::size_t i = 0; i < boundary.size(); ++i) {
            depth[i] = hull_boundary_distance(hull, boundary[i].x, boundary[i].y);
        }
        const double n = static_cast<double>(depth.size());
        const double mean = std::accumulate(depth.begin(), depth.end(), 0.0) / n;
        double var = 0.0, mx = 0.0;
        std::size_t deep = 0;
        for (double d : depth) {
            var += (d - mean) * (d - mean);
            mx = std::max(mx, d);
            deep += d > 0.5 ? 1 : 0;
        }
        var /= n;
        f[42] = perimeter / std::max(hull_perim, kTiny);
        f[43] = hull_perim / diag;
        f[44] = static_cast<double>(hull_px) / (static_cast<double>(w) * h);
        f[45] = (static_cast<double>(hull_px) - a) / static_cast<double>(hull_px);
        f[46] = mean / diag;
        f[47] = mx / diag;
        f[48] = std::sqrt(var) / diag;
        f[49] = static_cast<double>(deep) / n;
    }

    // --- frame / misc ------------------------------------------------------
    {
        f[50] = bbw / w;
        f[51] = bbh / h;
        double feret = 0.0;
        for (std::size_t i = 0; i < hull.size(); ++i) {
            for (std::size_t j = i + 1; j < hull.size(); ++j) {
                feret = std::max(feret, std::hypot(static_cast<double>(hull[i].x - hull[j].x),
                                                   static_cast<double>(hull[i].y - hull[j].y)));
            }
        }
        f[52] = feret / diag;

        // hole area: background unreachable from the frame border
        segmask::BinaryMask inv(w, h);
        for (std::size_t i = 0; i < mask.values.size(); ++i) inv.values[i] = mask.values[i] ? 0 : 1;
        std::vector<int> bg_labels;
        label_components(inv, bg_labels);
        std::size_t filled = area;
        {
            std::vector<char> border_label(bg_labels.size() ? *std::max_element(bg_labels.begin(), bg_labels.end()) + 1 : 1, 0);
            for (int x = 0; x < w; ++x) {
                if (bg_labels[x] > 0) border_label[bg_labels[x]] = 1;
                if (bg_labels[(h - 1) * w + x] > 0) border_label[bg_labels[(h - 1) * w + x]] = 1;
            }
            for (int y = 0; y < h; ++y) {
                if (bg_labels[y * w] > 0) border_label[bg_labels[y * w]] = 1;
                if (bg_labels[y * w + w - 1] > 0) border_label[bg_labels[y * w + w - 1]] = 1;
            }
            for (std::size_t i = 0; i < bg_labels.size(); ++i) {
                if (bg_labels[i] > 0 && !border_label[bg_labels[i]]) ++filled;
            }
        }
        f[54] = (static_cast<double>(filled) - a) / static_cast<double>(filled);
        std::size_t largest = 0;
        for (std::size_t c = 1; c < comp_sizes.size(); ++c) largest = std::max(largest, comp_sizes[c]);
        f[55] = static_cast<double>(largest) / a;
    }

    // --- intensity family ---------------------------------------------------
    {
        // 5-pixel Chebyshev dilation minus erosion ring
        segmask::BinaryMask dil = mask, ero = mask;
        for (int i = 0; i < 5; ++i) {
            dil = dilate8(dil);
            ero = erode8(ero);
        }

        std::vector<double> inside, outside, band_grad;
        inside.reserve(area);
        for (int c = 0; c < 3; ++c) {
            inside.clear();
            outside.clear();
            band_grad.clear();
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < w; ++x) {
                    const double v = img.at(x, y, c);
                    if (mask.at(x, y)) inside.push_back(v);
                    else outside.push_back(v);
                    if (dil.at(x, y) && !ero.at(x, y)) {
                        const int xm = std::max(0, x - 1), xp = std::min(w - 1, x + 1);
                        const int ym = std::max(0, y - 1), yp = std::min(h - 1, y + 1);
                        const double gx = (img.at(xp, y, c) - img.at(xm, y, c)) * 0.5;
                        const double gy = (img.at(x, yp, c) - img.at(x, ym, c)) * 0.5;
                        band_grad.push_back(std::hypot(gx, gy));
                    }
                }
            }

            const DistStats in = dist_stats(inside);
            const DistStats out = dist_stats(outside);
            const DistStats gr = dist_stats(band_grad);
            double* g = f + kGeometricCount + c * kIntensityPerChannel;

            g[0] = in.mean;
            g[1] = in.std;
            g[2] = in.min;
            g[3] = in.max;
            g[4] = in.median;
            g[5] = in.mad;
            g[6] = in.skew;
            g[7] = in.kurt;
            g[8] = in.entropy32;
            g[9] = in.p10;
            g[10] = in.p25;
            g[11] = in.p75;
            g[12] = in.p90;
            g[13] = out.mean;
            g[14] = out.std;
            g[15] = out.min;
            g[16] = out.max;
            g[17] = out.median;
            g[18] = out.mad;
            g[19] = out.skew;
            g[20] = out.kurt;
            g[21] = out.entropy32;
            g[22] = out.p10;
            g[23] = out.p25;
            g[24] = out.p75;
            g[25] = out.p90;
            if (outside.empty()) {
                g[26] = g[27] = g[28] = g[29] = 0.0;
            } else {
                g[26] = in.mean - out.mean;
                g[27] = in.median - out.median;
                g[28] = in.mean / (out.mean + kTiny);
                g[29] = (in.mean - out.mean) / (in.mean + out.mean + kTiny);
            }
            g[30] = gr.mean;
            g[31] = gr.std;
            g[32] = gr.min;
            g[33] = gr.max;
            g[34] = gr.median;
            g[35] = gr.mad;
            g[36] = gr.p10;
            g[37] = gr.p25;
            g[38] = gr.p75;
            g[39] = gr.p90;

            double hist[8] = {};
            for (double v : inside) {
                ++hist[std::min(7, static_cast<int>(std::clamp(v, 0.0, 1.0) * 8.0))];
            }
            for (int b = 0; b < 8; ++b) g[40 + b] = hist[b] / a;
        }
    }

    for (double v : fv.values) {
        if (!std::isfinite(v)) throw std::runtime_error("extract_features: non-finite feature value");
    }
    return fv;
}

Standardizer fit_standardizer(const std::vector<FeatureVector>& table) {
    if (table.empty()) throw std::invalid_argument("fit_standardizer: empty table");
    const std::string& version = table[0].catalog_version;
    for (const auto& row : table) {
        if (row.catalog_version != version) {
            throw std::runtime_error("fit_standardizer: mixed catalog versions");
        }
    }
    Standardizer s;
    s.catalog_version = version;
    const double n = static_cast<double>(table.size());
    for (int j = 0; j < kFeatureCount; ++j) {
        double mean = 0.0;
        for (const auto& row : table) mean += row.values[j];
        mean /= n;
        double var = 0.0;
        for (const auto& row : table) {
            const double d = row.values[j] - mean;
            var += d * d;
        }
        const double sd = std::sqrt(var / n);
        s.means[j] = mean;
        s.scales[j] = sd < 1e-12 ? 1.0 : sd;
    }
    return s;
}

FeatureVector apply_standardizer(const Standardizer& s, const FeatureVector& v) {
    if (s.catalog_version != v.catalog_version) {
        throw std::runtime_error("apply_standardizer: catalog version mismatch (" +
                                 s.catalog_version + " vs " + v.catalog_version + ")");
    }
    FeatureVector out;
    out.catalog_version = v.catalog_version;
    for (int j = 0; j < kFeatureCount; ++j) {
        out.values[j] = (v.values[j] - s.means[j]) / s.scales[j];
    }
    return out;
}

void save_standardizer_csv(const Standardizer& s, const fs::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write standardizer: " + path.string());
    out << "# catalog_version=" << s.catalog_version << "\n";
    out << "index,mean,scale\n";
    for (int j = 0; j < kFeatureCount; ++j) {
        out << j << ',' << format_double(s.means[j]) << ',' << format_double(s.scales[j]) << '\n';
    }
}

Standardizer load_standardizer_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open standardizer: " + path.string());
    std::string line;
    if (!std::getline(in, line) || line.rfind("# catalog_version=", 0) != 0) {
        throw std::runtime_error("standardizer missing catalog version line: " + path.string());
    }
    Standardizer s;
    s.catalog_version = line.substr(std::string("# catalog_version=").size());
    std::getline(in, line);  // header
    int rows = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        int idx;
        double mean, scale;
        if (std::sscanf(line.c_str(), "%d,%lf,%lf", &idx, &mean, &scale) != 3 || idx < 0 ||
            idx >= kFeatureCount) {
            throw std::runtime_error("malformed standardizer row: " + line);
        }
        s.means[idx] = mean;
        s.scales[idx] = scale;
        ++rows;
    }
    if (rows != kFeatureCount) throw std::runtime_error("standardizer row count != 200");
    return s;
}

void save_feature_table(const fs::path& path, const std::vector<std::string>& sample_ids,
                        const std::vector<FeatureVector>& rows) {
    if (sample_ids.size() != rows.size()) {
        throw std::invalid_argument("save_feature_table: id/row count mismatch");
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write feature table: " + path.string());
    out << "# catalog_version=" << kCatalogVersion << "\n";
    out << "sample_id";
    for (int j = 0; j < kFeatureCount; ++j) {
        char buf[8];
        std::snprintf(buf, sizeof(buf), ",f%03d", j);
        out << buf;
    }
    out << '\n';
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out << sample_ids[i];
        for (int j = 0; j < kFeatureCount; ++j) out << ',' << format_double(rows[i].values[j]);
        out << '\n';
    }
    if (!out) throw std::runtime_error("failed writing feature table: " + path.string());
}

void load_feature_table(const fs::path& path, std::vector<std::string>& sample_ids,
                        std::vector<FeatureVector>& rows) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open feature table: " + path.string());
    std::string line;
    if (!std::getline(in, line) || line.rfind("# catalog_version=", 0) != 0) {
        throw std::runtime_error("feature table missing catalog version line");
    }
    const std::string version = line.substr(std::string("# catalog_version=").size());
    std::getline(in, line);  // header
    sample_ids.clear();
    rows.clear();
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string field;
        if (!std::getline(ss, field, ',')) continue;
        FeatureVector fv;
        fv.catalog_version = version;
        sample_ids.push_back(field);
        for (int j = 0; j < kFeatureCount; ++j) {
            if (!std::getline(ss, field, ',')) {
                throw std::runtime_error("feature table row too short: " + line);
            }
            fv.values[j] = std::stod(field);
        }
        rows.push_back(fv);
    }
}

}  // namespace derm::features
