#include <doctest.h>

#include <cmath>
#include <set>
#include <stdexcept>

#include "derm/features.hpp"
#include "derm/rng.hpp"
#include "test_util.hpp"

using namespace derm::features;
using derm::imgproc::ImageRGB;
using derm::segmask::BinaryMask;

namespace {

struct Scene {
    ImageRGB img;
    BinaryMask mask;
};

// Blob with a patterned interior on a uniform background; translating the
// whole scene keeps every pixel multiset identical.
Scene blob_scene(int size, int cx, int cy, int r, std::uint64_t seed) {
    Scene s{ImageRGB(size, size), BinaryMask(size, size)};
    derm::Rng rng(seed);
    const double bg[3] = {0.7, 0.6, 0.5};
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            for (int c = 0; c < 3; ++c) s.img.at(x, y, c) = bg[c];
        }
    }
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            const int dx = x - cx, dy = y - cy;
            if (dx * dx + dy * dy <= r * r) {
                s.mask.at(x, y) = 1;
                // deterministic position-anchored texture
                for (int c = 0; c < 3; ++c) {
                    s.img.at(x, y, c) =
                        0.2 + 0.1 * c + 0.15 * std::sin(0.9 * dx + 1.3 * dy + c);
                }
            }
        }
    }
    return s;
}

Scene translate_scene(const Scene& s, int tx, int ty) {
    const int size = s.img.width;
    Scene out{ImageRGB(size, size), BinaryMask(size, size)};
    const double bg[3] = {0.7, 0.6, 0.5};  // bit-identical to blob_scene's fill
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            for (int c = 0; c < 3; ++c) out.img.at(x, y, c) = bg[c];
        }
    }
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            const int nx = x + tx, ny = y + ty;
            if (nx < 0 || nx >= size || ny < 0 || ny >= size) continue;
            out.mask.at(nx, ny) = s.mask.at(x, y);
            for (int c = 0; c < 3; ++c) out.img.at(nx, ny, c) = s.img.at(x, y, c);
        }
    }
    return out;
}

Scene rotate90_scene(const Scene& s) {
    const int size = s.img.width;
    Scene out{ImageRGB(size, size), BinaryMask(size, size)};
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            // (x, y) -> (size-1-y, x)
            out.mask.at(size - 1 - y, x) = s.mask.at(x, y);
            for (int c = 0; c < 3; ++c) out.img.at(size - 1 - y, x, c) = s.img.at(x, y, c);
        }
    }
    return out;
}

int index_of(const std::string& name) {
    for (const auto& e : catalog()) {
        if (e.name == name) return e.index;
    }
    REQUIRE_MESSAGE(false, "feature not found: " << name);
    return -1;
}

}  // namespace

TEST_SUITE("features") {

TEST_CASE("registry enumerates exactly 56 + 3x48 = 200 unique entries") {
    const auto& cat = catalog();
    REQUIRE(cat.size() == 200);
    int geometric = 0, r = 0, g = 0, b = 0;
    std::set<std::string> names;
    for (std::size_t i = 0; i < cat.size(); ++i) {
        CHECK(cat[i].index == static_cast<int>(i));
        names.insert(cat[i].name);
        if (cat[i].family == Family::Geometric) {
            ++geometric;
            CHECK(cat[i].channel == Channel::None);
        } else {
            if (cat[i].channel == Channel::R) ++r;
            if (cat[i].channel == Channel::G) ++g;
            if (cat[i].channel == Channel::B) ++b;
        }
    }
    CHECK(geometric == 56);
    CHECK(r == 48);
    CHECK(g == 48);
    CHECK(b == 48);
    CHECK(names.size() == 200);
}

TEST_CASE("catalog CSV is written with the version header") {
    derm::testutil::TempDir tmp("feat_cat");
    save_catalog_csv(tmp.path() / "catalog.csv");
    const auto text = derm::testutil::read_file(tmp.path() / "catalog.csv");
    CHECK(text.find("# catalog_version=derm-feat-v1") == 0);
    CHECK(text.find("index,name,family,channel") != std::string::npos);
    CHECK(text.find("compactness,geometric,none") != std::string::npos);
    CHECK(text.find("in_mean_R,intensity,R") != std::string::npos);
}

TEST_CASE("constant image with all-true mask pins the inside statistics") {
    const double v = 0.37;
    ImageRGB img(16, 16);
    for (auto& p : img.pixels) p = v;
    BinaryMask mask(16, 16, true);
    const auto fv = extract_features(img, mask);
    REQUIRE(fv.values.size() == 200);
    for (double x : fv.values) CHECK(std::isfinite(x));
    for (const char* ch : {"_R", "_G", "_B"}) {
        CHECK(fv.values[index_of(std::string("in_mean") + ch)] == doctest::Approx(v));
        CHECK(fv.values[index_of(std::string("in_std") + ch)] == doctest::Approx(0.0));
        CHECK(fv.values[index_of(std::string("in_median") + ch)] == doctest::Approx(v));
    }
    CHECK(fv.values[index_of("area_fraction")] == doctest::Approx(1.0));
}

TEST_CASE("rasterized disk of radius 30 has near-circular compactness") {
    const int size = 224, r = 30, cx = 112, cy = 112;
    const auto scene = blob_scene(size, cx, cy, r, 1);

    // oracle: brute-force pixel count of the same raster
    std::size_t area = 0;
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            const int dx = x - cx, dy = y - cy;
            if (dx * dx + dy * dy <= r * r) ++area;
        }
    }
    const auto fv = extract_features(scene.img, scene.mask);
    CHECK(fv.values[index_of("area_fraction")] ==
          doctest::Approx(static_cast<double>(area) / (size * size)).epsilon(1e-12));

    const double compactness = fv.values[index_of("compactness")];
    CHECK(compactness >= 0.9);
    CHECK(compactness <= 1.05);
    CHECK(fv.values[index_of("solidity")] > 0.95);
    CHECK(fv.values[index_of("eccentricity")] < 0.2);
}

TEST_CASE("translation moves only the centroid offsets") {
    const auto base = blob_scene(64, 26, 30, 11, 2);
    const int tx = 3, ty = -2;
    const auto moved = translate_scene(base, tx, ty);

    const auto f0 = extract_features(base.img, base.mask);
    const auto f1 = extract_features(moved.img, moved.mask);

    const int ox = index_of("centroid_offset_x");
    const int oy = index_of("centroid_offset_y");
    CHECK(f1.values[ox] - f0.values[ox] == doctest::Approx(tx / 64.0).epsilon(1e-12));
    CHECK(f1.values[oy] - f0.values[oy] == doctest::Approx(ty / 64.0).epsilon(1e-12));
    for (int j = 0; j < kFeatureCount; ++j) {
        if (j == ox || j == oy) continue;
        INFO("feature ", catalog()[j].name);
        CHECK(std::abs(f1.values[j] - f0.values[j]) < 1e-9);
    }
}

TEST_CASE("90 degree rotation preserves the lattice-exact invariants") {
    const auto base = blob_scene(64, 25, 33, 12, 3);
    const auto rotated = rotate90_scene(base);
    const auto f0 = extract_features(base.img, base.mask);
    const auto f1 = extract_features(rotated.img, rotated.mask);

    for (const char* name : {"area_fraction", "compactness", "solidity"}) {
        INFO("feature ", name);
        CHECK(f1.values[index_of(name)] ==
              doctest::Approx(f0.values[index_of(name)]).epsilon(1e-9));
    }
    for (const char* name : {"hu1", "hu2", "hu3", "hu4", "hu5", "hu6", "hu7"}) {
        INFO("feature ", name);
        const double a = f0.values[index_of(name)];
        const double b = f1.values[index_of(name)];
        CHECK(std::abs(a - b) <= 1e-9 * std::max(1.0, std::abs(a)));
    }
}

TEST_CASE("extract_features rejects bad inputs") {
    ImageRGB img(8, 8, 0.5);
    CHECK_THROWS_AS(extract_features(img, BinaryMask(8, 8)), std::runtime_error);
    CHECK_THROWS_AS(extract_features(img, BinaryMask(9, 8, true)), std::runtime_error);
}

TEST_CASE("fit_standardizer on the listed examples") {
    FeatureVector ones, threes;
    ones.values.fill(1.0);
    threes.values.fill(3.0);

    const auto single = fit_standardizer({ones});
    for (int j = 0; j < kFeatureCount; ++j) {
        CHECK(single.means[j] == 1.0);
        CHECK(single.scales[j] == 1.0);  // zero-variance guard
    }

    // column values {1, 3}: mean 2, population std 1
    const auto pair = fit_standardizer({ones, threes});
    for (int j = 0; j < kFeatureCount; ++j) {
        CHECK(pair.means[j] == doctest::Approx(2.0));
        CHECK(pair.scales[j] == doctest::Approx(1.0));
    }

    std::vector<FeatureVector> hundred(100);
    for (auto& fv : hundred) fv.values.fill(5.0);
    const auto constant = fit_standardizer(hundred);
    for (int j = 0; j < kFeatureCount; ++j) {
        CHECK(constant.means[j] == doctest::Approx(5.0));
        CHECK(constant.scales[j] == 1.0);
    }

    CHECK_THROWS_AS(fit_standardizer({}), std::invalid_argument);
}

TEST_CASE("apply_standardizer arithmetic and version guard") {
    Standardizer s;
    s.means.fill(0.0);
    s.scales.fill(1.0);
    FeatureVector v;
    derm::Rng rng(4);
    for (auto& x : v.values) x = rng.uniform();
    CHECK(apply_standardizer(s, v).values == v.values);  // identity

    s.means.fill(1.0);
    s.scales.fill(2.0);
    FeatureVector three;
    three.values.fill(3.0);
    const auto out = apply_standardizer(s, three);
    for (double x : out.values) CHECK(x == doctest::Approx(1.0));

    FeatureVector at_mean;
    at_mean.values.fill(1.0);
    for (double x : apply_standardizer(s, at_mean).values) CHECK(x == doctest::Approx(0.0));

    FeatureVector wrong;
    wrong.catalog_version = "other-v9";
    CHECK_THROWS_AS(apply_standardizer(s, wrong), std::runtime_error);
}

TEST_CASE("standardized table has zero mean and unit std per live column") {
    std::vector<FeatureVector> table(40);
    derm::Rng rng(6);
    for (auto& fv : table) {
        for (auto& x : fv.values) x = rng.uniform(-3.0, 7.0);
    }
    const auto s = fit_standardizer(table);
    std::vector<FeatureVector> scaled;
    for (const auto& fv : table) scaled.push_back(apply_standardizer(s, fv));

    for (int j = 0; j < kFeatureCount; ++j) {
        double mean = 0.0;
        for (const auto& fv : scaled) mean += fv.values[j];
        mean /= scaled.size();
        double var = 0.0;
        for (const auto& fv : scaled) var += (fv.values[j] - mean) * (fv.values[j] - mean);
        var /= scaled.size();
        CHECK(std::abs(mean) < 1e-9);
        CHECK(std::abs(std::sqrt(var) - 1.0) < 1e-9);
    }
}

TEST_CASE("feature table round trip") {
    derm::testutil::TempDir tmp("feat_table");
    std::vector<FeatureVector> rows(3);
    derm::Rng rng(12);
    for (auto& fv : rows) {
        for (auto& x : fv.values) x = rng.uniform(-2.0, 2.0);
    }
    const std::vector<std::string> ids{"s1", "s2", "s3"};
    save_feature_table(tmp.path() / "features.csv", ids, rows);

    std::vector<std::string> back_ids;
    std::vector<FeatureVector> back_rows;
    load_feature_table(tmp.path() / "features.csv", back_ids, back_rows);
    CHECK(back_ids == ids);
    REQUIRE(back_rows.size() == 3);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (int j = 0; j < kFeatureCount; ++j) {
            CHECK(back_rows[i].values[j] == rows[i].values[j]);  // %.17g round trips
        }
    }
}

TEST_CASE("standardizer CSV round trip") {
    derm::testutil::TempDir tmp("feat_std");
    Standardizer s;
    derm::Rng rng(13);
    for (int j = 0; j < kFeatureCount; ++j) {
        s.means[j] = rng.uniform(-5.0, 5.0);
        s.scales[j] = rng.uniform(0.1, 3.0);
    }
    save_standardizer_csv(s, tmp.path() / "std.csv");
    const auto back = load_standardizer_csv(tmp.path() / "std.csv");
    CHECK(back.catalog_version == s.catalog_version);
    for (int j = 0; j < kFeatureCount; ++j) {
        CHECK(back.means[j] == s.means[j]);
        CHECK(back.scales[j] == s.scales[j]);
    }
}

}  // TEST_SUITE
