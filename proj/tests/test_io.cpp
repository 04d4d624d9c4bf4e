#include <doctest.h>

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "derm/io.hpp"
#include "derm/rng.hpp"
#include "test_util.hpp"

using namespace derm;

TEST_SUITE("io") {

TEST_CASE("image PNG round trip at 8-bit fidelity") {
    testutil::TempDir tmp("io_img");
    imgproc::ImageRGB img(9, 5);
    Rng rng(3);
    for (auto& v : img.pixels) v = rng.uniform();

    const auto path = tmp.path() / "img.png";
    io::write_image_png(path, img);
    const auto back = io::read_image_png(path);
    REQUIRE(back.width == 9);
    REQUIRE(back.height == 5);
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
        const double quantized = std::round(img.pixels[i] * 255.0) / 255.0;
        CHECK(back.pixels[i] == doctest::Approx(quantized).epsilon(1e-12));
    }
}

TEST_CASE("mask PNG round trip is exact") {
    testutil::TempDir tmp("io_mask");
    segmask::BinaryMask mask(7, 4);
    Rng rng(5);
    for (auto& v : mask.values) v = rng.bernoulli(0.5) ? 1 : 0;
    const auto path = tmp.path() / "m.png";
    io::write_mask_png(path, mask);
    CHECK(io::read_mask_png(path) == mask);
}

TEST_CASE("probmap PNG quantizes by 1/255, f32 keeps float precision") {
    testutil::TempDir tmp("io_pm");
    segmask::ProbMap pm(6, 6);
    Rng rng(8);
    for (auto& v : pm.values) v = rng.uniform();

    io::write_probmap_png(tmp.path() / "p.png", pm);
    const auto png = io::read_probmap(tmp.path() / "p.png");
    for (std::size_t i = 0; i < pm.values.size(); ++i) {
        CHECK(png.values[i] == doctest::Approx(std::round(pm.values[i] * 255.0) / 255.0)
                                   .epsilon(1e-12));
    }

    io::write_probmap_f32(tmp.path() / "p.f32", pm);
    const auto f32 = io::read_probmap(tmp.path() / "p.f32");
    for (std::size_t i = 0; i < pm.values.size(); ++i) {
        CHECK(f32.values[i] == doctest::Approx(pm.values[i]).epsilon(1e-6));
    }
}

TEST_CASE("read errors name the offending file") {
    testutil::TempDir tmp("io_err");
    CHECK_THROWS_AS(io::read_image_png(tmp.path() / "absent.png"), std::runtime_error);

    std::ofstream(tmp.path() / "junk.png") << "this is not a png";
    CHECK_THROWS_WITH_AS(io::read_image_png(tmp.path() / "junk.png"),
                         doctest::Contains("junk.png"), std::runtime_error);

    std::ofstream(tmp.path() / "short.f32") << "xx";
    CHECK_THROWS_AS(io::read_probmap(tmp.path() / "short.f32"), std::runtime_error);
}

TEST_CASE("grayscale PNG reads back as RGB") {
    testutil::TempDir tmp("io_gray");
    segmask::ProbMap pm(4, 4);
    for (std::size_t i = 0; i < pm.values.size(); ++i) pm.values[i] = i / 16.0;
    io::write_probmap_png(tmp.path() / "g.png", pm);
    const auto img = io::read_image_png(tmp.path() / "g.png");
    CHECK(img.width == 4);
    for (std::size_t i = 0; i < pm.values.size(); ++i) {
        CHECK(img.pixels[i * 3] == doctest::Approx(img.pixels[i * 3 + 1]));
        CHECK(img.pixels[i * 3] == doctest::Approx(img.pixels[i * 3 + 2]));
    }
}

}  // TEST_SUITE
