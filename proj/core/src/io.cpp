#include "derm/io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>
#include <stdexcept>
#include <vector>

namespace fs = std::filesystem;

namespace derm::io {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const fs::path& path, const char* mode) {
    FilePtr f(std::fopen(path.string().c_str(), mode));
    if (!f) throw std::runtime_error("cannot open " + path.string());
    return f;
}

// Decodes any supported PNG into 8-bit rows with `channels` components per
// pixel (1 = forced grayscale, 3 = forced RGB).
std::vector<std::uint8_t> read_png_8bit(const fs::path& path, int channels,
                                        int& width, int& height) {
    FilePtr file = open_file(path, "rb");

    png_byte header[8];
    if (std::fread(header, 1, 8, file.get()) != 8 || png_sig_cmp(header, 0, 8) != 0) {
        throw std::runtime_error("not a PNG file: " + path.string());
    }

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw std::runtime_error("png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("PNG decode error: " + path.string());
    }

    png_init_io(png, file.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    png_set_expand(png);  // palette -> rgb, bit depth < 8 -> 8, tRNS -> alpha
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    if (channels == 3) {
        png_set_gray_to_rgb(png);
    } else {
        const int color_type = png_get_color_type(png, info);
        if (color_type & PNG_COLOR_MASK_COLOR) {
            png_set_rgb_to_gray(png, 1, -1.0, -1.0);
        }
    }
    png_read_update_info(png, info);

    width = static_cast<int>(png_get_image_width(png, info));
    height = static_cast<int>(png_get_image_height(png, info));
    const std::size_t rowbytes = png_get_rowbytes(png, info);
    if (rowbytes != static_cast<std::size_t>(width) * channels) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("unexpected PNG layout: " + path.string());
    }

    std::vector<std::uint8_t> data(static_cast<std::size_t>(height) * rowbytes);
    std::vector<png_bytep> rows(height);
    for (int y = 0; y < height; ++y) rows[y] = data.data() + static_cast<std::size_t>(y) * rowbytes;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return data;
}

void write_png_8bit(const fs::path& path, const std::vector<std::uint8_t>& data,
                    int width, int height, int channels) {
    FilePtr file = open_file(path, "wb");

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw std::runtime_error("png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("PNG encode error: " + path.string());
    }

    png_init_io(png, file.get());
    png_set_IHDR(png, info, width, height, 8,
                 channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    std::vector<png_bytep> rows(height);
    const std::size_t rowbytes = static_cast<std::size_t>(width) * channels;
    for (int y = 0; y < height; ++y) {
        rows[y] = const_cast<png_bytep>(data.data() + static_cast<std::size_t>(y) * rowbytes);
    }
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

std::uint8_t quantize(double v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

void put_u32le(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xFF));
    out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xFF));
    out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xFF));
    out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xFF));
}

std::uint32_t get_u32le(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace

imgproc::ImageRGB read_image_png(const fs::path& path) {
    int w = 0, h = 0;
    const auto data = read_png_8bit(path, 3, w, h);
    imgproc::ImageRGB img(w, h);
    for (std::size_t i = 0; i < data.size(); ++i) {
        img.pixels[i] = data[i] / 255.0;
    }
    return img;
}

void write_image_png(const fs::path& path, const imgproc::ImageRGB& img) {
    std::vector<std::uint8_t> data(img.pixels.size());
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = quantize(img.pixels[i]);
    write_png_8bit(path, data, img.width, img.height, 3);
}

segmask::BinaryMask read_mask_png(const fs::path& path) {
    int w = 0, h = 0;
    const auto data = read_png_8bit(path, 1, w, h);
    segmask::BinaryMask mask(w, h);
    for (std::size_t i = 0; i < data.size(); ++i) mask.values[i] = data[i] > 127 ? 1 : 0;
    return mask;
}

void write_mask_png(const fs::path& path, const segmask::BinaryMask& mask) {
    std::vector<std::uint8_t> data(mask.values.size());
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = mask.values[i] ? 255 : 0;
    write_png_8bit(path, data, mask.width, mask.height, 1);
}

segmask::ProbMap read_probmap(const fs::path& path) {
    if (path.extension() == ".f32") {
        FilePtr file = open_file(path, "rb");
        std::uint8_t header[8];
        if (std::fread(header, 1, 8, file.get()) != 8) {
            throw std::runtime_error("truncated probmap header: " + path.string());
        }
        const std::uint32_t w = get_u32le(header);
        const std::uint32_t h = get_u32le(header + 4);
        if (w == 0 || h == 0 || static_cast<std::uint64_t>(w) * h > (1u << 28)) {
            throw std::runtime_error("implausible probmap dimensions in " + path.string());
        }
        std::vector<std::uint8_t> raw(static_cast<std::size_t>(w) * h * 4);
        if (std::fread(raw.data(), 1, raw.size(), file.get()) != raw.size()) {
            throw std::runtime_error("truncated probmap payload: " + path.string());
        }
        segmask::ProbMap map(static_cast<int>(w), static_cast<int>(h));
        for (std::size_t i = 0; i < map.values.size(); ++i) {
            std::uint32_t bits = get_u32le(raw.data() + i * 4);
            float f;
            std::memcpy(&f, &bits, 4);
            map.values[i] = std::clamp(static_cast<double>(f), 0.0, 1.0);
        }
        return map;
    }
    int w = 0, h = 0;
    const auto data = read_png_8bit(path, 1, w, h);
    segmask::ProbMap map(w, h);
    for (std::size_t i = 0; i < data.size(); ++i) map.values[i] = data[i] / 255.0;
    return map;
}

void write_probmap_f32(const fs::path& path, const segmask::ProbMap& map) {
    std::vector<std::uint8_t> out;
    out.reserve(8 + map.values.size() * 4);
    put_u32le(out, static_cast<std::uint32_t>(map.width));
    put_u32le(out, static_cast<std::uint32_t>(map.height));
    for (double v : map.values) {
        const float f = static_cast<float>(v);
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        put_u32le(out, bits);
    }
    FilePtr file = open_file(path, "wb");
    if (std::fwrite(out.data(), 1, out.size(), file.get()) != out.size()) {
        throw std::runtime_error("failed writing " + path.string());
    }
}

void write_probmap_png(const fs::path& path, const segmask::ProbMap& map) {
    std::vector<std::uint8_t> data(map.values.size());
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = quantize(map.values[i]);
    write_png_8bit(path, data, map.width, map.height, 1);
}

}  // namespace derm::io
