#ifndef DERM_IO_HPP
#define DERM_IO_HPP

#include <filesystem>

#include "derm/imgproc.hpp"
#include "derm/segmask.hpp"

namespace derm::io {

// 8-bit PNG image I/O. Reading accepts gray/palette/RGB/RGBA and 16-bit
// inputs, normalized to RGB in [0,1]; writing quantizes to 8-bit RGB.
imgproc::ImageRGB read_image_png(const std::filesystem::path& path);
void write_image_png(const std::filesystem::path& path, const imgproc::ImageRGB& img);

// Masks are 8-bit single-channel PNG; a pixel > 127 means lesion.
segmask::BinaryMask read_mask_png(const std::filesystem::path& path);
void write_mask_png(const std::filesystem::path& path, const segmask::BinaryMask& mask);

// Probability maps come either as 8-bit single-channel PNG scaled by 1/255,
// or as a raw float32 grid: u32le width, u32le height, then w*h float32le
// row-major values. The extension `.f32` selects the raw format.
segmask::ProbMap read_probmap(const std::filesystem::path& path);
void write_probmap_f32(const std::filesystem::path& path, const segmask::ProbMap& map);
void write_probmap_png(const std::filesystem::path& path, const segmask::ProbMap& map);

}  // namespace derm::io

#endif  // DERM_IO_HPP
