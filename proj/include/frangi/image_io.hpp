#pragma once

#include <filesystem>

#include "frangi/image.hpp"

namespace frangi {

/// Reads a PNG or binary PGM/PPM raster and normalizes it to [0, 1].
///
/// Grayscale images (8 or 16 bit) are divided by the type maximum; RGB
/// images keep only the green channel. PNM files are divided by their
/// declared maxval. Throws IoError if the file cannot be read and
/// FormatError for unsupported layouts (palette, alpha, ASCII PNM, ...).
Image2D load_image(const std::filesystem::path& path);

/// Loads an image and thresholds it at 0.5 (labels stored as {0,255} or {0,1}·max).
LabelMask load_mask(const std::filesystem::path& path);

/// Writes values in [0,1] as a 16-bit grayscale PNG (round(v * 65535)).
void write_png16(const std::filesystem::path& path, const Image2D& img);

/// Writes a mask as an 8-bit grayscale PNG with values {0, 255}.
void write_mask_png(const std::filesystem::path& path, const LabelMask& mask);

/// 8-bit RGB pixels, row-major, 3 bytes per pixel.
struct RgbImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> rgb;
};

void write_rgb_png(const std::filesystem::path& path, const RgbImage& img);

/// Reads an RGB PNG without normalization (used by tests and overlay checks).
RgbImage read_rgb_png(const std::filesystem::path& path);

} // namespace frangi
