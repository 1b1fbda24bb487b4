#include "frangi/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <csetjmp>
#include <cstring>
#include <cstdio>
#include <fstream>
#include <memory>
#include <string>

#include "frangi/error.hpp"

namespace frangi {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const noexcept
    {
        if (f)
            std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode)
{
    FilePtr f(std::fopen(path.c_str(), mode));
    if (!f)
        throw IoError("cannot open " + path.string());
    return f;
}

[[noreturn]] void png_error_handler(png_structp png, png_const_charp msg)
{
    auto* err = static_cast<std::string*>(png_get_error_ptr(png));
    if (err)
        *err = msg;
    png_longjmp(png, 1);
}

void png_warning_handler(png_structp, png_const_charp) {}

bool has_png_signature(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open " + path.string());
    unsigned char sig[8] = {};
    in.read(reinterpret_cast<char*>(sig), 8);
    return in.gcount() == 8 && png_sig_cmp(sig, 0, 8) == 0;
}

// Raw decoded samples before normalization.
struct RawRaster {
    int width = 0;
    int height = 0;
    int channels = 0;      // 1 or 3
    unsigned maxval = 255; // 255, 65535, or PNM maxval
    std::vector<std::uint16_t> samples;
};

RawRaster read_png_raw(const std::filesystem::path& path)
{
    FilePtr file = open_file(path, "rb");
    std::string err;
    png_structp png =
        png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, png_error_handler, png_warning_handler);
    if (!png)
        throw IoError("libpng initialization failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw IoError("libpng initialization failed");
    }

    RawRaster raw;
    std::vector<png_bytep> rows;
    std::vector<png_byte> buffer;
    bool format_problem = false;

    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("cannot decode " + path.string() + ": " + err);
    }

    png_init_io(png, file.get());
    png_read_info(png, info);
    const png_uint_32 width = png_get_image_width(png, info);
    const png_uint_32 height = png_get_image_height(png, info);
    const int color_type = png_get_color_type(png, info);
    int bit_depth = png_get_bit_depth(png, info);

    if (color_type == PNG_COLOR_TYPE_GRAY) {
        if (bit_depth < 8) {
            png_set_expand_gray_1_2_4_to_8(png);
            bit_depth = 8;
        }
        raw.channels = 1;
    } else if (color_type == PNG_COLOR_TYPE_RGB && bit_depth == 8) {
        raw.channels = 3;
    } else {
        format_problem = true;
    }

    if (format_problem) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError(path.string() +
                          ": unsupported PNG layout (need 8/16-bit gray or 8-bit RGB)");
    }

    if (bit_depth == 16)
        png_set_swap(png); // host (little-endian) order
    png_read_update_info(png, info);

    const std::size_t rowbytes = png_get_rowbytes(png, info);
    buffer.resize(rowbytes * height);
    rows.resize(height);
    for (png_uint_32 y = 0; y < height; ++y)
        rows[y] = buffer.data() + y * rowbytes;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    raw.width = static_cast<int>(width);
    raw.height = static_cast<int>(height);
    raw.maxval = bit_depth == 16 ? 65535u : 255u;
    const std::size_t count = static_cast<std::size_t>(width) * height * raw.channels;
    raw.samples.resize(count);
    if (bit_depth == 16) {
        for (std::size_t i = 0; i < count; ++i) {
            std::uint16_t v;
            std::memcpy(&v, buffer.data() + 2 * i, 2);
            raw.samples[i] = v;
        }
    } else {
        for (std::size_t i = 0; i < count; ++i)
            raw.samples[i] = buffer[i];
    }
    return raw;
}

// Binary PGM (P5) / PPM (P6) reader.
RawRaster read_pnm_raw(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open " + path.string());

    auto next_token = [&]() {
        std::string tok;
        char c;
        while (in.get(c)) {
            if (c == '#') {
                std::string skip;
                std::getline(in, skip);
                if (!tok.empty())
                    break;
                continue;
            }
            if (std::isspace(static_cast<unsigned char>(c))) {
                if (!tok.empty())
                    break;
                continue;
            }
            tok.push_back(c);
        }
        return tok;
    };

    const std::string magic = next_token();
    RawRaster raw;
    if (magic == "P5")
        raw.channels = 1;
    else if (magic == "P6")
        raw.channels = 3;
    else
        throw FormatError(path.string() + ": unsupported image format (need PNG, P5 or P6)");

    long w = 0, h = 0, maxval = 0;
    try {
        w = std::stol(next_token());
        h = std::stol(next_token());
        maxval = std::stol(next_token());
    } catch (const std::exception&) {
        throw FormatError(path.string() + ": malformed PNM header");
    }
    if (w < 1 || h < 1 || maxval < 1 || maxval > 65535)
        throw FormatError(path.string() + ": invalid PNM header values");

    raw.width = static_cast<int>(w);
    raw.height = static_cast<int>(h);
    raw.maxval = static_cast<unsigned>(maxval);
    const std::size_t count = static_cast<std::size_t>(w) * h * raw.channels;
    const std::size_t bytes_per = maxval > 255 ? 2 : 1;
    std::vector<unsigned char> bytes(count * bytes_per);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (static_cast<std::size_t>(in.gcount()) != bytes.size())
        throw FormatError(path.string() + ": truncated PNM data");
    raw.samples.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        raw.samples[i] = bytes_per == 2
                             ? static_cast<std::uint16_t>((bytes[2 * i] << 8) | bytes[2 * i + 1])
                             : bytes[i];
    }
    return raw;
}

void write_png(const std::filesystem::path& path, int width, int height, int color_type,
               int bit_depth, const std::vector<png_byte>& buffer)
{
    FilePtr file = open_file(path, "wb");
    std::string err;
    png_structp png =
        png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, png_error_handler, png_warning_handler);
    if (!png)
        throw IoError("libpng initialization failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError("libpng initialization failed");
    }
    const int channels = color_type == PNG_COLOR_TYPE_RGB ? 3 : 1;
    const std::size_t rowbytes = static_cast<std::size_t>(width) * channels * (bit_depth / 8);
    std::vector<png_const_bytep> rows(static_cast<std::size_t>(height));
    for (int y = 0; y < height; ++y)
        rows[static_cast<std::size_t>(y)] = buffer.data() + static_cast<std::size_t>(y) * rowbytes;

    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("cannot encode " + path.string() + ": " + err);
    }
    png_init_io(png, file.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height),
                 bit_depth, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_rows(png, const_cast<png_bytepp>(rows.data()), static_cast<png_uint_32>(height));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

} // namespace

Image2D load_image(const std::filesystem::path& path)
{
    if (!std::filesystem::exists(path))
        throw IoError("no such file: " + path.string());
    const RawRaster raw = has_png_signature(path) ? read_png_raw(path) : read_pnm_raw(path);

    Image2D img(raw.width, raw.height);
    auto dst = img.data();
    const double scale = 1.0 / raw.maxval;
    const std::size_t stride = static_cast<std::size_t>(raw.channels);
    const std::size_t offset = raw.channels == 3 ? 1 : 0; // green
    for (std::size_t i = 0; i < dst.size(); ++i)
        dst[i] = std::min(1.0, raw.samples[i * stride + offset] * scale);
    return img;
}

LabelMask load_mask(const std::filesystem::path& path)
{
    return LabelMask::from_image(load_image(path), 0.5);
}

void write_png16(const std::filesystem::path& path, const Image2D& img)
{
    std::vector<png_byte> buffer(img.size() * 2);
    auto src = img.data();
    for (std::size_t i = 0; i < src.size(); ++i) {
        const double v = std::clamp(src[i], 0.0, 1.0);
        const auto q = static_cast<std::uint16_t>(std::lround(v * 65535.0));
        buffer[2 * i] = static_cast<png_byte>(q >> 8); // PNG is big-endian
        buffer[2 * i + 1] = static_cast<png_byte>(q & 0xff);
    }
    write_png(path, img.width(), img.height(), PNG_COLOR_TYPE_GRAY, 16, buffer);
}

void write_mask_png(const std::filesystem::path& path, const LabelMask& mask)
{
    std::vector<png_byte> buffer(mask.size());
    auto src = mask.data();
    for (std::size_t i = 0; i < src.size(); ++i)
        buffer[i] = src[i] ? 255 : 0;
    write_png(path, mask.width(), mask.height(), PNG_COLOR_TYPE_GRAY, 8, buffer);
}

void write_rgb_png(const std::filesystem::path& path, const RgbImage& img)
{
    if (img.rgb.size() != static_cast<std::size_t>(img.width) * img.height * 3)
        throw ShapeError("RGB buffer size does not match dimensions");
    write_png(path, img.width, img.height, PNG_COLOR_TYPE_RGB, 8, img.rgb);
}

RgbImage read_rgb_png(const std::filesystem::path& path)
{
    const RawRaster raw = read_png_raw(path);
    if (raw.channels != 3 || raw.maxval != 255)
        throw FormatError(path.string() + ": expected an 8-bit RGB PNG");
    RgbImage out{raw.width, raw.height, {}};
    out.rgb.assign(raw.samples.begin(), raw.samples.end());
    return out;
}

} // namespace frangi
