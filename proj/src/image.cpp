#include "frangi/image.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "frangi/error.hpp"

namespace frangi {

namespace {

void check_dims(int width, int height)
{
    if (width < 1 || height < 1) {
        throw ShapeError("image dimensions must be positive, got " + std::to_string(width) + "x" +
                         std::to_string(height));
    }
}

std::string dims(int w, int h)
{
    return std::to_string(w) + "x" + std::to_string(h);
}

void check_factor(int factor)
{
    if (factor != 1 && factor != 2 && factor != 4) {
        throw ParameterError("resize factor must be 1, 2 or 4, got " + std::to_string(factor));
    }
}

} // namespace

Image2D::Image2D(int width, int height, double fill) : width_(width), height_(height)
{
    check_dims(width, height);
    data_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill);
}

Image2D::Image2D(int width, int height, std::vector<double> data)
    : width_(width), height_(height), data_(std::move(data))
{
    check_dims(width, height);
    if (data_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
        throw ShapeError("data length " + std::to_string(data_.size()) + " does not match " +
                         dims(width, height));
    }
}

Image2D Image2D::crop(PixelCoord origin, int w, int h) const
{
    if (origin.x < 0 || origin.y < 0 || w < 1 || h < 1 || origin.x + w > width_ ||
        origin.y + h > height_) {
        throw ShapeError("crop " + dims(w, h) + " at (" + std::to_string(origin.x) + "," +
                         std::to_string(origin.y) + ") outside " + dims(width_, height_));
    }
    Image2D out(w, h);
    for (int y = 0; y < h; ++y) {
        const double* src = row(origin.y + y) + origin.x;
        std::copy(src, src + w, out.row(y));
    }
    return out;
}

Image2D Image2D::transposed() const
{
    Image2D out(height_, width_);
    for (int y = 0; y < height_; ++y)
        for (int x = 0; x < width_; ++x)
            out(y, x) = (*this)(x, y);
    return out;
}

bool Image2D::all_finite() const noexcept
{
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

LabelMask::LabelMask(int width, int height, std::uint8_t fill) : width_(width), height_(height)
{
    check_dims(width, height);
    data_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height),
                 fill ? 1 : 0);
}

LabelMask::LabelMask(int width, int height, std::vector<std::uint8_t> data)
    : width_(width), height_(height), data_(std::move(data))
{
    check_dims(width, height);
    if (data_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
        throw ShapeError("mask length " + std::to_string(data_.size()) + " does not match " +
                         dims(width, height));
    }
    for (auto& v : data_)
        v = v ? 1 : 0;
}

LabelMask LabelMask::crop(PixelCoord origin, int w, int h) const
{
    if (origin.x < 0 || origin.y < 0 || w < 1 || h < 1 || origin.x + w > width_ ||
        origin.y + h > height_) {
        throw ShapeError("crop " + dims(w, h) + " outside mask " + dims(width_, height_));
    }
    LabelMask out(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            out(x, y) = (*this)(origin.x + x, origin.y + y);
    return out;
}

LabelMask LabelMask::transposed() const
{
    LabelMask out(height_, width_);
    for (int y = 0; y < height_; ++y)
        for (int x = 0; x < width_; ++x)
            out(y, x) = (*this)(x, y);
    return out;
}

std::size_t LabelMask::count_ones() const noexcept
{
    return static_cast<std::size_t>(std::count(data_.begin(), data_.end(), std::uint8_t{1}));
}

LabelMask LabelMask::from_image(const Image2D& img, double threshold)
{
    LabelMask out(img.width(), img.height());
    auto src = img.data();
    auto dst = out.data();
    for (std::size_t i = 0; i < src.size(); ++i)
        dst[i] = src[i] >= threshold ? 1 : 0;
    return out;
}

Image2D LabelMask::to_image() const
{
    Image2D out(width_, height_);
    auto dst = out.data();
    for (std::size_t i = 0; i < data_.size(); ++i)
        dst[i] = data_[i];
    return out;
}

const Image2D& PatchSet::at(int scale_index) const
{
    switch (scale_index) {
    case 0: return p0;
    case 1: return p2;
    case 2: return p4;
    default: throw ParameterError("scale index must be 0, 1 or 2");
    }
}

Image2D downsample_avg(const Image2D& img, int factor)
{
    check_factor(factor);
    if (img.width() % factor != 0 || img.height() % factor != 0) {
        throw ShapeError("cannot downsample " + dims(img.width(), img.height()) + " by " +
                         std::to_string(factor));
    }
    if (factor == 1)
        return img;
    const int ow = img.width() / factor;
    const int oh = img.height() / factor;
    const double inv = 1.0 / (factor * factor);
    Image2D out(ow, oh);
    for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int dy = 0; dy < factor; ++dy) {
                const double* src = img.row(y * factor + dy) + x * factor;
                for (int dx = 0; dx < factor; ++dx)
                    acc += src[dx];
            }
            out(x, y) = acc * inv;
        }
    }
    return out;
}

Image2D upsample_nn(const Image2D& img, int factor)
{
    check_factor(factor);
    if (factor == 1)
        return img;
    Image2D out(img.width() * factor, img.height() * factor);
    for (int y = 0; y < out.height(); ++y) {
        const double* src = img.row(y / factor);
        double* dst = out.row(y);
        for (int x = 0; x < out.width(); ++x)
            dst[x] = src[x / factor];
    }
    return out;
}

Image2D downsample_avg_adjoint(const Image2D& grad, int factor)
{
    check_factor(factor);
    if (factor == 1)
        return grad;
    Image2D out = upsample_nn(grad, factor);
    const double inv = 1.0 / (factor * factor);
    for (double& v : out.data())
        v *= inv;
    return out;
}

Image2D upsample_nn_adjoint(const Image2D& grad, int factor)
{
    check_factor(factor);
    if (factor == 1)
        return grad;
    if (grad.width() % factor != 0 || grad.height() % factor != 0)
        throw ShapeError("upsample adjoint: gradient dims not divisible by factor");
    Image2D out(grad.width() / factor, grad.height() / factor);
    for (int y = 0; y < out.height(); ++y) {
        for (int x = 0; x < out.width(); ++x) {
            double acc = 0.0;
            for (int dy = 0; dy < factor; ++dy) {
                const double* src = grad.row(y * factor + dy) + x * factor;
                for (int dx = 0; dx < factor; ++dx)
                    acc += src[dx];
            }
            out(x, y) = acc;
        }
    }
    return out;
}

PatchSet extract_patch_set(const Image2D& img, PixelCoord top_left)
{
    if (top_left.x < kPatchMargin || top_left.y < kPatchMargin ||
        top_left.x + kOutputSide + kPatchMargin > img.width() ||
        top_left.y + kOutputSide + kPatchMargin > img.height()) {
        throw ShapeError("output window at (" + std::to_string(top_left.x) + "," +
                         std::to_string(top_left.y) + ") needs a " +
                         std::to_string(kPatchMargin) + " px margin inside " +
                         dims(img.width(), img.height()));
    }
    auto crop_side = [&](int side) {
        const int margin = (side - kOutputSide) / 2;
        return img.crop({top_left.x - margin, top_left.y - margin}, side, side);
    };
    return PatchSet{crop_side(kPatchSides[0]), crop_side(kPatchSides[1]),
                    crop_side(kPatchSides[2])};
}

Image2D conv2d_valid(const Image2D& img, const Image2D& kernel)
{
    const int kw = kernel.width();
    const int kh = kernel.height();
    if (kernel.empty() || kw % 2 == 0 || kh % 2 == 0)
        throw ShapeError("kernel sides must be odd, got " + dims(kw, kh));
    if (img.empty() || kw > img.width() || kh > img.height()) {
        throw ShapeError("kernel " + dims(kw, kh) + " larger than image " +
                         dims(img.width(), img.height()));
    }
    const int ow = img.width() - kw + 1;
    const int oh = img.height() - kh + 1;
    Image2D out(ow, oh);
    // Per output pixel the taps are accumulated in row-major kernel order.
    for (int j = 0; j < kh; ++j) {
        for (int i = 0; i < kw; ++i) {
            const double w = kernel(i, j);
            for (int y = 0; y < oh; ++y) {
                const double* src = img.row(y + j) + i;
                double* dst = out.row(y);
                for (int x = 0; x < ow; ++x)
                    dst[x] += w * src[x];
            }
        }
    }
    return out;
}

Image2D conv2d_valid_kernel_grad(const Image2D& img, const Image2D& upstream, int kernel_w,
                                 int kernel_h)
{
    if (upstream.width() != img.width() - kernel_w + 1 ||
        upstream.height() != img.height() - kernel_h + 1) {
        throw ShapeError("kernel gradient: upstream " + dims(upstream.width(), upstream.height()) +
                         " inconsistent with image " + dims(img.width(), img.height()) +
                         " and kernel " + dims(kernel_w, kernel_h));
    }
    const int ow = upstream.width();
    const int oh = upstream.height();
    Image2D grad(kernel_w, kernel_h);
    for (int j = 0; j < kernel_h; ++j) {
        for (int i = 0; i < kernel_w; ++i) {
            double acc = 0.0;
            for (int y = 0; y < oh; ++y) {
                const double* src = img.row(y + j) + i;
                const double* up = upstream.row(y);
#pragma omp simd reduction(+ : acc)
                for (int x = 0; x < ow; ++x)
                    acc += up[x] * src[x];
            }
            grad(i, j) = acc;
        }
    }
    return grad;
}

double mean(const Image2D& img)
{
    double acc = 0.0;
    for (double v : img.data())
        acc += v;
    return acc / static_cast<double>(img.size());
}

} // namespace frangi
