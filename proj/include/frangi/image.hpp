#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace frangi {

/// Column/row position in an image; x grows to the right, y grows downward.
struct PixelCoord {
    int x = 0;
    int y = 0;

    friend bool operator==(const PixelCoord&, const PixelCoord&) = default;
};

/// Dense row-major grid of double-precision intensities.
///
/// Used for input images, kernels, Hessian channels, eigenvalue maps,
/// vesselness and probability maps alike. Width and height are at least 1.
class Image2D {
public:
    Image2D() = default;
    Image2D(int width, int height, double fill = 0.0);
    Image2D(int width, int height, std::vector<double> data);

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(int x, int y) noexcept { return data_[index(x, y)]; }
    double operator()(int x, int y) const noexcept { return data_[index(x, y)]; }

    double* row(int y) noexcept { return data_.data() + index(0, y); }
    const double* row(int y) const noexcept { return data_.data() + index(0, y); }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }

    bool same_shape(const Image2D& other) const noexcept
    {
        return width_ == other.width_ && height_ == other.height_;
    }

    /// Copy of the w×h sub-window whose top-left corner is `origin`.
    Image2D crop(PixelCoord origin, int w, int h) const;

    /// Swaps rows and columns.
    Image2D transposed() const;

    bool all_finite() const noexcept;

    friend bool operator==(const Image2D&, const Image2D&) = default;

private:
    std::size_t index(int x, int y) const noexcept
    {
        return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
               static_cast<std::size_t>(x);
    }

    int width_ = 0;
    int height_ = 0;
    std::vector<double> data_;
};

/// Binary per-pixel labels; 1 marks a vessel pixel.
class LabelMask {
public:
    LabelMask() = default;
    LabelMask(int width, int height, std::uint8_t fill = 0);
    LabelMask(int width, int height, std::vector<std::uint8_t> data);

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::uint8_t& operator()(int x, int y) noexcept { return data_[index(x, y)]; }
    std::uint8_t operator()(int x, int y) const noexcept { return data_[index(x, y)]; }

    std::span<std::uint8_t> data() noexcept { return data_; }
    std::span<const std::uint8_t> data() const noexcept { return data_; }

    template <typename Other>
    bool same_shape(const Other& other) const noexcept
    {
        return width_ == other.width() && height_ == other.height();
    }

    LabelMask crop(PixelCoord origin, int w, int h) const;
    LabelMask transposed() const;
    std::size_t count_ones() const noexcept;

    /// Mask with 1 wherever `img` is at least `threshold`.
    static LabelMask from_image(const Image2D& img, double threshold = 0.5);
    Image2D to_image() const;

    friend bool operator==(const LabelMask&, const LabelMask&) = default;

private:
    std::size_t index(int x, int y) const noexcept
    {
        return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
               static_cast<std::size_t>(x);
    }

    int width_ = 0;
    int height_ = 0;
    std::vector<std::uint8_t> data_;
};

/// Side lengths of the output window and the three concentric input crops.
inline constexpr int kOutputSide = 128;
inline constexpr int kPatchSides[3] = {146, 164, 200};
inline constexpr int kScaleFactors[3] = {1, 2, 4};
/// Margin between the output window and the outermost (200×200) crop.
inline constexpr int kPatchMargin = (200 - kOutputSide) / 2;

/// Concentric crops around one 128×128 output window.
struct PatchSet {
    Image2D p0; // 146×146
    Image2D p2; // 164×164
    Image2D p4; // 200×200

    const Image2D& at(int scale_index) const;
};

/// Mean of each non-overlapping factor×factor block. Dimensions must be divisible by factor.
Image2D downsample_avg(const Image2D& img, int factor);

/// Replicates every pixel into a factor×factor block.
Image2D upsample_nn(const Image2D& img, int factor);

/// Adjoint of downsample_avg: every block receives grad / factor².
Image2D downsample_avg_adjoint(const Image2D& grad, int factor);

/// Adjoint of upsample_nn: block sums.
Image2D upsample_nn_adjoint(const Image2D& grad, int factor);

/// Crops the 146/164/200 patches centred on the 128×128 window at `top_left`.
/// Throws ShapeError when the 200×200 crop would leave the image.
PatchSet extract_patch_set(const Image2D& img, PixelCoord top_left);

/// Valid-mode cross-correlation (kernel not flipped):
///   out(x, y) = sum_{i,j} kernel(i, j) * img(x + i, y + j)
/// Output is (W - kw + 1) × (H - kh + 1). Kernel sides must be odd.
Image2D conv2d_valid(const Image2D& img, const Image2D& kernel);

/// Gradient of sum(upstream ⊙ conv2d_valid(img, K)) with respect to K.
Image2D conv2d_valid_kernel_grad(const Image2D& img, const Image2D& upstream, int kernel_w,
                                 int kernel_h);

/// Global arithmetic mean.
double mean(const Image2D& img);

} // namespace frangi
