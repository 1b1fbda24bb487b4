#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "frangi/image.hpp"
#include "frangi/kernels.hpp"

namespace frangi {

/// Which sign of the dominant eigenvalue is suppressed.
///
/// dark_tubes zeroes pixels with λ2 < 0 (vessels darker than background,
/// as in the green channel of fundus photographs); bright_tubes zeroes λ2 > 0.
enum class Polarity : std::uint8_t { dark_tubes = 0, bright_tubes = 1 };

inline constexpr double kMinBlobness = 1e-3;
inline constexpr double kMinStructureness = 1e-3;
inline constexpr double kRatioEpsilon = 1e-12;

struct HessianField {
    Image2D hxx;
    Image2D hxy;
    Image2D hyy;
};

/// Per-pixel eigenvalues ordered so that |lam2| >= |lam1|.
struct EigenField {
    Image2D lam1;
    Image2D lam2;
};

/// Trainable state of one single-scale sub-net.
struct ScaleParams {
    ScaleKernels kernels;
    double beta = 0.5; // blobness sensitivity
    double c = 1.0;    // structureness sensitivity
};

/// Full trainable network state plus the fixed output mapping.
struct FrangiNetParams {
    std::array<ScaleParams, 3> scales; // hierarchy levels at factors 1, 2, 4
    double threshold = 1e-3;
    double neg_scale = 20000.0;
    double pos_scale = 2000.0;
    Polarity polarity = Polarity::dark_tubes;

    /// Initial weights: σ = 3 kernels of size 19 at every level, β = 0.5, c = 1.
    static FrangiNetParams defaults();

    /// Throws ParameterError if any invariant is violated.
    void validate() const;
};

HessianField hessian_field(const Image2D& patch, const ScaleKernels& kernels);

/// Closed-form eigenvalues of the symmetric 2×2 Hessian at every pixel.
EigenField eigenvalues(const HessianField& h);

/// Single-pixel variant of eigenvalues(); returns {lam1, lam2}.
std::array<double, 2> eigenvalues_2x2(double hxx, double hxy, double hyy) noexcept;

/// Vesselness of a single eigenvalue pair.
double vesselness_value(double lam1, double lam2, double beta, double c,
                        Polarity polarity) noexcept;

Image2D vesselness(const EigenField& e, double beta, double c, Polarity polarity);

/// resize -> Hessian -> eigenvalues -> vesselness -> resize back; always 128×128.
Image2D single_scale_forward(const Image2D& patch, int scale_index, const ScaleParams& sp,
                             Polarity polarity);

/// Pixelwise maximum of the three scale responses.
Image2D fuse_scales(const Image2D& v0, const Image2D& v1, const Image2D& v2);

/// Index (0..2) of the scale selected by fuse_scales at each pixel; ties go to the lowest index.
std::vector<std::uint8_t> fuse_argmax(const Image2D& v0, const Image2D& v1, const Image2D& v2);

/// Pre-sigmoid value: (v - t) scaled by neg_scale below t and pos_scale at or above t.
double rescale_value(double v, double t, double neg_scale, double pos_scale) noexcept;

double sigmoid(double z) noexcept;

Image2D rescale_sigmoid(const Image2D& v, double t, double neg_scale, double pos_scale);

/// Full network: three scale branches, max fusion, rescale and sigmoid.
Image2D frangi_net_forward(const PatchSet& ps, const FrangiNetParams& params);

/// Per-σ full-resolution vesselness maps, each centre-cropped to the valid
/// region of the largest kernel. Uses β = 0.5, c = 1 and kernels of size
/// 2·ceil(3σ)+1.
std::vector<Image2D> classical_frangi_responses(const Image2D& img, std::span<const double> sigmas,
                                                Polarity polarity = Polarity::dark_tubes);

/// Direct multi-σ Frangi filter: pixelwise maximum of classical_frangi_responses.
Image2D classical_frangi(const Image2D& img, std::span<const double> sigmas,
                         Polarity polarity = Polarity::dark_tubes);

} // namespace frangi
