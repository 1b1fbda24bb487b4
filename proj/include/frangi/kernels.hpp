#pragma once

#include "frangi/image.hpp"

namespace frangi {

/// Default kernel support; 146 - 19 + 1 = 128 makes the patch geometry exact.
inline constexpr int kDefaultKernelSize = 19;
inline constexpr double kDefaultSigma = 3.0;

/// The three Hessian convolution kernels of one scale.
struct ScaleKernels {
    Image2D kxx;
    Image2D kxy;
    Image2D kyy;
    double sigma = kDefaultSigma;

    int size() const noexcept { return kxx.width(); }
};

/// Samples the second partial derivatives of the isotropic 2-D Gaussian
///
///   g(x, y) = exp(-(x² + y²) / (2σ²)) / (2πσ²)
///   kxx = (x²/σ⁴ - 1/σ²) g,  kyy = (y²/σ⁴ - 1/σ²) g,  kxy = (xy/σ⁴) g
///
/// at integer offsets around the kernel centre. No renormalization is
/// applied after truncation to the size×size support.
ScaleKernels gaussian_second_derivative_kernels(double sigma, int size = kDefaultKernelSize);

/// Support used for a given σ when no fixed size is imposed: 2·ceil(3σ) + 1.
int kernel_size_for_sigma(double sigma);

} // namespace frangi
