#include "frangi/kernels.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "frangi/error.hpp"

namespace frangi {

ScaleKernels gaussian_second_derivative_kernels(double sigma, int size)
{
    if (!(sigma > 0.0) || !std::isfinite(sigma))
        throw ParameterError("sigma must be positive, got " + std::to_string(sigma));
    if (size < 3 || size % 2 == 0)
        throw ParameterError("kernel size must be odd and >= 3, got " + std::to_string(size));

    const int radius = size / 2;
    const double s2 = sigma * sigma;
    const double s4 = s2 * s2;
    const double norm = 1.0 / (2.0 * std::numbers::pi * s2);

    ScaleKernels k{Image2D(size, size), Image2D(size, size), Image2D(size, size), sigma};
    for (int j = 0; j < size; ++j) {
        const double y = j - radius;
        for (int i = 0; i < size; ++i) {
            const double x = i - radius;
            const double g = norm * std::exp(-(x * x + y * y) / (2.0 * s2));
            k.kxx(i, j) = (x * x / s4 - 1.0 / s2) * g;
            k.kyy(i, j) = (y * y / s4 - 1.0 / s2) * g;
            k.kxy(i, j) = (x * y / s4) * g;
        }
    }
    return k;
}

int kernel_size_for_sigma(double sigma)
{
    if (!(sigma > 0.0))
        throw ParameterError("sigma must be positive");
    return 2 * static_cast<int>(std::ceil(3.0 * sigma)) + 1;
}

} // namespace frangi
