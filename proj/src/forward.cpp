#include "frangi/forward.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "frangi/error.hpp"

namespace frangi {

FrangiNetParams FrangiNetParams::defaults()
{
    FrangiNetParams p;
    for (auto& s : p.scales) {
        s.kernels = gaussian_second_derivative_kernels(kDefaultSigma, kDefaultKernelSize);
        s.beta = 0.5;
        s.c = 1.0;
    }
    return p;
}

void FrangiNetParams::validate() const
{
    if (!(threshold > 0.0))
        throw ParameterError("threshold must be positive");
    if (!(neg_scale > 0.0) || !(pos_scale > 0.0))
        throw ParameterError("rescale factors must be positive");
    for (std::size_t i = 0; i < scales.size(); ++i) {
        const auto& s = scales[i];
        const int n = s.kernels.kxx.width();
        auto square_of = [n](const Image2D& k) {
            return k.width() == n && k.height() == n;
        };
        if (n < 3 || n % 2 == 0 || !square_of(s.kernels.kxx) || !square_of(s.kernels.kxy) ||
            !square_of(s.kernels.kyy)) {
            throw ParameterError("scale " + std::to_string(i) +
                                 ": kernels must be square with equal odd sides");
        }
        if (!(s.beta >= kMinBlobness) || !(s.c >= kMinStructureness))
            throw ParameterError("scale " + std::to_string(i) + ": beta and c must be >= 1e-3");
    }
}

HessianField hessian_field(const Image2D& patch, const ScaleKernels& kernels)
{
    const int n = kernels.kxx.width();
    if (patch.width() <= n || patch.height() <= n) {
        throw ShapeError("patch " + std::to_string(patch.width()) + "x" +
                         std::to_string(patch.height()) + " not larger than kernel support " +
                         std::to_string(n));
    }
    return {conv2d_valid(patch, kernels.kxx), conv2d_valid(patch, kernels.kxy),
            conv2d_valid(patch, kernels.kyy)};
}

std::array<double, 2> eigenvalues_2x2(double hxx, double hxy, double hyy) noexcept
{
    const double trace = hxx + hyy;
    const double diff = hxx - hyy;
    const double root = std::sqrt(diff * diff + 4.0 * hxy * hxy);
    const double plus = 0.5 * (trace + root);
    const double minus = 0.5 * (trace - root);
    if (std::abs(plus) >= std::abs(minus))
        return {minus, plus};
    return {plus, minus};
}

EigenField eigenvalues(const HessianField& h)
{
    if (!h.hxx.same_shape(h.hxy) || !h.hxx.same_shape(h.hyy))
        throw ShapeError("Hessian channels differ in size");
    EigenField e{Image2D(h.hxx.width(), h.hxx.height()), Image2D(h.hxx.width(), h.hxx.height())};
    auto xx = h.hxx.data();
    auto xy = h.hxy.data();
    auto yy = h.hyy.data();
    auto l1 = e.lam1.data();
    auto l2 = e.lam2.data();
    for (std::size_t i = 0; i < xx.size(); ++i) {
        const auto [a, b] = eigenvalues_2x2(xx[i], xy[i], yy[i]);
        l1[i] = a;
        l2[i] = b;
    }
    return e;
}

double vesselness_value(double lam1, double lam2, double beta, double c,
                        Polarity polarity) noexcept
{
    const bool gated = polarity == Polarity::dark_tubes ? lam2 < 0.0 : lam2 > 0.0;
    if (gated)
        return 0.0;
    const double rb = std::abs(lam1) / (std::abs(lam2) + kRatioEpsilon);
    const double s2 = lam1 * lam1 + lam2 * lam2;
    const double blob = std::exp(-rb * rb / (2.0 * beta * beta));
    const double structure = -std::expm1(-s2 / (2.0 * c * c));
    return blob * structure;
}

Image2D vesselness(const EigenField& e, double beta, double c, Polarity polarity)
{
    if (!(beta > 0.0) || !(c > 0.0))
        throw ParameterError("beta and c must be positive");
    if (!e.lam1.same_shape(e.lam2))
        throw ShapeError("eigenvalue maps differ in size");
    Image2D v(e.lam1.width(), e.lam1.height());
    auto l1 = e.lam1.data();
    auto l2 = e.lam2.data();
    auto out = v.data();
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = vesselness_value(l1[i], l2[i], beta, c, polarity);
    return v;
}

Image2D single_scale_forward(const Image2D& patch, int scale_index, const ScaleParams& sp,
                             Polarity polarity)
{
    if (scale_index < 0 || scale_index > 2)
        throw ParameterError("scale index must be 0, 1 or 2");
    const int side = kPatchSides[scale_index];
    if (patch.width() != side || patch.height() != side) {
        throw ShapeError("scale " + std::to_string(scale_index) + " expects a " +
                         std::to_string(side) + "x" + std::to_string(side) + " patch, got " +
                         std::to_string(patch.width()) + "x" + std::to_string(patch.height()));
    }
    const int factor = kScaleFactors[scale_index];
    const Image2D resized = downsample_avg(patch, factor);
    const EigenField e = eigenvalues(hessian_field(resized, sp.kernels));
    Image2D v = upsample_nn(vesselness(e, sp.beta, sp.c, polarity), factor);
    if (v.width() != kOutputSide || v.height() != kOutputSide)
        throw ShapeError("kernel size breaks the 128x128 output geometry");
    return v;
}

Image2D fuse_scales(const Image2D& v0, const Image2D& v1, const Image2D& v2)
{
    if (!v0.same_shape(v1) || !v0.same_shape(v2))
        throw ShapeError("scale responses differ in size");
    Image2D out(v0.width(), v0.height());
    auto a = v0.data();
    auto b = v1.data();
    auto c = v2.data();
    auto o = out.data();
    for (std::size_t i = 0; i < o.size(); ++i)
        o[i] = std::max(std::max(a[i], b[i]), c[i]);
    return out;
}

std::vector<std::uint8_t> fuse_argmax(const Image2D& v0, const Image2D& v1, const Image2D& v2)
{
    if (!v0.same_shape(v1) || !v0.same_shape(v2))
        throw ShapeError("scale responses differ in size");
    std::vector<std::uint8_t> idx(v0.size());
    auto a = v0.data();
    auto b = v1.data();
    auto c = v2.data();
    for (std::size_t i = 0; i < idx.size(); ++i) {
        std::uint8_t best = 0;
        double m = a[i];
        if (b[i] > m) {
            best = 1;
            m = b[i];
        }
        if (c[i] > m)
            best = 2;
        idx[i] = best;
    }
    return idx;
}

double rescale_value(double v, double t, double neg_scale, double pos_scale) noexcept
{
    const double d = v - t;
    return d < 0.0 ? d * neg_scale : d * pos_scale;
}

double sigmoid(double z) noexcept
{
    return 1.0 / (1.0 + std::exp(-z));
}

Image2D rescale_sigmoid(const Image2D& v, double t, double neg_scale, double pos_scale)
{
    if (!(t > 0.0) || !(neg_scale > 0.0) || !(pos_scale > 0.0))
        throw ParameterError("threshold and rescale factors must be positive");
    Image2D p(v.width(), v.height());
    auto in = v.data();
    auto out = p.data();
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = sigmoid(rescale_value(in[i], t, neg_scale, pos_scale));
    return p;
}

Image2D frangi_net_forward(const PatchSet& ps, const FrangiNetParams& params)
{
    const Image2D v0 = single_scale_forward(ps.p0, 0, params.scales[0], params.polarity);
    const Image2D v1 = single_scale_forward(ps.p2, 1, params.scales[1], params.polarity);
    const Image2D v2 = single_scale_forward(ps.p4, 2, params.scales[2], params.polarity);
    return rescale_sigmoid(fuse_scales(v0, v1, v2), params.threshold, params.neg_scale,
                           params.pos_scale);
}

std::vector<Image2D> classical_frangi_responses(const Image2D& img, std::span<const double> sigmas,
                                                Polarity polarity)
{
    if (sigmas.empty())
        throw ParameterError("classical_frangi needs at least one sigma");
    int largest = 0;
    for (double s : sigmas)
        largest = std::max(largest, kernel_size_for_sigma(s));
    if (img.width() <= largest || img.height() <= largest) {
        throw ShapeError("image " + std::to_string(img.width()) + "x" +
                         std::to_string(img.height()) + " too small for kernel support " +
                         std::to_string(largest));
    }
    const int out_w = img.width() - largest + 1;
    const int out_h = img.height() - largest + 1;

    std::vector<Image2D> responses;
    responses.reserve(sigmas.size());
    for (double s : sigmas) {
        const int size = kernel_size_for_sigma(s);
        const ScaleKernels k = gaussian_second_derivative_kernels(s, size);
        const Image2D v = vesselness(eigenvalues(hessian_field(img, k)), 0.5, 1.0, polarity);
        const int off = (largest - size) / 2;
        responses.push_back(v.crop({off, off}, out_w, out_h));
    }
    return responses;
}

Image2D classical_frangi(const Image2D& img, std::span<const double> sigmas, Polarity polarity)
{
    std::vector<Image2D> responses = classical_frangi_responses(img, sigmas, polarity);
    Image2D out = std::move(responses.front());
    for (std::size_t k = 1; k < responses.size(); ++k) {
        auto o = out.data();
        auto r = responses[k].data();
        for (std::size_t i = 0; i < o.size(); ++i)
            o[i] = std::max(o[i], r[i]);
    }
    return out;
}

} // namespace frangi
