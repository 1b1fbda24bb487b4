#include <algorithm>
#include <cmath>
#include <string>

#include "frangi/error.hpp"
#include "frangi/training.hpp"

namespace frangi {

namespace {

// Lower bound on the squared eigenvalue gap used in the adjoint division.
constexpr double kDiscriminantFloor = 1e-12;

double sign_of(double v) noexcept
{
    return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
}

void scale_image(Image2D& img, double s)
{
    for (double& v : img.data())
        v *= s;
}

void add_image(Image2D& dst, const Image2D& src)
{
    auto d = dst.data();
    auto s = src.data();
    for (std::size_t i = 0; i < d.size(); ++i)
        d[i] += s[i];
}

// Pulls the upstream gradient on one branch's (pre-upsampling) vesselness map
// back to its kernels and (β, c).
ScaleGradients backward_scale(const ScaleTape& st, const Image2D& dv, const ScaleParams& sp,
                              Polarity polarity)
{
    const int w = dv.width();
    const int h = dv.height();
    Image2D d_hxx(w, h), d_hxy(w, h), d_hyy(w, h);
    double d_beta = 0.0;
    double d_c = 0.0;

    const double beta = sp.beta;
    const double c = sp.c;
    const double beta2 = beta * beta;
    const double c2 = c * c;

    auto up = dv.data();
    auto xx = st.hessian.hxx.data();
    auto xy = st.hessian.hxy.data();
    auto yy = st.hessian.hyy.data();
    auto l1s = st.eigen.lam1.data();
    auto l2s = st.eigen.lam2.data();
    auto gxx = d_hxx.data();
    auto gxy = d_hxy.data();
    auto gyy = d_hyy.data();

    for (std::size_t i = 0; i < up.size(); ++i) {
        const double g = up[i];
        if (g == 0.0)
            continue;
        const double l1 = l1s[i];
        const double l2 = l2s[i];
        const bool gated = polarity == Polarity::dark_tubes ? l2 < 0.0 : l2 > 0.0;
        if (gated)
            continue;

        const double denom = std::abs(l2) + kRatioEpsilon;
        const double rb = std::abs(l1) / denom;
        const double s2 = l1 * l1 + l2 * l2;
        const double blob = std::exp(-rb * rb / (2.0 * beta2));
        const double decay = std::exp(-s2 / (2.0 * c2));
        const double structure = -std::expm1(-s2 / (2.0 * c2));

        d_beta += g * blob * structure * rb * rb / (beta2 * beta);
        d_c += g * (-blob * decay * s2 / (c2 * c));

        const double d_blob_d_rb = -blob * rb / beta2;
        const double d_rb_d_l1 = sign_of(l1) / denom;
        const double d_rb_d_l2 = -std::abs(l1) * sign_of(l2) / (denom * denom);
        const double dv_dl1 = d_blob_d_rb * d_rb_d_l1 * structure + blob * decay * l1 / c2;
        const double dv_dl2 = d_blob_d_rb * d_rb_d_l2 * structure + blob * decay * l2 / c2;

        // Recover which root was assigned to lam2, mirroring eigenvalues_2x2.
        const double trace = xx[i] + yy[i];
        const double diff = xx[i] - yy[i];
        const double disc = diff * diff + 4.0 * xy[i] * xy[i];
        const double root = std::sqrt(disc);
        const double plus = 0.5 * (trace + root);
        const double minus = 0.5 * (trace - root);
        const double branch = std::abs(plus) >= std::abs(minus) ? 1.0 : -1.0;
        const double root_c = std::sqrt(std::max(disc, kDiscriminantFloor));

        // lam2 = (trace + branch·root)/2, lam1 = (trace - branch·root)/2
        const double droot_dxx = diff / root_c;
        const double droot_dyy = -diff / root_c;
        const double droot_dxy = 4.0 * xy[i] / root_c;

        const double g1 = g * dv_dl1;
        const double g2 = g * dv_dl2;
        gxx[i] = 0.5 * (g1 + g2) + 0.5 * branch * (g2 - g1) * droot_dxx;
        gyy[i] = 0.5 * (g1 + g2) + 0.5 * branch * (g2 - g1) * droot_dyy;
        gxy[i] = 0.5 * branch * (g2 - g1) * droot_dxy;
    }

    const int n = sp.kernels.kxx.width();
    return {conv2d_valid_kernel_grad(st.resized, d_hxx, n, n),
            conv2d_valid_kernel_grad(st.resized, d_hxy, n, n),
            conv2d_valid_kernel_grad(st.resized, d_hyy, n, n), d_beta, d_c};
}

} // namespace

Gradients Gradients::zeros_like(const FrangiNetParams& params)
{
    Gradients g;
    for (std::size_t s = 0; s < 3; ++s) {
        const auto& k = params.scales[s].kernels;
        g.scales[s] = {Image2D(k.kxx.width(), k.kxx.height()),
                       Image2D(k.kxy.width(), k.kxy.height()),
                       Image2D(k.kyy.width(), k.kyy.height()), 0.0, 0.0};
    }
    return g;
}

Gradients& Gradients::operator+=(const Gradients& other)
{
    for (std::size_t s = 0; s < 3; ++s) {
        auto& a = scales[s];
        const auto& b = other.scales[s];
        if (!a.d_kxx.same_shape(b.d_kxx) || !a.d_kxy.same_shape(b.d_kxy) ||
            !a.d_kyy.same_shape(b.d_kyy)) {
            throw ShapeError("gradient shapes differ");
        }
        add_image(a.d_kxx, b.d_kxx);
        add_image(a.d_kxy, b.d_kxy);
        add_image(a.d_kyy, b.d_kyy);
        a.d_beta += b.d_beta;
        a.d_c += b.d_c;
    }
    return *this;
}

Gradients& Gradients::operator*=(double s)
{
    for (auto& g : scales) {
        scale_image(g.d_kxx, s);
        scale_image(g.d_kxy, s);
        scale_image(g.d_kyy, s);
        g.d_beta *= s;
        g.d_c *= s;
    }
    return *this;
}

bool Gradients::all_finite() const
{
    for (const auto& g : scales) {
        if (!g.d_kxx.all_finite() || !g.d_kxy.all_finite() || !g.d_kyy.all_finite() ||
            !std::isfinite(g.d_beta) || !std::isfinite(g.d_c)) {
            return false;
        }
    }
    return true;
}

Tape forward_taped(const PatchSet& ps, const FrangiNetParams& params)
{
    Tape tape;
    tape.params = params;
    std::array<Image2D, 3> upsampled;
    for (int s = 0; s < 3; ++s) {
        const Image2D& patch = ps.at(s);
        if (patch.width() != kPatchSides[s] || patch.height() != kPatchSides[s])
            throw ShapeError("patch set has wrong size at scale " + std::to_string(s));
        const int factor = kScaleFactors[s];
        const ScaleParams& sp = params.scales[s];
        ScaleTape& st = tape.scales[s];
        st.resized = downsample_avg(patch, factor);
        st.hessian = hessian_field(st.resized, sp.kernels);
        st.eigen = eigenvalues(st.hessian);
        st.vesselness = vesselness(st.eigen, sp.beta, sp.c, params.polarity);
        upsampled[s] = upsample_nn(st.vesselness, factor);
        if (upsampled[s].width() != kOutputSide || upsampled[s].height() != kOutputSide)
            throw ShapeError("kernel size breaks the 128x128 output geometry");
    }
    tape.fused = fuse_scales(upsampled[0], upsampled[1], upsampled[2]);
    tape.argmax = fuse_argmax(upsampled[0], upsampled[1], upsampled[2]);

    tape.pre_sigmoid = Image2D(tape.fused.width(), tape.fused.height());
    tape.probability = Image2D(tape.fused.width(), tape.fused.height());
    auto f = tape.fused.data();
    auto z = tape.pre_sigmoid.data();
    auto p = tape.probability.data();
    for (std::size_t i = 0; i < f.size(); ++i) {
        z[i] = rescale_value(f[i], params.threshold, params.neg_scale, params.pos_scale);
        p[i] = sigmoid(z[i]);
    }
    tape.recorded = true;
    return tape;
}

double soft_dice(const Image2D& p, const LabelMask& g, double epsilon)
{
    if (!g.same_shape(p))
        throw ShapeError("dice loss: prediction and label differ in size");
    if (!(epsilon > 0.0))
        throw ParameterError("dice epsilon must be positive");
    auto pv = p.data();
    auto gv = g.data();
    double inter = 0.0, sum_p = 0.0, sum_g = 0.0;
    for (std::size_t i = 0; i < pv.size(); ++i) {
        inter += pv[i] * gv[i];
        sum_p += pv[i];
        sum_g += gv[i];
    }
    return (2.0 * inter + epsilon) / (sum_p + sum_g + epsilon);
}

double dice_loss(const Image2D& p, const LabelMask& g, double epsilon)
{
    return 1.0 - soft_dice(p, g, epsilon);
}

Image2D dice_loss_grad(const Image2D& p, const LabelMask& g, double epsilon)
{
    if (!g.same_shape(p))
        throw ShapeError("dice loss: prediction and label differ in size");
    auto pv = p.data();
    auto gv = g.data();
    double inter = 0.0, sum_p = 0.0, sum_g = 0.0;
    for (std::size_t i = 0; i < pv.size(); ++i) {
        inter += pv[i] * gv[i];
        sum_p += pv[i];
        sum_g += gv[i];
    }
    const double num = 2.0 * inter + epsilon;
    const double den = sum_p + sum_g + epsilon;
    Image2D grad(p.width(), p.height());
    auto out = grad.data();
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = -(2.0 * gv[i] * den - num) / (den * den);
    return grad;
}

Gradients backward(const Tape& tape, const LabelMask& g, double dice_epsilon, double loss_scale)
{
    if (!tape.recorded)
        throw StateError("backward called on an empty tape");
    if (!g.same_shape(tape.probability))
        throw StateError("label dims do not match the taped forward output");
    const FrangiNetParams& params = tape.params;

    Image2D upstream = dice_loss_grad(tape.probability, g, dice_epsilon);
    {
        auto u = upstream.data();
        auto p = tape.probability.data();
        auto f = tape.fused.data();
        for (std::size_t i = 0; i < u.size(); ++i) {
            const double slope = f[i] - params.threshold < 0.0 ? params.neg_scale
                                                                 : params.pos_scale;
            u[i] *= loss_scale * p[i] * (1.0 - p[i]) * slope;
        }
    }

    Gradients grads;
    for (int s = 0; s < 3; ++s) {
        Image2D routed(upstream.width(), upstream.height());
        auto r = routed.data();
        auto u = upstream.data();
        for (std::size_t i = 0; i < r.size(); ++i)
            r[i] = tape.argmax[i] == s ? u[i] : 0.0;
        const Image2D dv = upsample_nn_adjoint(routed, kScaleFactors[s]);
        grads.scales[s] = backward_scale(tape.scales[s], dv, params.scales[s], params.polarity);
    }
    return grads;
}

} // namespace frangi
