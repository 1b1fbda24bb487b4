#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "frangi/error.hpp"
#include "frangi/forward.hpp"
#include "frangi/phantom.hpp"

using namespace frangi;

namespace {

// Brute-force eigen solver: bisection on the characteristic polynomial over
// the Gershgorin interval, independent of the closed form.
std::array<double, 2> brute_eigen(double a, double b, double d)
{
    auto charpoly = [&](double x) { return (a - x) * (d - x) - b * b; };
    const double lo = std::min(a, d) - std::abs(b);
    const double hi = std::max(a, d) + std::abs(b);
    const double mid = 0.5 * (a + d);
    auto bisect = [&](double l, double h) {
        // charpoly > 0 outside the roots, < 0 between them.
        for (int i = 0; i < 200; ++i) {
            const double m = 0.5 * (l + h);
            if (m == l || m == h)
                break;
            if ((charpoly(m) > 0) == (charpoly(l) > 0))
                l = m;
            else
                h = m;
        }
        return 0.5 * (l + h);
    };
    double r_lo = lo, r_hi = hi;
    if (charpoly(mid) < 0) {
        r_lo = bisect(lo, mid);
        r_hi = bisect(mid, hi);
    } else {
        r_lo = r_hi = mid; // repeated root
    }
    return std::abs(r_hi) >= std::abs(r_lo) ? std::array{r_lo, r_hi} : std::array{r_hi, r_lo};
}

Image2D constant(int side, double v) { return Image2D(side, side, v); }

PatchSet constant_patches(double v)
{
    return {constant(146, v), constant(164, v), constant(200, v)};
}

PatchSet phantom_patches(std::uint64_t seed)
{
    const Phantom ph = generate_phantom(random_phantom_spec(seed, 256, 256, 4, 6, 20, 0.05));
    return extract_patch_set(ph.image, {64, 64});
}

} // namespace

TEST_CASE("eigenvalues_2x2 examples")
{
    auto e = eigenvalues_2x2(3, 0, 1);
    CHECK(e[0] == 1.0);
    CHECK(e[1] == 3.0);
    e = eigenvalues_2x2(1, 2, 1);
    CHECK(e[0] == doctest::Approx(-1.0).epsilon(1e-15));
    CHECK(e[1] == doctest::Approx(3.0).epsilon(1e-15));
    e = eigenvalues_2x2(0, 0, 0);
    CHECK(e[0] == 0.0);
    CHECK(e[1] == 0.0);
    // Magnitude tie: lam2 takes the + branch.
    e = eigenvalues_2x2(0, 1, 0);
    CHECK(e[1] == 1.0);
    CHECK(e[0] == -1.0);
}

TEST_CASE("eigenvalues agree with a brute-force solver")
{
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Image2D hxx(100, 100), hxy(100, 100), hyy(100, 100);
    for (std::size_t i = 0; i < hxx.size(); ++i) {
        hxx.data()[i] = u(rng);
        hxy.data()[i] = u(rng);
        hyy.data()[i] = u(rng);
    }
    const EigenField e = eigenvalues({hxx, hxy, hyy});
    for (std::size_t i = 0; i < hxx.size(); ++i) {
        const double a = hxx.data()[i], b = hxy.data()[i], d = hyy.data()[i];
        const auto ref = brute_eigen(a, b, d);
        const double l1 = e.lam1.data()[i], l2 = e.lam2.data()[i];
        CHECK(std::abs(l1 - ref[0]) < 1e-12);
        CHECK(std::abs(l2 - ref[1]) < 1e-12);
        CHECK(std::abs(l2) >= std::abs(l1));
        CHECK(std::abs(l1 + l2 - (a + d)) < 1e-10);
        CHECK(std::abs(l1 * l2 - (a * d - b * b)) < 1e-10);
    }
}

TEST_CASE("vesselness examples")
{
    const auto dark = Polarity::dark_tubes;
    CHECK(vesselness_value(0, 2, 0.5, 1, dark) == doctest::Approx(0.8646647167633873).epsilon(1e-14));
    CHECK(vesselness_value(0, 0, 0.5, 1, dark) == 0.0);
    CHECK(vesselness_value(0, -2, 0.5, 1, dark) == 0.0);
    CHECK(vesselness_value(2, 2, 0.5, 1, dark) ==
          doctest::Approx(0.13285653105994633).epsilon(1e-10));

    CHECK(vesselness_value(0, 2, 0.5, 1, Polarity::bright_tubes) == 0.0);
    CHECK(vesselness_value(0, -2, 0.5, 1, Polarity::bright_tubes) ==
          doctest::Approx(0.8646647167633873).epsilon(1e-14));
}

TEST_CASE("vesselness range and monotonicity")
{
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, 5.0);
    for (int trial = 0; trial < 1000; ++trial) {
        const double l2 = u(rng) + 1e-3;
        const double ratio = u(rng) / 5.0; // R in [0, 1]
        const double v = vesselness_value(ratio * l2, l2, 0.5, 1, Polarity::dark_tubes);
        CHECK(v >= 0.0);
        CHECK(v < 1.0);
        // Scaling both eigenvalues up keeps R and raises S.
        CHECK(vesselness_value(1.5 * ratio * l2, 1.5 * l2, 0.5, 1, Polarity::dark_tubes) >= v);
    }
    const double s = 1.3;
    double prev = 2.0;
    for (double theta = 0.0; theta <= std::numbers::pi / 4; theta += 0.01) {
        // lam1 = s sin θ, lam2 = s cos θ: S fixed, R = tan θ increasing.
        const double v =
            vesselness_value(s * std::sin(theta), s * std::cos(theta), 0.5, 1, Polarity::dark_tubes);
        CHECK(v < prev);
        prev = v;
    }
}

TEST_CASE("rescale_sigmoid")
{
    const double t = 1e-3;
    CHECK(rescale_value(0.0, t, 20000, 2000) == doctest::Approx(-20.0).epsilon(1e-15));
    CHECK(rescale_value(t, t, 20000, 2000) == 0.0);
    CHECK(rescale_value(0.4, t, 20000, 2000) == doctest::Approx(798.0).epsilon(1e-14));
    CHECK(sigmoid(-20.0) == doctest::Approx(2.0611536181902037e-09).epsilon(1e-12));
    CHECK(sigmoid(0.0) == 0.5);
    CHECK(sigmoid(798.0) > 1 - 1e-8);

    const Image2D v(5, 1, {0.0, 5e-4, 1e-3, 2e-3, 0.4});
    const Image2D p = rescale_sigmoid(v, t, 20000, 2000);
    CHECK(p(2, 0) == 0.5);
    for (int x = 1; x < 5; ++x)
        CHECK(p(x, 0) >= p(x - 1, 0));
    CHECK(p(0, 0) < 1e-8);
    CHECK(p(1, 0) < p(2, 0));
    CHECK(p(2, 0) < p(3, 0));
}

TEST_CASE("hessian_field")
{
    const ScaleKernels k = gaussian_second_derivative_kernels(3.0, 19);
    const HessianField h = hessian_field(constant(146, 0.6), k);
    CHECK(h.hxx.width() == 128);
    for (double v : h.hxy.data())
        CHECK(std::abs(v) < 1e-17);
    // Constant images leave only the truncation residue of sum(kxx).
    for (double v : h.hxx.data())
        CHECK(std::abs(v) < 0.6 * 2e-3);
}

TEST_CASE("single_scale_forward")
{
    const FrangiNetParams params = FrangiNetParams::defaults();
    const PatchSet ps = constant_patches(0.5);
    for (int s = 0; s < 3; ++s) {
        const Image2D v = single_scale_forward(ps.at(s), s, params.scales[s], params.polarity);
        CHECK(v.width() == 128);
        CHECK(v.height() == 128);
    }
    // A constant patch only sees the negative residue of sum(kxx), which the
    // dark-tube gate removes.
    const Image2D v = single_scale_forward(ps.p4, 2, params.scales[2], Polarity::dark_tubes);
    for (double x : v.data())
        CHECK(x == 0.0);
    CHECK_THROWS_AS(single_scale_forward(ps.p0, 1, params.scales[1], params.polarity), ShapeError);
    CHECK_THROWS_AS(single_scale_forward(ps.p4, 0, params.scales[0], params.polarity), ShapeError);
}

TEST_CASE("fuse_scales")
{
    const Image2D a(1, 1, 0.1), b(1, 1, 0.3), c(1, 1, 0.2);
    CHECK(fuse_scales(a, b, c)(0, 0) == 0.3);
    CHECK(fuse_argmax(a, b, c)[0] == 1);
    CHECK(fuse_argmax(b, b, b)[0] == 0);
    CHECK(fuse_argmax(a, b, b)[0] == 1);
    CHECK(fuse_scales(a, a, a) == a);
    CHECK_THROWS_AS(fuse_scales(a, Image2D(2, 1), c), ShapeError);
}

TEST_CASE("frangi_net_forward")
{
    const FrangiNetParams params = FrangiNetParams::defaults();
    const Image2D p = frangi_net_forward(constant_patches(0.8), params);
    for (double v : p.data())
        CHECK(v == doctest::Approx(2.0611536181902037e-09).epsilon(1e-12));

    const PatchSet ps = phantom_patches(3);
    const Image2D out = frangi_net_forward(ps, params);
    CHECK(out == frangi_net_forward(ps, params));
    for (double v : out.data()) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
    }

    // Manual composition of the individual stages.
    Image2D v[3];
    for (int s = 0; s < 3; ++s)
        v[s] = single_scale_forward(ps.at(s), s, params.scales[s], params.polarity);
    const Image2D manual = rescale_sigmoid(fuse_scales(v[0], v[1], v[2]), params.threshold,
                                           params.neg_scale, params.pos_scale);
    CHECK(manual == out);
}

TEST_CASE("transposed input gives transposed vesselness")
{
    const FrangiNetParams params = FrangiNetParams::defaults();
    PhantomSpec spec;
    spec.width = spec.height = 146;
    spec.tubes.push_back({{73, 10}, {73, 136}, 8.0, 0.4});
    spec.tubes.push_back({{20, 30}, {120, 90}, 12.0, 0.3});
    const Image2D img = generate_phantom(spec).image;
    const Image2D imgT = generate_phantom(spec.transposed()).image;
    CHECK(imgT == img.transposed());
    const Image2D v = single_scale_forward(img, 0, params.scales[0], params.polarity);
    const Image2D vT = single_scale_forward(imgT, 0, params.scales[0], params.polarity);
    const Image2D vt = v.transposed();
    for (std::size_t i = 0; i < v.size(); ++i)
        CHECK(std::abs(vT.data()[i] - vt.data()[i]) < 1e-10);
}

TEST_CASE("scale 0 equals the classical filter at sigma 3")
{
    const FrangiNetParams params = FrangiNetParams::defaults();
    const std::vector<double> sigmas{3.0};
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const Phantom ph = generate_phantom(random_phantom_spec(seed, 146, 146, 3, 6, 20, 0.05));
        const Image2D net = single_scale_forward(ph.image, 0, params.scales[0], params.polarity);
        const Image2D classic = classical_frangi(ph.image, sigmas);
        REQUIRE(classic.width() == 128);
        double worst = 0.0;
        for (std::size_t i = 0; i < net.size(); ++i)
            worst = std::max(worst, std::abs(net.data()[i] - classic.data()[i]));
        CHECK(worst < 1e-10);
    }
}

TEST_CASE("classical_frangi")
{
    const std::vector<double> sigmas{3.0, 6.0};
    const Image2D out = classical_frangi(Image2D(100, 90, 0.5), sigmas);
    CHECK(out.width() == 100 - 36);
    CHECK(out.height() == 90 - 36);
    for (double v : out.data())
        CHECK(v == 0.0);
    CHECK_THROWS_AS(classical_frangi(Image2D(30, 30), sigmas), ShapeError);

    // σ = 3 responds most strongly on a tube of diameter 2√2·3.
    PhantomSpec spec;
    spec.width = spec.height = 160;
    spec.tubes.push_back({{80, 0}, {80, 159}, 2 * std::sqrt(2.0) * 3, 0.4});
    const Image2D img = generate_phantom(spec).image;
    const std::vector<double> all{3.0, 6.0, 12.0};
    const auto maps = classical_frangi_responses(img, all);
    REQUIRE(maps.size() == 3);
    const int cx = 80 - 36, cy = maps[0].height() / 2;
    CHECK(maps[0](cx, cy) > maps[1](cx, cy));
    CHECK(maps[0](cx, cy) > maps[2](cx, cy));
}

TEST_CASE("FrangiNetParams::validate")
{
    FrangiNetParams p = FrangiNetParams::defaults();
    CHECK_NOTHROW(p.validate());
    p.threshold = 0.0;
    CHECK_THROWS_AS(p.validate(), ParameterError);
    p = FrangiNetParams::defaults();
    p.scales[1].beta = 1e-4;
    CHECK_THROWS_AS(p.validate(), ParameterError);
}
