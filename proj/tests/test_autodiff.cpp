#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "frangi/error.hpp"
#include "frangi/phantom.hpp"
#include "frangi/training.hpp"

using namespace frangi;

namespace {

std::vector<LabeledImage> phantom_pool(std::uint64_t seed, int count)
{
    std::vector<LabeledImage> pool;
    for (int i = 0; i < count; ++i) {
        Phantom ph = generate_phantom(random_phantom_spec(seed * 100 + i, 256, 256, 4, 6, 20, 0.05));
        pool.push_back({std::move(ph.image), std::move(ph.label)});
    }
    return pool;
}

std::vector<BatchItem> phantom_batch(std::uint64_t seed, int size)
{
    const auto pool = phantom_pool(seed, 2);
    TrainConfig cfg;
    cfg.batch_size = size;
    cfg.rng_seed = seed;
    return sample_batch(pool, cfg, 0);
}

// True when no pixel changes its fused branch, gate state or rescale side
// anywhere inside the ±h stencil, i.e. the loss is smooth along it.
bool stencil_is_smooth(const ParamSelector& sel, double h, const std::vector<BatchItem>& batch,
                       const FrangiNetParams& params)
{
    FrangiNetParams plus = params, minus = params;
    select_param(plus, sel) += h;
    select_param(minus, sel) -= h;
    for (const auto& item : batch) {
        const Tape a = forward_taped(item.patches, plus);
        const Tape b = forward_taped(item.patches, minus);
        if (a.argmax != b.argmax)
            return false;
        for (std::size_t i = 0; i < a.fused.size(); ++i)
            if ((a.fused.data()[i] >= params.threshold) != (b.fused.data()[i] >= params.threshold))
                return false;
        for (int k = 0; k < 3; ++k)
            for (std::size_t i = 0; i < a.scales[k].vesselness.size(); ++i)
                if ((a.scales[k].vesselness.data()[i] == 0.0) !=
                    (b.scales[k].vesselness.data()[i] == 0.0))
                    return false;
    }
    return true;
}

double relative_error(double analytic, double fd)
{
    return std::abs(analytic - fd) / std::max(std::abs(fd), 1e-8);
}

} // namespace

TEST_CASE("dice_loss examples")
{
    const LabelMask g(4, 1, {1, 0, 1, 0});
    CHECK(dice_loss(g.to_image(), g) < 1e-12);

    const LabelMask g3(5, 1, {1, 1, 1, 0, 0});
    CHECK(dice_loss(Image2D(5, 1, 0.0), g3, 1.0) == doctest::Approx(1.0 - 1.0 / 4.0).epsilon(1e-15));

    const LabelMask half(8, 1, {1, 1, 1, 1, 0, 0, 0, 0});
    CHECK(std::abs(dice_loss(Image2D(8, 1, 0.5), half, 1e-9) - 0.5) < 1e-9);

    CHECK_THROWS_AS(dice_loss(Image2D(3, 1), g), ShapeError);
}

TEST_CASE("dice_loss_grad matches finite differences")
{
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Image2D p(6, 5);
    std::vector<std::uint8_t> bits(30);
    for (std::size_t i = 0; i < 30; ++i) {
        p.data()[i] = u(rng);
        bits[i] = u(rng) < 0.3;
    }
    const LabelMask g(6, 5, bits);
    const Image2D grad = dice_loss_grad(p, g, 1.0);
    for (std::size_t i = 0; i < 30; ++i) {
        Image2D hi = p, lo = p;
        hi.data()[i] += 1e-6;
        lo.data()[i] -= 1e-6;
        const double fd = (dice_loss(hi, g) - dice_loss(lo, g)) / 2e-6;
        CHECK(relative_error(grad.data()[i], fd) < 1e-6);
    }
}

TEST_CASE("tape replays the forward pass")
{
    const auto batch = phantom_batch(4, 1);
    const FrangiNetParams params = FrangiNetParams::defaults();
    const Tape tape = forward_taped(batch[0].patches, params);
    CHECK(tape.recorded);
    CHECK(tape.probability == frangi_net_forward(batch[0].patches, params));
}

TEST_CASE("backward matches central differences")
{
    // Random kernel entries in every scale plus all six scalars.
    for (std::uint64_t seed : {11u, 12u}) {
        const auto batch = phantom_batch(seed, 2);
        const FrangiNetParams params = FrangiNetParams::defaults();
        const BatchEvaluation ev = evaluate_batch(batch, params);

        std::vector<ParamSelector> sels;
        std::mt19937_64 rng(seed);
        for (int i = 0; i < 21; ++i) {
            const int s = i % 3;
            const auto kind = static_cast<ParamKind>(rng() % 3);
            sels.push_back({s, kind, static_cast<int>(rng() % 19), static_cast<int>(rng() % 19)});
        }
        for (int s = 0; s < 3; ++s) {
            sels.push_back({s, ParamKind::beta});
            sels.push_back({s, ParamKind::c});
        }
        int smooth = 0;
        for (const auto& sel : sels) {
            const double an = select_grad(ev.grads, sel);
            INFO("scale " << sel.scale << " kind " << int(sel.kind) << " (" << sel.x << ","
                          << sel.y << ") analytic " << an);
            // A stencil small enough to stay clear of max-fusion switches.
            CHECK(relative_error(an, finite_difference_grad(sel, 3e-6, batch, params)) < 1e-4);
            if (stencil_is_smooth(sel, 1e-5, batch, params)) {
                ++smooth;
                CHECK(relative_error(an, finite_difference_grad(sel, 1e-5, batch, params)) < 1e-4);
            }
        }
        CHECK(smooth > 0);
    }
}

TEST_CASE("finite differences converge as h shrinks")
{
    const auto batch = phantom_batch(13, 2);
    const FrangiNetParams params = FrangiNetParams::defaults();
    for (int s = 0; s < 3; ++s) {
        const ParamSelector sel{s, ParamKind::c};
        const double a = finite_difference_grad(sel, 1e-4, batch, params);
        const double b = finite_difference_grad(sel, 5e-5, batch, params);
        CHECK(std::abs(a - b) < 1e-6);
    }
}

TEST_CASE("fully gated scales receive no gradient")
{
    const auto batch = phantom_batch(5, 2);
    FrangiNetParams params = FrangiNetParams::defaults();
    // Zero kernels give a zero Hessian, hence zero vesselness over the whole branch.
    for (Image2D* k : {&params.scales[1].kernels.kxx, &params.scales[1].kernels.kxy,
                       &params.scales[1].kernels.kyy})
        for (double& v : k->data())
            v = 0.0;
    const BatchEvaluation ev = evaluate_batch(batch, params);
    CHECK(ev.grads.scales[1].d_beta == 0.0);
    CHECK(ev.grads.scales[1].d_c == 0.0);
    CHECK(std::abs(finite_difference_grad({1, ParamKind::beta}, 1e-5, batch, params)) < 1e-9);
    CHECK(std::abs(finite_difference_grad({1, ParamKind::c}, 1e-5, batch, params)) < 1e-9);
}

TEST_CASE("backward is linear in the loss scale")
{
    const auto batch = phantom_batch(6, 1);
    const FrangiNetParams params = FrangiNetParams::defaults();
    const Tape tape = forward_taped(batch[0].patches, params);
    const Gradients g1 = backward(tape, batch[0].label, 1.0, 1.0);
    const Gradients g2 = backward(tape, batch[0].label, 1.0, 2.0);
    for (int s = 0; s < 3; ++s) {
        CHECK(g2.scales[s].d_beta == 2 * g1.scales[s].d_beta);
        CHECK(g2.scales[s].d_c == 2 * g1.scales[s].d_c);
        for (std::size_t i = 0; i < g1.scales[s].d_kxx.size(); ++i) {
            CHECK(g2.scales[s].d_kxx.data()[i] == 2 * g1.scales[s].d_kxx.data()[i]);
            CHECK(g2.scales[s].d_kxy.data()[i] == 2 * g1.scales[s].d_kxy.data()[i]);
            CHECK(g2.scales[s].d_kyy.data()[i] == 2 * g1.scales[s].d_kyy.data()[i]);
        }
    }
}

TEST_CASE("max fusion routes each pixel to one branch")
{
    const auto batch = phantom_batch(7, 1);
    const Tape tape = forward_taped(batch[0].patches, FrangiNetParams::defaults());
    REQUIRE(tape.argmax.size() == 128u * 128u);
    std::array<int, 3> counts{};
    for (std::size_t i = 0; i < tape.argmax.size(); ++i) {
        const int k = tape.argmax[i];
        REQUIRE(k < 3);
        ++counts[k];
        // The routed branch carries the fused value.
        const int x = static_cast<int>(i % 128), y = static_cast<int>(i / 128);
        const int f = 1 << k;
        CHECK(tape.scales[k].vesselness(x / f, y / f) == tape.fused.data()[i]);
        for (int j = 0; j < k; ++j) {
            const int fj = 1 << j;
            CHECK(tape.scales[j].vesselness(x / fj, y / fj) < tape.fused.data()[i]);
        }
    }
    CHECK(counts[0] > 0); // ties on the zero background go to scale 0
}

TEST_CASE("backward contract errors")
{
    const auto batch = phantom_batch(8, 1);
    Tape stale;
    CHECK_THROWS_AS(backward(stale, batch[0].label), StateError);
    const Tape tape = forward_taped(batch[0].patches, FrangiNetParams::defaults());
    CHECK_THROWS_AS(backward(tape, LabelMask(64, 64)), StateError);
}

TEST_CASE("gradients are finite and shaped like the params")
{
    const auto batch = phantom_batch(9, 2);
    const FrangiNetParams params = FrangiNetParams::defaults();
    const BatchEvaluation ev = evaluate_batch(batch, params);
    CHECK(ev.grads.all_finite());
    for (int s = 0; s < 3; ++s)
        CHECK(ev.grads.scales[s].d_kxx.width() == 19);
    CHECK(ev.loss == doctest::Approx(batch_loss(batch, params)).epsilon(1e-15));

    // Thread count does not change the reduction.
    const BatchEvaluation ev3 = evaluate_batch(batch, params, 1.0, 3);
    CHECK(ev3.loss == ev.loss);
    for (int s = 0; s < 3; ++s) {
        CHECK(ev3.grads.scales[s].d_kxx == ev.grads.scales[s].d_kxx);
        CHECK(ev3.grads.scales[s].d_c == ev.grads.scales[s].d_c);
    }
}
