#include <algorithm>
#include <cmath>
#include <iostream>
#include <string>

#include "frangi/error.hpp"
#include "frangi/parallel.hpp"
#include "frangi/random.hpp"
#include "frangi/training.hpp"

namespace frangi {

namespace {

void update_kernel(Image2D& param, const Image2D& grad, Image2D& velocity, double lr,
                   double momentum)
{
    if (!param.same_shape(grad) || !param.same_shape(velocity))
        throw ShapeError("optimizer: kernel, gradient and velocity shapes differ");
    auto p = param.data();
    auto g = grad.data();
    auto v = velocity.data();
    for (std::size_t i = 0; i < p.size(); ++i) {
        v[i] = momentum * v[i] - lr * g[i];
        p[i] += v[i];
    }
}

void update_scalar(double& param, double grad, double& velocity, double lr, double momentum)
{
    velocity = momentum * velocity - lr * grad;
    param += velocity;
}

bool admits_window(const Image2D& img)
{
    const int need = kOutputSide + 2 * kPatchMargin;
    return img.width() >= need && img.height() >= need;
}

} // namespace

void TrainConfig::validate() const
{
    if (!(learning_rate > 0.0))
        throw ParameterError("learning rate must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0))
        throw ParameterError("momentum must lie in [0, 1)");
    if (batch_size < 1)
        throw ParameterError("batch size must be at least 1");
    if (steps < 1)
        throw ParameterError("steps must be at least 1");
    if (!(dice_epsilon > 0.0))
        throw ParameterError("dice epsilon must be positive");
    if (threads < 1)
        throw ParameterError("threads must be at least 1");
}

OptimizerState OptimizerState::zeros_like(const FrangiNetParams& params)
{
    return {Gradients::zeros_like(params)};
}

void sgd_momentum_step(FrangiNetParams& params, const Gradients& grads, OptimizerState& state,
                       const TrainConfig& cfg)
{
    const double lr = cfg.learning_rate;
    const double mu = cfg.momentum;
    for (std::size_t s = 0; s < 3; ++s) {
        ScaleParams& sp = params.scales[s];
        const ScaleGradients& g = grads.scales[s];
        ScaleGradients& v = state.velocity.scales[s];
        update_kernel(sp.kernels.kxx, g.d_kxx, v.d_kxx, lr, mu);
        update_kernel(sp.kernels.kxy, g.d_kxy, v.d_kxy, lr, mu);
        update_kernel(sp.kernels.kyy, g.d_kyy, v.d_kyy, lr, mu);
        update_scalar(sp.beta, g.d_beta, v.d_beta, lr, mu);
        update_scalar(sp.c, g.d_c, v.d_c, lr, mu);
        sp.beta = std::max(sp.beta, kMinBlobness);
        sp.c = std::max(sp.c, kMinStructureness);
    }
}

std::vector<BatchItem> sample_batch(std::span<const LabeledImage> images, const TrainConfig& cfg,
                                    std::uint64_t step)
{
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < images.size(); ++i) {
        if (!images[i].label.same_shape(images[i].image))
            throw ShapeError("image " + std::to_string(i) + ": label dims differ from image");
        if (admits_window(images[i].image)) {
            pool.push_back(i);
        } else {
            std::cerr << "warning: skipping training image " << i << " ("
                      << images[i].image.width() << "x" << images[i].image.height()
                      << " is smaller than 200x200)\n";
        }
    }
    if (pool.empty())
        throw ParameterError("no training image is large enough for a 200x200 patch set");

    auto rng = keyed_rng(cfg.rng_seed, step);
    std::vector<BatchItem> batch;
    batch.reserve(static_cast<std::size_t>(cfg.batch_size));
    for (int b = 0; b < cfg.batch_size; ++b) {
        const std::size_t src = pool[uniform_index(rng, pool.size())];
        const LabeledImage& li = images[src];
        const auto span_x = static_cast<std::uint64_t>(li.image.width() - kOutputSide -
                                                       2 * kPatchMargin + 1);
        const auto span_y = static_cast<std::uint64_t>(li.image.height() - kOutputSide -
                                                       2 * kPatchMargin + 1);
        const PixelCoord tl{kPatchMargin + static_cast<int>(uniform_index(rng, span_x)),
                            kPatchMargin + static_cast<int>(uniform_index(rng, span_y))};
        batch.push_back({extract_patch_set(li.image, tl),
                         li.label.crop(tl, kOutputSide, kOutputSide), src, tl});
    }
    return batch;
}

double batch_loss(std::span<const BatchItem> batch, const FrangiNetParams& params,
                  double dice_epsilon)
{
    if (batch.empty())
        throw ParameterError("empty batch");
    double total = 0.0;
    for (const BatchItem& item : batch)
        total += dice_loss(frangi_net_forward(item.patches, params), item.label, dice_epsilon);
    return total / static_cast<double>(batch.size());
}

BatchEvaluation evaluate_batch(std::span<const BatchItem> batch, const FrangiNetParams& params,
                               double dice_epsilon, int threads)
{
    if (batch.empty())
        throw ParameterError("empty batch");
    std::vector<double> losses(batch.size());
    std::vector<Gradients> grads(batch.size());
    parallel_for(batch.size(), threads, [&](std::size_t i) {
        const Tape tape = forward_taped(batch[i].patches, params);
        losses[i] = dice_loss(tape.probability, batch[i].label, dice_epsilon);
        grads[i] = backward(tape, batch[i].label, dice_epsilon);
    });

    BatchEvaluation out{0.0, Gradients::zeros_like(params)};
    for (std::size_t i = 0; i < batch.size(); ++i) {
        out.loss += losses[i];
        out.grads += grads[i];
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    out.loss *= inv;
    out.grads *= inv;
    return out;
}

TrainResult train(std::span<const LabeledImage> dataset, const FrangiNetParams& params0,
                  const TrainConfig& cfg, const StepObserver& observer)
{
    cfg.validate();
    params0.validate();
    if (dataset.empty())
        throw ParameterError("training set is empty");

    TrainResult result{params0, {}};
    result.loss_history.reserve(static_cast<std::size_t>(cfg.steps));
    OptimizerState state = OptimizerState::zeros_like(params0);
    for (int step = 0; step < cfg.steps; ++step) {
        const auto batch = sample_batch(dataset, cfg, static_cast<std::uint64_t>(step));
        const BatchEvaluation eval =
            evaluate_batch(batch, result.params, cfg.dice_epsilon, cfg.threads);
        if (!std::isfinite(eval.loss))
            throw Error("non-finite loss at step " + std::to_string(step));
        if (!eval.grads.all_finite())
            throw Error("non-finite gradient at step " + std::to_string(step));
        result.loss_history.push_back(eval.loss);
        sgd_momentum_step(result.params, eval.grads, state, cfg);
        if (observer)
            observer(step, eval.loss);
    }
    return result;
}

double& select_param(FrangiNetParams& params, const ParamSelector& sel)
{
    if (sel.scale < 0 || sel.scale > 2)
        throw ParameterError("selector scale must be 0, 1 or 2");
    ScaleParams& sp = params.scales[static_cast<std::size_t>(sel.scale)];
    auto entry = [&](Image2D& k) -> double& {
        if (sel.x < 0 || sel.y < 0 || sel.x >= k.width() || sel.y >= k.height())
            throw ParameterError("selector addresses a kernel entry outside the kernel");
        return k(sel.x, sel.y);
    };
    switch (sel.kind) {
    case ParamKind::kxx: return entry(sp.kernels.kxx);
    case ParamKind::kxy: return entry(sp.kernels.kxy);
    case ParamKind::kyy: return entry(sp.kernels.kyy);
    case ParamKind::beta: return sp.beta;
    case ParamKind::c: return sp.c;
    }
    throw ParameterError("unknown parameter kind");
}

double select_grad(const Gradients& grads, const ParamSelector& sel)
{
    if (sel.scale < 0 || sel.scale > 2)
        throw ParameterError("selector scale must be 0, 1 or 2");
    const ScaleGradients& g = grads.scales[static_cast<std::size_t>(sel.scale)];
    auto entry = [&](const Image2D& k) {
        if (sel.x < 0 || sel.y < 0 || sel.x >= k.width() || sel.y >= k.height())
            throw ParameterError("selector addresses a kernel entry outside the kernel");
        return k(sel.x, sel.y);
    };
    switch (sel.kind) {
    case ParamKind::kxx: return entry(g.d_kxx);
    case ParamKind::kxy: return entry(g.d_kxy);
    case ParamKind::kyy: return entry(g.d_kyy);
    case ParamKind::beta: return g.d_beta;
    case ParamKind::c: return g.d_c;
    }
    throw ParameterError("unknown parameter kind");
}

double finite_difference_grad(const ParamSelector& sel, double h, std::span<const BatchItem> batch,
                              const FrangiNetParams& params, double dice_epsilon)
{
    if (!(h > 0.0))
        throw ParameterError("finite-difference step must be positive");
    FrangiNetParams plus = params;
    FrangiNetParams minus = params;
    select_param(plus, sel) += h;
    select_param(minus, sel) -= h;
    if (batch.empty())
        throw ParameterError("empty batch");
    auto mean_dice = [&](const FrangiNetParams& p) {
        double total = 0.0;
        for (const BatchItem& item : batch)
            total += soft_dice(frangi_net_forward(item.patches, p), item.label, dice_epsilon);
        return total / static_cast<double>(batch.size());
    };
    return (mean_dice(minus) - mean_dice(plus)) / (2.0 * h);
}

} // namespace frangi
