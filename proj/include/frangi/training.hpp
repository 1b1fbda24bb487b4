#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "frangi/forward.hpp"
#include "frangi/image.hpp"

namespace frangi {

// ---------------------------------------------------------------------------
// Reverse-mode gradients
// ---------------------------------------------------------------------------

/// Forward intermediates of one scale branch.
struct ScaleTape {
    Image2D resized; // patch after downsampling
    HessianField hessian;
    EigenField eigen;
    Image2D vesselness; // before upsampling
};

/// Everything the backward pass needs from one forward evaluation.
///
/// A tape holds a copy of the parameters it was recorded with, so the
/// adjoints are always evaluated at the forward point.
struct Tape {
    FrangiNetParams params;
    std::array<ScaleTape, 3> scales;
    Image2D fused;
    std::vector<std::uint8_t> argmax;
    Image2D pre_sigmoid;
    Image2D probability;
    bool recorded = false;
};

struct ScaleGradients {
    Image2D d_kxx;
    Image2D d_kxy;
    Image2D d_kyy;
    double d_beta = 0.0;
    double d_c = 0.0;
};

/// Gradients with respect to the nine kernels and six (β, c) scalars.
struct Gradients {
    std::array<ScaleGradients, 3> scales;

    static Gradients zeros_like(const FrangiNetParams& params);

    Gradients& operator+=(const Gradients& other);
    Gradients& operator*=(double s);
    bool all_finite() const;
};

/// Runs frangi_net_forward and records the intermediates.
Tape forward_taped(const PatchSet& ps, const FrangiNetParams& params);

/// Soft dice coefficient (2 Σ p·g + ε) / (Σ p + Σ g + ε).
double soft_dice(const Image2D& p, const LabelMask& g, double epsilon = 1.0);

/// Soft dice loss 1 - soft_dice(p, g, ε).
double dice_loss(const Image2D& p, const LabelMask& g, double epsilon = 1.0);

/// d dice_loss / d p.
Image2D dice_loss_grad(const Image2D& p, const LabelMask& g, double epsilon = 1.0);

/// Exact adjoint of dice_loss ∘ frangi_net_forward at the taped point.
///
/// `loss_scale` multiplies the loss before differentiation (1 for a single
/// item; 1/B when averaging a batch of B items).
Gradients backward(const Tape& tape, const LabelMask& g, double dice_epsilon = 1.0,
                   double loss_scale = 1.0);

// ---------------------------------------------------------------------------
// Optimization
// ---------------------------------------------------------------------------

struct TrainConfig {
    double learning_rate = 1e-6;
    double momentum = 0.5;
    int batch_size = 250;
    int steps = 1000;
    std::uint64_t rng_seed = 0;
    double dice_epsilon = 1.0;
    int threads = 1;

    void validate() const;
};

struct OptimizerState {
    Gradients velocity;

    static OptimizerState zeros_like(const FrangiNetParams& params);
};

/// v <- momentum·v - lr·grad; param <- param + v; β and c clamped to 1e-3.
void sgd_momentum_step(FrangiNetParams& params, const Gradients& grads, OptimizerState& state,
                       const TrainConfig& cfg);

struct LabeledImage {
    Image2D image;
    LabelMask label;
};

struct BatchItem {
    PatchSet patches;
    LabelMask label; // 128×128, aligned with the output window
    std::size_t source = 0;
    PixelCoord top_left;
};

/// Draws cfg.batch_size windows uniformly from uniformly chosen images.
/// The generator is seeded from (cfg.rng_seed, step) so the batch depends
/// only on those two values. Images too small for a window are skipped.
std::vector<BatchItem> sample_batch(std::span<const LabeledImage> images, const TrainConfig& cfg,
                                    std::uint64_t step);

/// Mean per-item dice loss of an untaped forward pass.
double batch_loss(std::span<const BatchItem> batch, const FrangiNetParams& params,
                  double dice_epsilon = 1.0);

struct BatchEvaluation {
    double loss = 0.0;
    Gradients grads;
};

/// Mean dice loss and its gradient; items may run on several threads but
/// the reduction is always in item order.
BatchEvaluation evaluate_batch(std::span<const BatchItem> batch, const FrangiNetParams& params,
                               double dice_epsilon = 1.0, int threads = 1);

struct TrainResult {
    FrangiNetParams params;
    std::vector<double> loss_history;
};

/// Optional per-step callback: (step, mean loss).
using StepObserver = std::function<void(int, double)>;

TrainResult train(std::span<const LabeledImage> dataset, const FrangiNetParams& params0,
                  const TrainConfig& cfg, const StepObserver& observer = {});

// ---------------------------------------------------------------------------
// Finite-difference oracle
// ---------------------------------------------------------------------------

enum class ParamKind : std::uint8_t { kxx, kxy, kyy, beta, c };

/// Addresses one scalar of FrangiNetParams.
struct ParamSelector {
    int scale = 0;
    ParamKind kind = ParamKind::beta;
    int x = 0; // kernel column, ignored for beta/c
    int y = 0; // kernel row, ignored for beta/c
};

double& select_param(FrangiNetParams& params, const ParamSelector& sel);
double select_grad(const Gradients& grads, const ParamSelector& sel);

/// Central difference (L(θ+h) - L(θ-h)) / 2h of batch_loss with respect to one parameter.
/// The difference is taken on the mean soft dice so the constant 1 in the
/// loss does not swamp gradients far below its rounding error.
double finite_difference_grad(const ParamSelector& sel, double h, std::span<const BatchItem> batch,
                              const FrangiNetParams& params, double dice_epsilon = 1.0);

} // namespace frangi
