#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "frangi/image.hpp"

namespace frangi {

struct ConfusionCounts {
    std::uint64_t tp = 0;
    std::uint64_t fp = 0;
    std::uint64_t fn = 0;
    std::uint64_t tn = 0;

    std::uint64_t total() const noexcept { return tp + fp + fn + tn; }

    ConfusionCounts& operator+=(const ConfusionCounts& o) noexcept
    {
        tp += o.tp;
        fp += o.fp;
        fn += o.fn;
        tn += o.tn;
        return *this;
    }

    friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

/// Segmentation quality. A ratio whose denominator is zero is reported as 0
/// and its name is listed in `degenerate`.
struct MetricsReport {
    double f1 = 0.0;
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    ConfusionCounts counts;
    std::vector<std::string> degenerate;
};

/// 1 where p >= threshold. threshold must lie in (0, 1).
LabelMask binarize(const Image2D& p, double threshold = 0.5);

/// Counts over all pixels, or only where `fov` is 1.
ConfusionCounts confusion(const LabelMask& pred, const LabelMask& truth,
                          const std::optional<LabelMask>& fov = std::nullopt);

MetricsReport compute_metrics(const ConfusionCounts& c);

/// JSON object with keys f1, accuracy, precision, recall, tp, fp, fn, tn, degenerate_flags.
std::string metrics_json(const MetricsReport& report, int indent = 2);

/// Hard dice coefficient (equal to F1) of two masks; 1 when both are empty.
double dice_coefficient(const LabelMask& a, const LabelMask& b);

} // namespace frangi
