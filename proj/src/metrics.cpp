#include "frangi/metrics.hpp"

#include <json.hpp>

#include "frangi/error.hpp"

namespace frangi {

LabelMask binarize(const Image2D& p, double threshold)
{
    if (!(threshold > 0.0 && threshold < 1.0))
        throw ParameterError("binarization threshold must lie in (0, 1)");
    return LabelMask::from_image(p, threshold);
}

ConfusionCounts confusion(const LabelMask& pred, const LabelMask& truth,
                          const std::optional<LabelMask>& fov)
{
    if (!pred.same_shape(truth))
        throw ShapeError("prediction and label differ in size");
    if (fov && !fov->same_shape(truth))
        throw ShapeError("field-of-view mask differs in size");
    auto p = pred.data();
    auto t = truth.data();
    ConfusionCounts c;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (fov && !fov->data()[i])
            continue;
        if (p[i] && t[i])
            ++c.tp;
        else if (p[i])
            ++c.fp;
        else if (t[i])
            ++c.fn;
        else
            ++c.tn;
    }
    return c;
}

MetricsReport compute_metrics(const ConfusionCounts& c)
{
    if (c.total() == 0)
        throw ParameterError("no pixels were evaluated");
    MetricsReport r;
    r.counts = c;
    auto ratio = [&](std::uint64_t num, std::uint64_t den, const char* name) {
        if (den == 0) {
            r.degenerate.emplace_back(name);
            return 0.0;
        }
        return static_cast<double>(num) / static_cast<double>(den);
    };
    r.precision = ratio(c.tp, c.tp + c.fp, "precision");
    r.recall = ratio(c.tp, c.tp + c.fn, "recall");
    r.accuracy = ratio(c.tp + c.tn, c.total(), "accuracy");
    r.f1 = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn, "f1");
    return r;
}

std::string metrics_json(const MetricsReport& report, int indent)
{
    nlohmann::ordered_json j;
    j["f1"] = report.f1;
    j["accuracy"] = report.accuracy;
    j["precision"] = report.precision;
    j["recall"] = report.recall;
    j["tp"] = report.counts.tp;
    j["fp"] = report.counts.fp;
    j["fn"] = report.counts.fn;
    j["tn"] = report.counts.tn;
    j["degenerate_flags"] = report.degenerate;
    return j.dump(indent);
}

double dice_coefficient(const LabelMask& a, const LabelMask& b)
{
    const ConfusionCounts c = confusion(a, b);
    const std::uint64_t den = 2 * c.tp + c.fp + c.fn;
    return den == 0 ? 1.0 : static_cast<double>(2 * c.tp) / static_cast<double>(den);
}

} // namespace frangi
