#include "frangi/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <string>

#include "frangi/error.hpp"
#include "frangi/key_value.hpp"
#include "frangi/random.hpp"

namespace frangi {

namespace {

double segment_distance(double px, double py, const Tube& t)
{
    const double dx = t.end.x - t.start.x;
    const double dy = t.end.y - t.start.y;
    const double len2 = dx * dx + dy * dy;
    double u = ((px - t.start.x) * dx + (py - t.start.y) * dy) / len2;
    u = std::clamp(u, 0.0, 1.0);
    const double ex = px - (t.start.x + u * dx);
    const double ey = py - (t.start.y + u * dy);
    return std::sqrt(ex * ex + ey * ey);
}

} // namespace

void PhantomSpec::validate() const
{
    if (width < 1 || height < 1)
        throw ParameterError("phantom dimensions must be positive");
    if (!(background_level >= 0.0 && background_level <= 1.0))
        throw ParameterError("background level must lie in [0, 1]");
    if (!(noise_sigma >= 0.0))
        throw ParameterError("noise sigma must be non-negative");
    for (std::size_t i = 0; i < tubes.size(); ++i) {
        const Tube& t = tubes[i];
        const std::string id = "tube " + std::to_string(i);
        if (!(t.diameter >= kMinTubeDiameter && t.diameter <= kMaxTubeDiameter))
            throw ParameterError(id + ": diameter " + std::to_string(t.diameter) +
                                 " outside [6, 35]");
        if (!(t.contrast > 0.0 && t.contrast <= 1.0))
            throw ParameterError(id + ": contrast must lie in (0, 1]");
        if (background_level - t.contrast < 0.0)
            throw ParameterError(id + ": contrast exceeds the background level");
        if (t.start.x == t.end.x && t.start.y == t.end.y)
            throw ParameterError(id + ": degenerate segment (start equals end)");
    }
}

PhantomSpec PhantomSpec::transposed() const
{
    PhantomSpec out = *this;
    std::swap(out.width, out.height);
    for (Tube& t : out.tubes) {
        std::swap(t.start.x, t.start.y);
        std::swap(t.end.x, t.end.y);
    }
    return out;
}

Phantom generate_phantom(const PhantomSpec& spec)
{
    spec.validate();
    Phantom ph{Image2D(spec.width, spec.height, spec.background_level),
               LabelMask(spec.width, spec.height)};

    for (int y = 0; y < spec.height; ++y) {
        for (int x = 0; x < spec.width; ++x) {
            double depth = 0.0;
            bool inside = false;
            for (const Tube& t : spec.tubes) {
                const double d = segment_distance(x, y, t);
                const double radius = 0.5 * t.diameter;
                if (d <= radius)
                    inside = true;
                if (spec.profile == TubeProfile::hard) {
                    if (d <= radius)
                        depth += t.contrast;
                } else {
                    const double s = t.diameter / (2.0 * std::numbers::sqrt2);
                    depth += t.contrast * std::exp(-d * d / (2.0 * s * s));
                }
            }
            ph.image(x, y) = spec.background_level - depth;
            ph.label(x, y) = inside ? 1 : 0;
        }
    }

    if (spec.noise_sigma > 0.0) {
        auto rng = keyed_rng(spec.rng_seed, 0);
        for (double& v : ph.image.data())
            v += spec.noise_sigma * standard_normal(rng);
    }
    for (double& v : ph.image.data())
        v = std::clamp(v, 0.0, 1.0);
    return ph;
}

PhantomSpec parse_phantom_spec(std::istream& in)
{
    PhantomSpec spec;
    for (const KeyValue& kv : parse_key_values(in)) {
        if (kv.key == "width") {
            spec.width = static_cast<int>(parse_integer(kv));
        } else if (kv.key == "height") {
            spec.height = static_cast<int>(parse_integer(kv));
        } else if (kv.key == "background") {
            spec.background_level = parse_double(kv);
        } else if (kv.key == "noise_sigma") {
            spec.noise_sigma = parse_double(kv);
        } else if (kv.key == "seed") {
            const long long s = parse_integer(kv);
            if (s < 0)
                throw ParseError(kv.line, "seed must be non-negative");
            spec.rng_seed = static_cast<std::uint64_t>(s);
        } else if (kv.key == "profile") {
            if (kv.value == "hard")
                spec.profile = TubeProfile::hard;
            else if (kv.value == "gaussian")
                spec.profile = TubeProfile::gaussian;
            else
                throw ParseError(kv.line, "profile must be 'hard' or 'gaussian'");
        } else if (kv.key == "tube") {
            const std::vector<double> v = parse_double_list(kv);
            if (v.size() != 5 && v.size() != 6)
                throw ParseError(kv.line, "tube expects 'x0 y0 x1 y1 diameter [contrast]'");
            Tube t{{v[0], v[1]}, {v[2], v[3]}, v[4], v.size() == 6 ? v[5] : 0.4};
            if (!(t.diameter >= kMinTubeDiameter && t.diameter <= kMaxTubeDiameter))
                throw ParseError(kv.line, "tube diameter outside the supported range [6, 35]");
            if (t.start.x == t.end.x && t.start.y == t.end.y)
                throw ParseError(kv.line, "degenerate tube (start equals end)");
            spec.tubes.push_back(t);
        } else {
            throw ParseError(kv.line, "unknown key '" + kv.key + "'");
        }
    }
    spec.validate();
    return spec;
}

PhantomSpec load_phantom_spec(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot read " + path.string());
    return parse_phantom_spec(in);
}

PhantomSpec random_phantom_spec(std::uint64_t seed, int width, int height, int tube_count,
                                double min_diameter, double max_diameter, double noise_sigma,
                                TubeProfile profile)
{
    PhantomSpec spec;
    spec.width = width;
    spec.height = height;
    spec.noise_sigma = noise_sigma;
    spec.profile = profile;
    spec.rng_seed = seed;
    auto rng = keyed_rng(seed, 0x7075626573ULL);
    for (int i = 0; i < tube_count; ++i) {
        // A line through a random interior point at a random angle, clipped
        // generously beyond the image so tubes cross it.
        const double cx = width * (0.2 + 0.6 * uniform_unit(rng));
        const double cy = height * (0.2 + 0.6 * uniform_unit(rng));
        const double angle = std::numbers::pi * uniform_unit(rng);
        const double reach = static_cast<double>(width + height);
        Tube t;
        t.start = {cx - reach * std::cos(angle), cy - reach * std::sin(angle)};
        t.end = {cx + reach * std::cos(angle), cy + reach * std::sin(angle)};
        t.diameter = min_diameter + (max_diameter - min_diameter) * uniform_unit(rng);
        t.contrast = 0.4;
        spec.tubes.push_back(t);
    }
    spec.validate();
    return spec;
}

} // namespace frangi
