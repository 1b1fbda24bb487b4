#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <vector>

#include "frangi/image.hpp"

namespace frangi {

struct Point2 {
    double x = 0.0;
    double y = 0.0;
};

/// A straight dark tube; the cross-section is measured from the closed segment.
struct Tube {
    Point2 start;
    Point2 end;
    double diameter = 8.0; // pixels, in [6, 35]
    double contrast = 0.4; // depth below the background
};

enum class TubeProfile : std::uint8_t { hard, gaussian };

inline constexpr double kMinTubeDiameter = 6.0;
inline constexpr double kMaxTubeDiameter = 35.0;

struct PhantomSpec {
    int width = 256;
    int height = 256;
    std::vector<Tube> tubes;
    double background_level = 0.8;
    double noise_sigma = 0.0;
    TubeProfile profile = TubeProfile::gaussian;
    std::uint64_t rng_seed = 0;

    void validate() const;
    /// Same configuration mirrored across the main diagonal.
    PhantomSpec transposed() const;
};

struct Phantom {
    Image2D image;
    LabelMask label;
};

/// Renders dark tubes on a constant background with optional seeded noise.
///
/// hard:     depth = contrast where distance <= diameter/2
/// gaussian: depth = contrast·exp(-d² / (2 s²)), s = diameter / (2√2)
/// Depths of overlapping tubes add up; the result is clamped to [0, 1].
/// label = 1 where the distance to any tube axis is <= diameter/2.
Phantom generate_phantom(const PhantomSpec& spec);

/// Reads a phantom spec from `key = value` text:
///   width, height, background, noise_sigma, profile (hard|gaussian), seed,
///   tube = x0 y0 x1 y1 diameter [contrast]     (repeatable)
/// Errors are reported as ParseError with the offending line.
PhantomSpec parse_phantom_spec(std::istream& in);
PhantomSpec load_phantom_spec(const std::filesystem::path& path);

/// Random straight tubes crossing the image with diameters drawn uniformly
/// from [min_diameter, max_diameter]; fully determined by `seed`.
PhantomSpec random_phantom_spec(std::uint64_t seed, int width, int height, int tube_count,
                                double min_diameter, double max_diameter, double noise_sigma,
                                TubeProfile profile = TubeProfile::gaussian);

} // namespace frangi
