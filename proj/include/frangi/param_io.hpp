#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>

#include "frangi/forward.hpp"

namespace frangi {

// Binary little-endian parameter file:
//   "FRNGNET1"
//   f64 threshold, f64 neg_scale, f64 pos_scale, u8 polarity (0 dark, 1 bright)
//   3 × { u32 side, f64[side²] kxx, f64[side²] kxy, f64[side²] kyy, f64 beta, f64 c }
// Kernels are row-major.

void write_params(std::ostream& out, const FrangiNetParams& params);
FrangiNetParams read_params(std::istream& in);

void save_params(const std::filesystem::path& path, const FrangiNetParams& params);
FrangiNetParams load_params(const std::filesystem::path& path);

/// Writes `step,loss` CSV with a header row; steps are 0-based.
void save_loss_history(const std::filesystem::path& path, std::span<const double> losses);

} // namespace frangi
