#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace cardiopulm::kernels {

// Voxel-level inner loops, each in a serial and an OpenMP flavor. The serial
// flavor is the reference the tests compare against; both use the same fixed
// block decomposition for reductions, so results are bitwise identical no
// matter the thread count. bench/kernel_bench.cpp times the two side by side.

enum class Exec { serial, parallel };

// Fixed reduction block; changing it changes reduction results, so it is a
// format-level constant.
inline constexpr std::size_t kReduceBlock = 4096;

void clamp_inplace(std::span<float> v, float lo, float hi, Exec exec);

// y = a*x + b, in place.
void affine_inplace(std::span<float> v, float a, float b, Exec exec);

// Trilinear resampling of a dense grid (axis 0 fastest) onto an isotropic
// grid with spacing target_mm, edge-clamped. dst must hold
// ddims[0]*ddims[1]*ddims[2] elements.
void resample_trilinear(const float* src, const std::array<int, 3>& sdims,
                        const std::array<double, 3>& sspacing, float* dst,
                        const std::array<int, 3>& ddims, double target_mm, Exec exec);

std::size_t count_in_range(std::span<const float> v, float lo, float hi, Exec exec);

// Mask of v[i] > threshold (1/0).
void threshold_above(std::span<const float> v, float threshold,
                     std::span<std::uint8_t> out, Exec exec);

struct MomentSums {
    double n = 0, s1 = 0, s2 = 0, s3 = 0;
};

// Blocked deterministic sums of x, x^2, x^3.
MomentSums moment_sums(std::span<const float> v, Exec exec);

// Normalized 16-bin histogram over [lo, hi]; values outside are clamped to
// the boundary bins (inputs are clipped upstream anyway).
std::array<double, 16> histogram16(std::span<const float> v, float lo, float hi,
                                   Exec exec);

// Deterministic pairwise-tree sum over a precomputed vector of terms; used by
// the fusion gradient so parallel per-example work folds in a fixed order.
double pairwise_sum(std::span<const double> terms);

}  // namespace cardiopulm::kernels
