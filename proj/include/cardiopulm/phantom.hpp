#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "cardiopulm/findings.hpp"
#include "cardiopulm/volume.hpp"

namespace cardiopulm {

// Parameterized chest phantom: body cylinder of soft tissue (~40 HU), two
// lung ellipsoids (~-850 HU), a heart ellipsoid at heart_center, and planted
// pathology signatures:
//   emphysema   extra < -950 HU speckle inside the lungs, fraction ~ severity
//   effusion    dependent (posterior, +j) water-density layer ~ 10 HU
//   fibrosis    high-attenuation (~-600 HU) speckle in the lung periphery
//   opacity     large soft-tissue blobs (~40 HU) inside the lungs
//   nodule      small compact blobs (~45 HU) inside the lungs
//   calcification  > 300 HU blobs in the heart shell, count ~ burden
//   pericardial fat  [-190,-30] HU voxels in a shell around the heart
//
// The whole template is anchored to heart_center, so shifting heart_center by
// an integer vector translates every structure and the noise field with it.
struct PhantomSpec {
    std::uint64_t seed = 0;
    std::array<int, 3> dims{96, 96, 96};
    std::array<double, 3> spacing{1.5, 1.5, 1.5};
    std::array<double, 5> pathology_levels{};  // indexed by Finding, each in [0,1]
    std::array<double, 3> heart_center{48.0, 49.9, 48.0};
    std::array<double, 3> heart_axes{12.96, 13.92, 15.84};
    double calcification_burden = 0.0;   // >= 0
    double pericardial_fat_fraction = 0.0;  // [0,1]
    std::string subject_id = "anon";
    std::string scan_id = "anon_s0";

    double level(Finding f) const { return pathology_levels[static_cast<int>(f)]; }
    double& level(Finding f) { return pathology_levels[static_cast<int>(f)]; }
};

// Template proportions relative to dims; exposed because feature tests use
// them as geometric oracles.
namespace phantom_geometry {
inline constexpr double kHeartCenterI = 0.50, kHeartCenterJ = 0.52, kHeartCenterK = 0.50;
inline constexpr double kHeartAxisI = 0.135, kHeartAxisJ = 0.145, kHeartAxisK = 0.165;
inline constexpr double kLungOffsetI = 0.25;
inline constexpr double kLungAxisI = 0.12, kLungAxisJ = 0.26, kLungAxisK = 0.36;
inline constexpr double kBodyOffsetJ = 0.02;
inline constexpr double kBodyAxisI = 0.44, kBodyAxisJ = 0.38;
inline constexpr double kFatShellOuter = 1.20;  // relative to heart_axes
inline constexpr double kCalcShellInner = 0.55, kCalcShellOuter = 0.95;
}  // namespace phantom_geometry

PhantomSpec default_phantom_spec(std::uint64_t seed, const std::array<int, 3>& dims = {96, 96, 96});

void validate(const PhantomSpec& spec);

// Deterministic in spec (noise is keyed per anatomy-relative voxel).
CtVolume generate_phantom(const PhantomSpec& spec);

// Seed for repeat scans of the same subject (same anatomy, fresh noise).
std::uint64_t scan_seed(std::uint64_t subject_seed, int scan_index);

// Analytic volume of the pericardial fat shell clipped to a ROI-sized box
// centered like the generator places it; used as the oracle for the fat
// feature channel (fraction = fat_fraction * shell_voxels / roi_voxels).
double fat_shell_voxel_count(const PhantomSpec& spec);

std::string phantom_spec_to_json(const PhantomSpec& spec);
PhantomSpec phantom_spec_from_json(const std::string& text);

}  // namespace cardiopulm
