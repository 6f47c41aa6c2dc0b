#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "cardiopulm/volume.hpp"

namespace cardiopulm {

// Handcrafted cardiac descriptor: 32 named channels over a clipped-HU ROI.
// Intensity statistics are affine-scaled into O(1) ranges so the fusion head
// trains without a separate normalization stage; the scales are part of the
// channel definitions below.
inline constexpr int kCardiacChannels = 32;

inline constexpr double kCalcThresholdHu = 130.0;   // standard clinical constant
inline constexpr double kFatWindowLoHu = -190.0;
inline constexpr double kFatWindowHiHu = -30.0;
inline constexpr double kSoftTissueLoHu = -30.0;
inline constexpr double kSoftTissueHiHu = 130.0;

// Channel layout (index -> meaning). Sparse fractions carry per-mille (_pm)
// or percent (_pct) units so every channel trains at O(1); divide by the unit
// to recover the raw fraction.
//   0  calc_volume_fraction_pm   voxels > 130 HU / ROI voxels * 1000
//   1  calc_mass_surrogate       sum(HU - 130)+ / ROI voxels
//   2  fat_fraction_pct          voxels in [-190, -30] HU / ROI voxels * 100
//   3  hu_mean_k                 mean HU / 1000
//   4  hu_variance_m             variance of HU / 1e6
//   5  hu_skewness               unitless, clamped to [-5, 5]
//   6..21  hist_00..hist_15      16-bin HU histogram over [-1000, 1000], sums to 1
//   22..27 moment_{ii,jj,kk,ij,ik,jk}  central second moments of the
//          soft-tissue mass in ROI-normalized coordinates
//   28 heart_volume_fraction     largest soft-tissue component / ROI voxels
//   29 calc_largest_blob_pm      largest calcified blob / ROI voxels * 1000
//   30 calc_blob_count           6-connected blobs (>= 3 voxels) / 32, capped at 1
//   31 fat_shell_thickness       fat voxels / heart-component surface voxels / 10
const std::array<std::string, kCardiacChannels>& cardiac_channel_names();

struct CardiacFeatureVector {
    std::array<double, kCardiacChannels> values{};
    // Sparse voxel supports (ROI-linear indices) for the clinical channels;
    // dense channels (statistics, histogram, moments) are re-derived from the
    // ROI on demand by channel_support().
    std::vector<std::uint32_t> calcified_voxels;
    std::vector<std::uint32_t> fat_voxels;
    std::vector<std::uint32_t> largest_calc_blob;
    std::vector<std::uint32_t> heart_component;
};

// Channel extraction. ROI must be in clipped_hu state and at least 8^3.
CardiacFeatureVector extract_cardiac_features(const CtVolume& roi);

// Voxel support of one channel for attribution back-projection. Sparse
// channels return the stored sets; dense channels are recomputed from the ROI
// with the same classification rules extraction used.
std::vector<std::uint32_t> channel_support(const CardiacFeatureVector& f, int channel,
                                           const CtVolume& roi);

std::string feature_csv_header();
std::string feature_csv_row(const std::string& scan_id, const CardiacFeatureVector& f);

}  // namespace cardiopulm
