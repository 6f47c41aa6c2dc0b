#pragma once

#include <string>

#include "cardiopulm/masks.hpp"
#include "cardiopulm/volume.hpp"

namespace cardiopulm {

inline constexpr int kDefaultRoiExtent = 128;
inline constexpr const char* kLocatorMethod = "mediastinal-centroid-v1";

struct RoiResult {
    RoiBox box;
    bool truncated = false;  // an axis was shorter than the requested extent
    std::string method = kLocatorMethod;
};

// Heart ROI from anatomy alone: center of mass of body voxels between the two
// lungs' bounding boxes, restricted to the middle 60% of the lungs'
// craniocaudal extent; a fixed-size box around it, clamped into the volume.
RoiResult locate_heart_roi(const CtVolume& v, int extent = kDefaultRoiExtent);

// Same, reusing masks the caller already computed.
RoiResult locate_heart_roi(const CtVolume& v, const MaskVolume& body,
                           const MaskVolume& left_lung, const MaskVolume& right_lung,
                           int extent = kDefaultRoiExtent);

std::string roi_to_json(const RoiResult& r);
RoiResult roi_from_json(const std::string& text);

}  // namespace cardiopulm
