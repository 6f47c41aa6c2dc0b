#pragma once

#include <string>

#include "cardiopulm/volume.hpp"

namespace cardiopulm {

// Volume file I/O. Two formats, selected by extension:
//
//   *.nii  NIfTI-1 subset: single uncompressed file, datatypes int16 (4) and
//          float32 (16), no extensions, little-endian, axis-aligned
//          orientation only (anything oblique is rejected). scl_slope /
//          scl_inter are applied on load. The writer always emits float32
//          with slope 1 / intercept 0 so save -> load is bit exact, and
//          stashes "state=<intensity_state>" in descrip.
//
//   *.raw  little-endian float32 payload (axis 0 fastest) plus a JSON sidecar
//          at the same path with .json substituted for .raw:
//          {"dims":[H,W,D], "spacing_mm":[x,y,z], "subject_id":..,
//           "scan_id":.., "intensity_state":..}.
//
// subject_id / scan_id for .nii come from the filename convention
// "<subject>_<scan>.nii" (first underscore splits; no underscore means both
// ids equal the stem). descrip wins over the filename if it carries them.

CtVolume load_volume(const std::string& path);

void save_volume(const CtVolume& v, const std::string& path);

}  // namespace cardiopulm
