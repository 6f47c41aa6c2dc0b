#include "cardiopulm/volume.hpp"

#include <cmath>

#include "cardiopulm/errors.hpp"

namespace cardiopulm {

const char* to_string(IntensityState s) {
    switch (s) {
        case IntensityState::raw_hu: return "raw_hu";
        case IntensityState::clipped_hu: return "clipped_hu";
        case IntensityState::normalized: return "normalized";
    }
    return "raw_hu";
}

IntensityState intensity_state_from_string(const std::string& s) {
    if (s == "raw_hu") return IntensityState::raw_hu;
    if (s == "clipped_hu") return IntensityState::clipped_hu;
    if (s == "normalized") return IntensityState::normalized;
    throw ValidationError("unknown intensity_state '" + s + "'");
}

CtVolume make_volume(const std::array<int, 3>& dims, const std::array<double, 3>& spacing,
                     float fill, IntensityState state) {
    CtVolume v;
    v.dims = dims;
    v.spacing = spacing;
    v.intensity_state = state;
    if (dims[0] < 1 || dims[1] < 1 || dims[2] < 1)
        throw ValidationError("volume dims must be positive");
    v.voxels.assign(v.size(), fill);
    validate_geometry(v);
    return v;
}

void validate_geometry(const CtVolume& v) {
    for (int a = 0; a < 3; ++a) {
        if (v.dims[a] < 1) throw ValidationError("volume dims must be positive");
        if (!(v.spacing[a] > 0.0)) throw ValidationError("voxel spacing must be positive");
    }
    if (v.voxels.size() != v.size())
        throw ValidationError("dim mismatch: header declares " + std::to_string(v.size()) +
                              " voxels, payload has " + std::to_string(v.voxels.size()));
}

void validate_standard(const CtVolume& v) {
    validate_geometry(v);
    for (int a = 0; a < 3; ++a)
        if (v.dims[a] < 8)
            throw ValidationError("volume dims must be >= 8 per axis, got " +
                                  std::to_string(v.dims[a]));
    if (v.intensity_state == IntensityState::clipped_hu) {
        for (float x : v.voxels)
            if (x < kHuClipLo || x > kHuClipHi)
                throw ValidationError("clipped_hu volume has voxel outside [-1000, 1000]");
    } else if (v.intensity_state == IntensityState::normalized) {
        for (float x : v.voxels)
            if (x < 0.0f || x > 1.0f)
                throw ValidationError("normalized volume has voxel outside [0, 1]");
    }
}

void validate_box(const RoiBox& box, const std::array<int, 3>& dims) {
    for (int a = 0; a < 3; ++a) {
        if (box.origin[a] < 0) throw ValidationError("ROI origin must be >= 0");
        if (box.extent[a] <= 0) throw ValidationError("ROI extent must be positive");
        if (box.origin[a] + box.extent[a] > dims[a])
            throw ValidationError("ROI exceeds volume bounds on axis " + std::to_string(a));
    }
}

CtVolume clip_hu(const CtVolume& v, kernels::Exec exec) {
    if (v.intensity_state != IntensityState::raw_hu)
        throw ValidationError("clip_hu expects raw_hu input, got " +
                              std::string(to_string(v.intensity_state)));
    CtVolume out = v;
    kernels::clamp_inplace(out.voxels, kHuClipLo, kHuClipHi, exec);
    out.intensity_state = IntensityState::clipped_hu;
    return out;
}

CtVolume normalize_intensity(const CtVolume& v, kernels::Exec exec) {
    if (v.intensity_state != IntensityState::clipped_hu)
        throw ValidationError("normalize_intensity expects clipped_hu input, got " +
                              std::string(to_string(v.intensity_state)));
    CtVolume out = v;
    // [-1000, 1000] -> [0, 1]
    kernels::affine_inplace(out.voxels, 1.0f / (kHuClipHi - kHuClipLo),
                            -kHuClipLo / (kHuClipHi - kHuClipLo), exec);
    out.intensity_state = IntensityState::normalized;
    return out;
}

CtVolume resample_isotropic(const CtVolume& v, double target_mm, kernels::Exec exec) {
    if (!(target_mm > 0.0)) throw ValidationError("resample target spacing must be > 0");
    validate_geometry(v);

    CtVolume out;
    for (int a = 0; a < 3; ++a) {
        const long d = std::lround(static_cast<double>(v.dims[a]) * v.spacing[a] / target_mm);
        out.dims[a] = static_cast<int>(std::max(1L, d));
        out.spacing[a] = target_mm;
    }
    out.intensity_state = v.intensity_state;
    out.subject_id = v.subject_id;
    out.scan_id = v.scan_id;
    out.voxels.resize(out.size());
    kernels::resample_trilinear(v.voxels.data(), v.dims, v.spacing, out.voxels.data(),
                                out.dims, target_mm, exec);
    return out;
}

CtVolume crop_roi(const CtVolume& v, const RoiBox& box) {
    validate_geometry(v);
    validate_box(box, v.dims);
    CtVolume out;
    out.dims = box.extent;
    out.spacing = v.spacing;
    out.intensity_state = v.intensity_state;
    out.subject_id = v.subject_id;
    out.scan_id = v.scan_id;
    out.voxels.resize(out.size());
    for (int k = 0; k < box.extent[2]; ++k)
        for (int j = 0; j < box.extent[1]; ++j) {
            const float* src = &v.voxels[v.index(box.origin[0], box.origin[1] + j,
                                                 box.origin[2] + k)];
            float* dst = &out.voxels[out.index(0, j, k)];
            for (int i = 0; i < box.extent[0]; ++i) dst[i] = src[i];
        }
    return out;
}

}  // namespace cardiopulm
