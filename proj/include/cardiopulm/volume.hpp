#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "cardiopulm/kernels.hpp"

namespace cardiopulm {

enum class IntensityState { raw_hu, clipped_hu, normalized };

const char* to_string(IntensityState s);
IntensityState intensity_state_from_string(const std::string& s);

inline constexpr float kHuClipLo = -1000.0f;
inline constexpr float kHuClipHi = 1000.0f;

// Dense 3D scalar grid. Voxel (i,j,k) lives at index i + dims[0]*(j + dims[1]*k):
// axis 0 is the fastest-varying axis. By convention axis 0 is left-right,
// axis 1 anterior-posterior (posterior = +j, the gravity-dependent direction)
// and axis 2 craniocaudal. The mask and detector code relies on this ordering.
struct CtVolume {
    std::array<int, 3> dims{0, 0, 0};
    std::array<double, 3> spacing{1.0, 1.0, 1.0};  // mm per voxel
    std::vector<float> voxels;
    IntensityState intensity_state = IntensityState::raw_hu;
    std::string subject_id;
    std::string scan_id;

    std::size_t size() const {
        return static_cast<std::size_t>(dims[0]) * static_cast<std::size_t>(dims[1]) *
               static_cast<std::size_t>(dims[2]);
    }
    std::size_t index(int i, int j, int k) const {
        return static_cast<std::size_t>(i) +
               static_cast<std::size_t>(dims[0]) *
                   (static_cast<std::size_t>(j) +
                    static_cast<std::size_t>(dims[1]) * static_cast<std::size_t>(k));
    }
    float at(int i, int j, int k) const { return voxels[index(i, j, k)]; }
    float& at(int i, int j, int k) { return voxels[index(i, j, k)]; }
};

CtVolume make_volume(const std::array<int, 3>& dims, const std::array<double, 3>& spacing,
                     float fill = 0.0f, IntensityState state = IntensityState::raw_hu);

// Geometry sanity: positive dims and spacing, voxel count matches. Throws
// ValidationError.
void validate_geometry(const CtVolume& v);

// Pipeline-entry validation: geometry plus the >= 8 voxels-per-axis floor and
// the intensity bounds implied by intensity_state. Applied at file boundaries;
// in-memory intermediates (e.g. a 4^3 resampling fixture) only need geometry.
void validate_standard(const CtVolume& v);

struct RoiBox {
    std::array<int, 3> origin{0, 0, 0};
    std::array<int, 3> extent{0, 0, 0};
};

void validate_box(const RoiBox& box, const std::array<int, 3>& dims);

// Clamp raw HU into [-1000, 1000]. Requires intensity_state == raw_hu.
CtVolume clip_hu(const CtVolume& v,
                 kernels::Exec exec = kernels::Exec::parallel);

// Affine map of the clip range onto [0, 1]. Requires clipped_hu.
CtVolume normalize_intensity(const CtVolume& v,
                             kernels::Exec exec = kernels::Exec::parallel);

// Trilinear resample onto an isotropic grid with spacing target_mm. Output
// dims are round(dim_i * spacing_i / target_mm), at least 1 per axis.
// Intensity state is preserved.
CtVolume resample_isotropic(const CtVolume& v, double target_mm,
                            kernels::Exec exec = kernels::Exec::parallel);

// Extract the subvolume described by box; spacing inherited.
CtVolume crop_roi(const CtVolume& v, const RoiBox& box);

}  // namespace cardiopulm
