#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "cardiopulm/volume.hpp"

namespace cardiopulm {

struct MaskVolume {
    std::array<int, 3> dims{0, 0, 0};
    std::vector<std::uint8_t> data;

    std::size_t size() const {
        return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
    }
    std::size_t index(int i, int j, int k) const {
        return static_cast<std::size_t>(i) +
               static_cast<std::size_t>(dims[0]) *
                   (static_cast<std::size_t>(j) +
                    static_cast<std::size_t>(dims[1]) * static_cast<std::size_t>(k));
    }
    bool at(int i, int j, int k) const { return data[index(i, j, k)] != 0; }
    std::size_t count() const;
};

MaskVolume make_mask(const std::array<int, 3>& dims);

// 6-connected component labeling (BFS). labels: 0 background, 1..count
// components; sizes[l-1] is the voxel count of label l.
struct Components {
    std::vector<std::int32_t> labels;
    std::vector<std::size_t> sizes;
    int count = 0;
};

Components connected_components_6(const MaskVolume& m);

MaskVolume extract_label(const Components& comps, const std::array<int, 3>& dims,
                         std::int32_t label);

// Keep only the largest 6-connected component.
MaskVolume largest_component(const MaskVolume& m);

// Fill enclosed holes independently in every axial (fixed-k) slice: anything
// not reachable from the slice border through the complement becomes mask.
void fill_holes_axial(MaskVolume& m);

// Largest connected component of voxels > -500 HU, holes filled per axial
// slice. Requires raw_hu or clipped_hu intensity. Throws when no body found.
MaskVolume body_mask(const CtVolume& v);

// Air below -500 HU inside the body, split into the two largest components
// (each at least 1% of the body volume). first = smaller centroid along axis
// 0 (the anatomically left side of the grid). Throws when fewer than two
// lungs emerge.
std::pair<MaskVolume, MaskVolume> lung_mask(const CtVolume& v, const MaskVolume& body);

}  // namespace cardiopulm
