#include "cardiopulm/heart_locator.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "cardiopulm/errors.hpp"

namespace cardiopulm {

using nlohmann::json;

namespace {

struct Box3 {
    int lo[3];
    int hi[3];  // inclusive
};

Box3 bounding_box(const MaskVolume& m) {
    Box3 b{{m.dims[0], m.dims[1], m.dims[2]}, {-1, -1, -1}};
    for (int k = 0; k < m.dims[2]; ++k)
        for (int j = 0; j < m.dims[1]; ++j)
            for (int i = 0; i < m.dims[0]; ++i)
                if (m.at(i, j, k)) {
                    b.lo[0] = std::min(b.lo[0], i);
                    b.lo[1] = std::min(b.lo[1], j);
                    b.lo[2] = std::min(b.lo[2], k);
                    b.hi[0] = std::max(b.hi[0], i);
                    b.hi[1] = std::max(b.hi[1], j);
                    b.hi[2] = std::max(b.hi[2], k);
                }
    return b;
}

}  // namespace

RoiResult locate_heart_roi(const CtVolume& v, int extent) {
    const MaskVolume body = body_mask(v);
    const auto [left, right] = lung_mask(v, body);
    return locate_heart_roi(v, body, left, right, extent);
}

RoiResult locate_heart_roi(const CtVolume& v, const MaskVolume& body,
                           const MaskVolume& left_lung, const MaskVolume& right_lung,
                           int extent) {
    if (extent < 1) throw ValidationError("ROI extent must be positive");
    const Box3 lb = bounding_box(left_lung);
    const Box3 rb = bounding_box(right_lung);
    if (lb.hi[0] < 0 || rb.hi[0] < 0) throw ValidationError("empty lung mask");

    // Mediastinum: strictly between the boxes' inner faces along axis 0,
    // within the union of their j extents, in the middle 60% of the union
    // craniocaudal extent.
    const int i_lo = std::min(lb.hi[0], rb.hi[0]) + 1;
    const int i_hi = std::max(lb.lo[0], rb.lo[0]) - 1;
    if (i_lo > i_hi) throw ValidationError("lung components overlap along axis 0");
    const int j_lo = std::min(lb.lo[1], rb.lo[1]);
    const int j_hi = std::max(lb.hi[1], rb.hi[1]);
    const int k_min = std::min(lb.lo[2], rb.lo[2]);
    const int k_max = std::max(lb.hi[2], rb.hi[2]);
    const double k_len = k_max - k_min + 1;
    const int k_lo = k_min + static_cast<int>(std::lround(0.2 * k_len));
    const int k_hi = k_min + static_cast<int>(std::lround(0.8 * k_len)) - 1;

    double ci = 0, cj = 0, ck = 0, n = 0;
    for (int k = std::max(0, k_lo); k <= std::min(v.dims[2] - 1, k_hi); ++k)
        for (int j = std::max(0, j_lo); j <= std::min(v.dims[1] - 1, j_hi); ++j)
            for (int i = std::max(0, i_lo); i <= std::min(v.dims[0] - 1, i_hi); ++i)
                if (body.at(i, j, k)) {
                    ci += i;
                    cj += j;
                    ck += k;
                    n += 1;
                }
    if (n == 0) throw ValidationError("no body voxels in the mediastinal window");

    const double center[3] = {ci / n, cj / n, ck / n};
    RoiResult out;
    for (int a = 0; a < 3; ++a) {
        const int ext = std::min(extent, v.dims[a]);
        if (ext < extent) out.truncated = true;
        int origin = static_cast<int>(std::lround(center[a])) - ext / 2;
        origin = std::clamp(origin, 0, v.dims[a] - ext);
        out.box.origin[a] = origin;
        out.box.extent[a] = ext;
    }
    validate_box(out.box, v.dims);
    return out;
}

std::string roi_to_json(const RoiResult& r) {
    json j;
    j["origin"] = r.box.origin;
    j["extent"] = r.box.extent;
    j["method"] = r.method;
    j["truncated"] = r.truncated;
    return j.dump(2);
}

RoiResult roi_from_json(const std::string& text) {
    RoiResult r;
    try {
        const json j = json::parse(text);
        for (int a = 0; a < 3; ++a) {
            r.box.origin[a] = j.at("origin").at(a).get<int>();
            r.box.extent[a] = j.at("extent").at(a).get<int>();
        }
        r.method = j.at("method").get<std::string>();
        r.truncated = j.value("truncated", false);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("bad ROI JSON: ") + e.what());
    }
    return r;
}

}  // namespace cardiopulm
