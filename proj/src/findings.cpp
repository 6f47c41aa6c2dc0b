#include "cardiopulm/findings.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "cardiopulm/errors.hpp"

namespace cardiopulm {

const char* to_string(Finding f) {
    switch (f) {
        case Finding::opacity: return "opacity";
        case Finding::pleural_effusion: return "pleural_effusion";
        case Finding::fibrosis: return "fibrosis";
        case Finding::emphysema: return "emphysema";
        case Finding::nodule: return "nodule";
    }
    return "opacity";
}

Finding finding_from_string(const std::string& s) {
    for (Finding f : kAllFindings)
        if (s == to_string(f)) return f;
    throw ValidationError("unknown finding name '" + s + "'");
}

const char* to_string(FindingSource s) {
    switch (s) {
        case FindingSource::rule_based: return "rule_based";
        case FindingSource::external_service: return "external_service";
        case FindingSource::file: return "file";
    }
    return "rule_based";
}

std::vector<Finding> FindingSet::retained() const {
    std::vector<Finding> out;
    for (const FindingScore& fs : findings)
        if (fs.score >= kRetentionThreshold) out.push_back(fs.name);
    return out;
}

bool FindingSet::is_retained(Finding f) const {
    for (const FindingScore& fs : findings)
        if (fs.name == f) return fs.score >= kRetentionThreshold;
    return false;
}

double FindingSet::score_of(Finding f) const {
    for (const FindingScore& fs : findings)
        if (fs.name == f) return fs.score;
    return 0.0;
}

FindingSet filter_findings(const std::vector<FindingScore>& raw, FindingSource source) {
    FindingSet out;
    out.source = source;
    bool seen[kFindingCount] = {};
    for (const FindingScore& fs : raw) {
        if (!(fs.score >= 0.0 && fs.score <= 1.0))
            throw ValidationError(std::string("finding score out of [0,1] for '") +
                                  to_string(fs.name) + "': " + std::to_string(fs.score));
        if (seen[static_cast<int>(fs.name)])
            throw ValidationError(std::string("duplicate finding '") + to_string(fs.name) + "'");
        seen[static_cast<int>(fs.name)] = true;
        out.findings.push_back(fs);
    }
    return out;
}

namespace {

struct Box3 {
    int lo[3] = {0, 0, 0};
    int hi[3] = {-1, -1, -1};  // inclusive
    bool empty() const { return hi[0] < lo[0]; }
};

Box3 bounding_box(const MaskVolume& m) {
    Box3 b;
    b.lo[0] = m.dims[0];
    b.lo[1] = m.dims[1];
    b.lo[2] = m.dims[2];
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

MaskVolume erode6(const MaskVolume& m, int iterations) {
    MaskVolume cur = m;
    for (int it = 0; it < iterations; ++it) {
        MaskVolume next = cur;
        const int H = m.dims[0], W = m.dims[1], D = m.dims[2];
        for (int k = 0; k < D; ++k)
            for (int j = 0; j < W; ++j)
                for (int i = 0; i < H; ++i) {
                    if (!cur.at(i, j, k)) continue;
                    const bool interior = i > 0 && j > 0 && k > 0 && i < H - 1 &&
                                          j < W - 1 && k < D - 1 && cur.at(i - 1, j, k) &&
                                          cur.at(i + 1, j, k) && cur.at(i, j - 1, k) &&
                                          cur.at(i, j + 1, k) && cur.at(i, j, k - 1) &&
                                          cur.at(i, j, k + 1);
                    if (!interior) next.data[next.index(i, j, k)] = 0;
                }
        cur = std::move(next);
    }
    return cur;
}

MaskVolume mask_union(const MaskVolume& a, const MaskVolume& b) {
    MaskVolume out = a;
    for (std::size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = (a.data[i] || b.data[i]) ? 1 : 0;
    return out;
}

// Dependent (posterior, +j) water-density layer thickness relative to the
// lung's extent: walk outward from the posterior lung surface while voxels
// stay in the effusion window.
double effusion_statistic(const CtVolume& v, const MaskVolume& lung) {
    const Box3 b = bounding_box(lung);
    if (b.empty()) return 0.0;
    const int j_extent = b.hi[1] - b.lo[1] + 1;
    const int cap = std::max(1, static_cast<int>(std::lround(0.6 * j_extent)));
    double runs = 0, cols = 0;
    for (int k = b.lo[2]; k <= b.hi[2]; ++k)
        for (int i = b.lo[0]; i <= b.hi[0]; ++i) {
            int j_top = -1;
            for (int j = b.hi[1]; j >= b.lo[1]; --j)
                if (lung.at(i, j, k)) {
                    j_top = j;
                    break;
                }
            if (j_top < 0) continue;
            cols += 1;
            int run = 0;
            for (int j = j_top + 1; j < v.dims[1] && run < cap; ++j) {
                const float hu = v.at(i, j, k);
                if (hu < -60.0f || hu > 30.0f) break;
                ++run;
            }
            runs += run;
        }
    if (cols == 0) return 0.0;
    return (runs / cols) / static_cast<double>(j_extent);
}

}  // namespace

SignatureStats measure_signatures(const CtVolume& v, const MaskVolume& left_lung,
                                  const MaskVolume& right_lung) {
    if (left_lung.dims != v.dims || right_lung.dims != v.dims)
        throw ValidationError("lung masks do not match volume dims");
    SignatureStats out;

    const MaskVolume lungs = mask_union(left_lung, right_lung);
    const std::size_t lung_n = lungs.count();
    if (lung_n == 0) throw ValidationError("empty lung masks");

    // emphysema: low-attenuation fraction
    std::size_t low = 0;
    for (std::size_t i = 0; i < lungs.data.size(); ++i)
        if (lungs.data[i] && v.voxels[i] < -950.0f) ++low;
    out.emphysema_low_attenuation = static_cast<double>(low) / static_cast<double>(lung_n);

    // fibrosis: high-attenuation fraction of the peripheral band
    const MaskVolume core = erode6(lungs, 3);
    std::size_t band_n = 0, band_hi = 0;
    for (std::size_t i = 0; i < lungs.data.size(); ++i)
        if (lungs.data[i] && !core.data[i]) {
            ++band_n;
            if (v.voxels[i] > -700.0f) ++band_hi;
        }
    out.fibrosis_peripheral =
        band_n == 0 ? 0.0 : static_cast<double>(band_hi) / static_cast<double>(band_n);

    // opacity: mid-attenuation fraction of the hole-filled lung region
    MaskVolume filled = lungs;
    fill_holes_axial(filled);
    std::size_t filled_n = 0, mid = 0;
    for (std::size_t i = 0; i < filled.data.size(); ++i)
        if (filled.data[i]) {
            ++filled_n;
            const float hu = v.voxels[i];
            if (hu >= -300.0f && hu <= 150.0f) ++mid;
        }
    out.opacity_mid_fraction =
        filled_n == 0 ? 0.0 : static_cast<double>(mid) / static_cast<double>(filled_n);

    // effusion: dependent layer, averaged over the two lungs
    out.effusion_layer =
        0.5 * (effusion_statistic(v, left_lung) + effusion_statistic(v, right_lung));

    // nodule: compact blobs above local background inside the filled region
    MaskVolume cand = make_mask(v.dims);
    for (std::size_t i = 0; i < filled.data.size(); ++i)
        cand.data[i] = (filled.data[i] && v.voxels[i] > -150.0f) ? 1 : 0;
    const Components comps = connected_components_6(cand);
    int count = 0;
    for (std::size_t s = 0; s < comps.sizes.size(); ++s)
        if (comps.sizes[s] >= 10 && comps.sizes[s] <= 450) ++count;
    out.nodule_count = static_cast<double>(count) / 10.0;

    return out;
}

double LogisticMap::score(double stat) const {
    return 1.0 / (1.0 + std::exp(-(slope * stat + offset)));
}

const PerceptionCalibration& builtin_perception_calibration() {
    // Frozen output of tools/calibrate_perception (severity grids on the
    // phantom generator); regenerate with that tool if the generator changes.
    static const PerceptionCalibration cal = [] {
        PerceptionCalibration c;
        c.version = "percal-v1";
        c.maps[static_cast<int>(Finding::opacity)] = {112.1830, -2.1972};
        c.maps[static_cast<int>(Finding::pleural_effusion)] = {31.7796, -2.2730};
        c.maps[static_cast<int>(Finding::fibrosis)] = {8.8854, -2.1972};
        c.maps[static_cast<int>(Finding::emphysema)] = {13.6752, -2.1972};
        c.maps[static_cast<int>(Finding::nodule)] = {7.1670, -2.1972};
        return c;
    }();
    return cal;
}

FindingSet score_findings(const CtVolume& v, const MaskVolume& left_lung,
                          const MaskVolume& right_lung, const PerceptionCalibration& cal) {
    const SignatureStats stats = measure_signatures(v, left_lung, right_lung);
    const std::array<double, kFindingCount> raw = {
        stats.opacity_mid_fraction, stats.effusion_layer, stats.fibrosis_peripheral,
        stats.emphysema_low_attenuation, stats.nodule_count};
    std::vector<FindingScore> scored;
    scored.reserve(kFindingCount);
    for (Finding f : kAllFindings) {
        const int idx = static_cast<int>(f);
        scored.push_back({f, cal.maps[idx].score(raw[idx])});
    }
    return filter_findings(scored, FindingSource::rule_based);
}

std::string findings_to_json(const FindingSet& fs) {
    nlohmann::json j;
    nlohmann::json arr = nlohmann::json::array();
    for (const FindingScore& f : fs.findings)
        arr.push_back({{"name", to_string(f.name)}, {"score", f.score}});
    j["findings"] = arr;
    j["source"] = to_string(fs.source);
    return j.dump(2);
}

FindingSet findings_from_json(const std::string& text, FindingSource source_override) {
    std::vector<FindingScore> raw;
    try {
        const nlohmann::json j = nlohmann::json::parse(text);
        for (const nlohmann::json& f : j.at("findings"))
            raw.push_back({finding_from_string(f.at("name").get<std::string>()),
                           f.at("score").get<double>()});
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("bad findings JSON: ") + e.what());
    }
    return filter_findings(raw, source_override);
}

FindingSet findings_from_json(const std::string& text) {
    return findings_from_json(text, FindingSource::file);
}

}  // namespace cardiopulm
