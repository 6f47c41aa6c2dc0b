#include "cardiopulm/cardiac_features.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "cardiopulm/errors.hpp"
#include "cardiopulm/kernels.hpp"
#include "cardiopulm/masks.hpp"

namespace cardiopulm {

const std::array<std::string, kCardiacChannels>& cardiac_channel_names() {
    static const std::array<std::string, kCardiacChannels> names = {
        "calc_volume_fraction_pm", "calc_mass_surrogate", "fat_fraction_pct",
        "hu_mean_k", "hu_variance_m", "hu_skewness",
        "hist_00", "hist_01", "hist_02", "hist_03", "hist_04", "hist_05", "hist_06",
        "hist_07", "hist_08", "hist_09", "hist_10", "hist_11", "hist_12", "hist_13",
        "hist_14", "hist_15",
        "moment_ii", "moment_jj", "moment_kk", "moment_ij", "moment_ik", "moment_jk",
        "heart_volume_fraction", "calc_largest_blob_pm", "calc_blob_count",
        "fat_shell_thickness"};
    return names;
}

namespace {

bool is_calc(float hu) { return hu > kCalcThresholdHu; }
bool is_fat(float hu) { return hu >= kFatWindowLoHu && hu <= kFatWindowHiHu; }
bool is_soft(float hu) { return hu >= kSoftTissueLoHu && hu <= kSoftTissueHiHu; }

int hist_bin(float hu) {
    int bin = static_cast<int>((static_cast<double>(hu) + 1000.0) / 125.0);
    return std::clamp(bin, 0, 15);
}

MaskVolume soft_tissue_mask(const CtVolume& roi) {
    MaskVolume m = make_mask(roi.dims);
    for (std::size_t i = 0; i < roi.voxels.size(); ++i)
        m.data[i] = is_soft(roi.voxels[i]) ? 1 : 0;
    return m;
}

std::size_t component_surface(const MaskVolume& m) {
    std::size_t surface = 0;
    const int H = m.dims[0], W = m.dims[1], D = m.dims[2];
    for (int k = 0; k < D; ++k)
        for (int j = 0; j < W; ++j)
            for (int i = 0; i < H; ++i) {
                if (!m.at(i, j, k)) continue;
                const bool boundary = i == 0 || j == 0 || k == 0 || i == H - 1 ||
                                      j == W - 1 || k == D - 1 || !m.at(i - 1, j, k) ||
                                      !m.at(i + 1, j, k) || !m.at(i, j - 1, k) ||
                                      !m.at(i, j + 1, k) || !m.at(i, j, k - 1) ||
                                      !m.at(i, j, k + 1);
                if (boundary) ++surface;
            }
    return surface;
}

}  // namespace

CardiacFeatureVector extract_cardiac_features(const CtVolume& roi) {
    if (roi.intensity_state != IntensityState::clipped_hu)
        throw ValidationError("cardiac features need a clipped_hu ROI");
    for (int a = 0; a < 3; ++a)
        if (roi.dims[a] < 8) throw ValidationError("cardiac ROI smaller than 8^3");

    CardiacFeatureVector f;
    const std::size_t n = roi.voxels.size();
    const double nd = static_cast<double>(n);

    // Sparse supports + calcium mass in one sweep.
    double calc_mass = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const float hu = roi.voxels[i];
        if (is_calc(hu)) {
            f.calcified_voxels.push_back(static_cast<std::uint32_t>(i));
            calc_mass += static_cast<double>(hu) - kCalcThresholdHu;
        } else if (is_fat(hu)) {
            f.fat_voxels.push_back(static_cast<std::uint32_t>(i));
        }
    }
    f.values[0] = static_cast<double>(f.calcified_voxels.size()) / nd * 1000.0;
    f.values[1] = calc_mass / nd;
    f.values[2] = static_cast<double>(f.fat_voxels.size()) / nd * 100.0;

    // Intensity statistics (deterministic blocked reductions).
    const kernels::MomentSums ms = kernels::moment_sums(roi.voxels, kernels::Exec::parallel);
    const double mean = ms.s1 / ms.n;
    const double var = std::max(0.0, ms.s2 / ms.n - mean * mean);
    const double sd = std::sqrt(var);
    const double m3 = ms.s3 / ms.n - 3.0 * mean * var - mean * mean * mean;
    f.values[3] = mean / 1000.0;
    f.values[4] = var / 1.0e6;
    f.values[5] = sd > 1e-9 ? std::clamp(m3 / (sd * sd * sd), -5.0, 5.0) : 0.0;

    const auto hist = kernels::histogram16(roi.voxels, -1000.0f, 1000.0f, kernels::Exec::parallel);
    for (int b = 0; b < 16; ++b) f.values[static_cast<std::size_t>(6 + b)] = hist[static_cast<std::size_t>(b)];

    // Soft-tissue geometry: central second moments in ROI-normalized coords.
    const MaskVolume soft = soft_tissue_mask(roi);
    double cnt = 0, mi = 0, mj = 0, mk = 0;
    for (int k = 0; k < roi.dims[2]; ++k)
        for (int j = 0; j < roi.dims[1]; ++j)
            for (int i = 0; i < roi.dims[0]; ++i)
                if (soft.at(i, j, k)) {
                    cnt += 1;
                    mi += i;
                    mj += j;
                    mk += k;
                }
    if (cnt > 0) {
        mi /= cnt;
        mj /= cnt;
        mk /= cnt;
        double sii = 0, sjj = 0, skk = 0, sij = 0, sik = 0, sjk = 0;
        for (int k = 0; k < roi.dims[2]; ++k)
            for (int j = 0; j < roi.dims[1]; ++j)
                for (int i = 0; i < roi.dims[0]; ++i)
                    if (soft.at(i, j, k)) {
                        const double di = (i - mi) / roi.dims[0];
                        const double dj = (j - mj) / roi.dims[1];
                        const double dk = (k - mk) / roi.dims[2];
                        sii += di * di;
                        sjj += dj * dj;
                        skk += dk * dk;
                        sij += di * dj;
                        sik += di * dk;
                        sjk += dj * dk;
                    }
        f.values[22] = sii / cnt;
        f.values[23] = sjj / cnt;
        f.values[24] = skk / cnt;
        f.values[25] = sij / cnt;
        f.values[26] = sik / cnt;
        f.values[27] = sjk / cnt;
    }

    // Largest soft-tissue component stands in for the heart.
    const MaskVolume heart = largest_component(soft);
    for (int k = 0; k < roi.dims[2]; ++k)
        for (int j = 0; j < roi.dims[1]; ++j)
            for (int i = 0; i < roi.dims[0]; ++i)
                if (heart.at(i, j, k))
                    f.heart_component.push_back(
                        static_cast<std::uint32_t>(roi.index(i, j, k)));
    f.values[28] = static_cast<double>(f.heart_component.size()) / nd;

    // Calcified blob structure.
    MaskVolume calc_mask = make_mask(roi.dims);
    for (std::uint32_t idx : f.calcified_voxels) calc_mask.data[idx] = 1;
    const Components comps = connected_components_6(calc_mask);
    std::size_t largest = 0;
    std::int32_t largest_label = 0;
    int blob_count = 0;
    for (std::int32_t l = 1; l <= comps.count; ++l) {
        const std::size_t s = comps.sizes[static_cast<std::size_t>(l - 1)];
        if (s >= 3) ++blob_count;
        if (s > largest) {
            largest = s;
            largest_label = l;
        }
    }
    if (largest_label > 0)
        for (std::size_t i = 0; i < comps.labels.size(); ++i)
            if (comps.labels[i] == largest_label)
                f.largest_calc_blob.push_back(static_cast<std::uint32_t>(i));
    f.values[29] = static_cast<double>(largest) / nd * 1000.0;
    f.values[30] = std::min(1.0, static_cast<double>(blob_count) / 32.0);

    // Mean fat-shell thickness surrogate: fat volume per unit heart surface.
    const std::size_t surface = component_surface(heart);
    f.values[31] =
        surface == 0 ? 0.0
                     : static_cast<double>(f.fat_voxels.size()) / static_cast<double>(surface) / 10.0;

    return f;
}

std::vector<std::uint32_t> channel_support(const CardiacFeatureVector& f, int channel,
                                           const CtVolume& roi) {
    if (channel < 0 || channel >= kCardiacChannels)
        throw ValidationError("channel index out of range");
    switch (channel) {
        case 0:
        case 1:
            return f.calcified_voxels;
        case 2:
            return f.fat_voxels;
        case 29:
            return f.largest_calc_blob;
        case 28:
            return f.heart_component;
        case 31:
            return f.fat_voxels;
        default:
            break;
    }
    std::vector<std::uint32_t> out;
    if (channel >= 3 && channel <= 5) {  // whole-ROI statistics
        out.resize(roi.voxels.size());
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<std::uint32_t>(i);
        return out;
    }
    if (channel >= 6 && channel <= 21) {  // histogram bin
        const int bin = channel - 6;
        for (std::size_t i = 0; i < roi.voxels.size(); ++i)
            if (hist_bin(roi.voxels[i]) == bin) out.push_back(static_cast<std::uint32_t>(i));
        return out;
    }
    if ((channel >= 22 && channel <= 27) || channel == 30) {  // soft-tissue derived
        for (std::size_t i = 0; i < roi.voxels.size(); ++i)
            if (channel == 30 ? is_calc(roi.voxels[i]) : is_soft(roi.voxels[i]))
                out.push_back(static_cast<std::uint32_t>(i));
        return out;
    }
    return out;
}

std::string feature_csv_header() {
    std::ostringstream ss;
    ss << "scan_id";
    for (const std::string& name : cardiac_channel_names()) ss << "," << name;
    return ss.str();
}

std::string feature_csv_row(const std::string& scan_id, const CardiacFeatureVector& f) {
    std::ostringstream ss;
    ss << scan_id;
    ss.precision(17);
    for (double v : f.values) ss << "," << v;
    return ss.str();
}

}  // namespace cardiopulm
