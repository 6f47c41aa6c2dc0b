#include "cardiopulm/phantom.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "cardiopulm/errors.hpp"
#include "cardiopulm/rng.hpp"

namespace cardiopulm {

using nlohmann::json;
namespace geo = phantom_geometry;

namespace {

// Noise substream tags.
enum Channel : std::uint64_t {
    kChBase = 1,
    kChLung,
    kChEmphysema,
    kChEmphysemaVal,
    kChFibrosis,
    kChFibrosisVal,
    kChEffusion,
    kChFat,
    kChFatVal,
    kChBlobNoise,
    kChBlobs = 64,
};

struct Ellipsoid {
    std::array<double, 3> c;
    std::array<double, 3> a;

    // squared normalized radius
    double r2(double x, double y, double z) const {
        const double dx = (x - c[0]) / a[0];
        const double dy = (y - c[1]) / a[1];
        const double dz = (z - c[2]) / a[2];
        return dx * dx + dy * dy + dz * dz;
    }
    bool contains(double x, double y, double z) const { return r2(x, y, z) <= 1.0; }
};

struct Blob {
    std::array<double, 3> c;
    double r;
    float value;
};

// Anatomy-relative voxel key so integer template shifts translate the noise
// field exactly.
inline std::uint64_t voxel_key(const std::array<int, 3>& q) {
    const std::uint64_t a = static_cast<std::uint64_t>(q[0] + 1024);
    const std::uint64_t b = static_cast<std::uint64_t>(q[1] + 1024);
    const std::uint64_t c = static_cast<std::uint64_t>(q[2] + 1024);
    return a + (b << 21) + (c << 42);
}

struct Template {
    Ellipsoid heart, lung_l, lung_r;
    std::array<double, 2> body_c;  // (i, j) center of the body cylinder
    std::array<double, 2> body_a;
    std::array<int, 3> shift;  // integer anatomy shift for noise keying
};

Template build_template(const PhantomSpec& s) {
    Template t;
    const double H = s.dims[0], W = s.dims[1], D = s.dims[2];
    t.heart = {s.heart_center, s.heart_axes};
    const std::array<double, 3> lung_axes = {geo::kLungAxisI * H, geo::kLungAxisJ * W,
                                             geo::kLungAxisK * D};
    t.lung_l = {{s.heart_center[0] - geo::kLungOffsetI * H, s.heart_center[1],
                 s.heart_center[2]},
                lung_axes};
    t.lung_r = {{s.heart_center[0] + geo::kLungOffsetI * H, s.heart_center[1],
                 s.heart_center[2]},
                lung_axes};
    t.body_c = {s.heart_center[0], s.heart_center[1] + geo::kBodyOffsetJ * W};
    t.body_a = {geo::kBodyAxisI * H, geo::kBodyAxisJ * W};
    const std::array<double, 3> def = {geo::kHeartCenterI * H, geo::kHeartCenterJ * W,
                                       geo::kHeartCenterK * D};
    for (int a = 0; a < 3; ++a)
        t.shift[a] = static_cast<int>(std::lround(s.heart_center[a] - def[a]));
    return t;
}

// Rejection-free deterministic point in the unit ball (tries a fixed counter
// sequence until inside; expected ~2 tries).
std::array<double, 3> unit_ball_point(std::uint64_t key) {
    for (std::uint64_t attempt = 0;; ++attempt) {
        const std::uint64_t k = rng::combine(key, attempt);
        const double x = 2.0 * rng::uniform01(rng::mix64(k ^ 0x1111)) - 1.0;
        const double y = 2.0 * rng::uniform01(rng::mix64(k ^ 0x2222)) - 1.0;
        const double z = 2.0 * rng::uniform01(rng::mix64(k ^ 0x3333)) - 1.0;
        if (x * x + y * y + z * z <= 1.0) return {x, y, z};
    }
}

double effusion_depth_threshold(double severity) {
    // Voxels with normalized posterior coordinate d >= threshold become the
    // dependent layer; capped so the lungs always keep a connected air body.
    return 1.0 - 0.62 * severity;
}

}  // namespace

PhantomSpec default_phantom_spec(std::uint64_t seed, const std::array<int, 3>& dims) {
    PhantomSpec s;
    s.seed = seed;
    s.dims = dims;
    const double H = dims[0], W = dims[1], D = dims[2];
    s.heart_center = {geo::kHeartCenterI * H, geo::kHeartCenterJ * W, geo::kHeartCenterK * D};
    s.heart_axes = {geo::kHeartAxisI * H, geo::kHeartAxisJ * W, geo::kHeartAxisK * D};
    return s;
}

void validate(const PhantomSpec& spec) {
    for (int a = 0; a < 3; ++a) {
        if (spec.dims[a] < 8) throw ValidationError("phantom dims must be >= 8 per axis");
        if (!(spec.spacing[a] > 0)) throw ValidationError("phantom spacing must be positive");
        if (!(spec.heart_axes[a] > 0)) throw ValidationError("heart axes must be positive");
        if (spec.heart_center[a] - spec.heart_axes[a] < 0.0 ||
            spec.heart_center[a] + spec.heart_axes[a] > spec.dims[a] - 1.0)
            throw ValidationError("heart ellipsoid not fully inside the volume");
    }
    for (double lvl : spec.pathology_levels)
        if (lvl < 0.0 || lvl > 1.0)
            throw ValidationError("pathology severities must lie in [0,1]");
    if (spec.calcification_burden < 0.0)
        throw ValidationError("calcification_burden must be >= 0");
    if (spec.pericardial_fat_fraction < 0.0 || spec.pericardial_fat_fraction > 1.0)
        throw ValidationError("pericardial_fat_fraction must lie in [0,1]");
}

std::uint64_t scan_seed(std::uint64_t subject_seed, int scan_index) {
    return rng::combine(subject_seed, 0x5CA9, static_cast<std::uint64_t>(scan_index));
}

CtVolume generate_phantom(const PhantomSpec& spec) {
    validate(spec);
    const Template t = build_template(spec);
    const std::uint64_t seed = spec.seed;
    const int H = spec.dims[0], W = spec.dims[1], D = spec.dims[2];

    CtVolume v = make_volume(spec.dims, spec.spacing, 0.0f, IntensityState::raw_hu);
    v.subject_id = spec.subject_id;
    v.scan_id = spec.scan_id;

    const double sev_op = spec.level(Finding::opacity);
    const double sev_ef = spec.level(Finding::pleural_effusion);
    const double sev_fi = spec.level(Finding::fibrosis);
    const double sev_em = spec.level(Finding::emphysema);
    const double sev_no = spec.level(Finding::nodule);
    const double eff_thresh = effusion_depth_threshold(sev_ef);

    // Pass 1: analytic anatomy + per-voxel pathology speckle.
    const std::int64_t nk = D;
#pragma omp parallel for schedule(static)
    for (std::int64_t kk = 0; kk < nk; ++kk) {
        const int k = static_cast<int>(kk);
        for (int j = 0; j < W; ++j) {
            for (int i = 0; i < H; ++i) {
                const std::array<int, 3> q = {i - t.shift[0], j - t.shift[1], k - t.shift[2]};
                const std::uint64_t vk = voxel_key(q);
                const auto noise = [&](std::uint64_t ch) {
                    return rng::normal(rng::combine(seed, ch, vk));
                };
                const auto chance = [&](std::uint64_t ch) {
                    return rng::uniform01(rng::combine(seed, ch, vk));
                };

                const double x = i, y = j, z = k;
                const double bi = (x - t.body_c[0]) / t.body_a[0];
                const double bj = (y - t.body_c[1]) / t.body_a[1];
                float value;
                if (bi * bi + bj * bj > 1.0) {
                    value = static_cast<float>(-1000.0 + 3.0 * noise(kChBase));
                } else {
                    value = static_cast<float>(40.0 + 8.0 * noise(kChBase));

                    const Ellipsoid* lung = nullptr;
                    if (t.lung_l.contains(x, y, z))
                        lung = &t.lung_l;
                    else if (t.lung_r.contains(x, y, z))
                        lung = &t.lung_r;

                    if (lung != nullptr) {
                        value = static_cast<float>(-850.0 + 15.0 * noise(kChLung));
                        if (sev_em > 0.0 && chance(kChEmphysema) < 0.35 * sev_em)
                            value = static_cast<float>(-985.0 + 10.0 * noise(kChEmphysemaVal));
                        const double r2 = lung->r2(x, y, z);
                        if (sev_fi > 0.0 && r2 >= 0.72 * 0.72 &&
                            chance(kChFibrosis) < 0.55 * sev_fi)
                            value = static_cast<float>(-600.0 + 40.0 * noise(kChFibrosisVal));
                        const double depth = (y - lung->c[1]) / lung->a[1];
                        if (sev_ef > 0.0 && depth >= eff_thresh)
                            value = static_cast<float>(10.0 + 6.0 * noise(kChEffusion));
                    }

                    const double hr2 = t.heart.r2(x, y, z);
                    if (hr2 <= 1.0) {
                        value = static_cast<float>(40.0 + 8.0 * noise(kChBase));
                    } else if (hr2 <= geo::kFatShellOuter * geo::kFatShellOuter &&
                               spec.pericardial_fat_fraction > 0.0 &&
                               chance(kChFat) < spec.pericardial_fat_fraction) {
                        value = static_cast<float>(-110.0 + 25.0 * noise(kChFatVal));
                    }
                }
                v.at(i, j, k) = value;
            }
        }
    }

    // Pass 2: coherent blobs (opacity, nodules, calcification), rasterized in
    // a fixed order over their bounding boxes.
    std::vector<Blob> blobs;
    std::vector<std::pair<const Ellipsoid*, int>> lung_blob_home;  // parallel to blobs

    const auto blob_key = [&](std::uint64_t family, int index, std::uint64_t part) {
        return rng::combine(seed, kChBlobs + family, static_cast<std::uint64_t>(index), part);
    };

    const auto place_lung_blobs = [&](std::uint64_t family, int count, double center_scale,
                                      double r_lo, double r_hi, double value_base,
                                      double min_gap) {
        for (int b = 0; b < count; ++b) {
            const Ellipsoid& lung =
                rng::uniform01(blob_key(family, b, 1)) < 0.5 ? t.lung_l : t.lung_r;
            bool placed = false;
            for (std::uint64_t attempt = 0; attempt < 24 && !placed; ++attempt) {
                const auto p = unit_ball_point(blob_key(family, b, 100 + attempt));
                Blob blob;
                blob.c = {lung.c[0] + center_scale * p[0] * lung.a[0],
                          lung.c[1] + center_scale * p[1] * lung.a[1],
                          lung.c[2] + center_scale * p[2] * lung.a[2]};
                blob.r = r_lo + (r_hi - r_lo) * rng::uniform01(blob_key(family, b, 2));
                blob.value = static_cast<float>(
                    value_base + 10.0 * rng::uniform01(blob_key(family, b, 3)));
                // keep clear of the dependent effusion layer
                const double depth = (blob.c[1] + blob.r - lung.c[1]) / lung.a[1];
                if (sev_ef > 0.0 && depth >= eff_thresh - 0.05) continue;
                bool clash = false;
                for (const Blob& other : blobs) {
                    const double dx = blob.c[0] - other.c[0];
                    const double dy = blob.c[1] - other.c[1];
                    const double dz = blob.c[2] - other.c[2];
                    if (std::sqrt(dx * dx + dy * dy + dz * dz) <
                        blob.r + other.r + min_gap) {
                        clash = true;
                        break;
                    }
                }
                if (clash) continue;
                blobs.push_back(blob);
                lung_blob_home.emplace_back(&lung, 1);
                placed = true;
            }
        }
    };

    const double min_lung_axis = std::min({t.lung_l.a[0], t.lung_l.a[1], t.lung_l.a[2]});
    if (sev_op > 0.0) {
        const int n_op = static_cast<int>(std::lround(6.0 * sev_op));
        const double r_op = std::max(5.0, 0.42 * min_lung_axis);
        place_lung_blobs(/*family=*/1, std::max(n_op, sev_op > 0 ? 1 : 0), 0.5, r_op,
                         r_op * 1.08, 35.0, 2.0);
    }
    if (sev_no > 0.0) {
        const int n_no = static_cast<int>(std::lround(7.0 * sev_no));
        place_lung_blobs(/*family=*/2, std::max(n_no, sev_no > 0 ? 1 : 0), 0.6, 2.0, 3.0,
                         40.0, 3.0);
    }

    // Calcified plaques on the heart shell.
    if (spec.calcification_burden > 0.0) {
        const int n_cal = std::max(
            1, static_cast<int>(std::lround(9.0 * std::min(spec.calcification_burden, 1.5))));
        for (int b = 0; b < n_cal; ++b) {
            for (std::uint64_t attempt = 0; attempt < 24; ++attempt) {
                const auto p = unit_ball_point(blob_key(3, b, 100 + attempt));
                const double norm = std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
                if (norm < 1e-6) continue;
                const double radial =
                    geo::kCalcShellInner +
                    (geo::kCalcShellOuter - geo::kCalcShellInner) *
                        rng::uniform01(blob_key(3, b, 4));
                Blob blob;
                for (int a = 0; a < 3; ++a)
                    blob.c[a] = t.heart.c[a] + radial * (p[a] / norm) * t.heart.a[a];
                blob.r = 1.6 + 1.1 * rng::uniform01(blob_key(3, b, 2));
                blob.value = static_cast<float>(550.0 + 120.0 * rng::uniform01(blob_key(3, b, 3)));
                blobs.push_back(blob);
                lung_blob_home.emplace_back(nullptr, 0);
                break;
            }
        }
    }

    for (std::size_t bi = 0; bi < blobs.size(); ++bi) {
        const Blob& blob = blobs[bi];
        const Ellipsoid* lung = lung_blob_home[bi].first;
        const int i0 = std::max(0, static_cast<int>(std::floor(blob.c[0] - blob.r)));
        const int i1 = std::min(H - 1, static_cast<int>(std::ceil(blob.c[0] + blob.r)));
        const int j0 = std::max(0, static_cast<int>(std::floor(blob.c[1] - blob.r)));
        const int j1 = std::min(W - 1, static_cast<int>(std::ceil(blob.c[1] + blob.r)));
        const int k0 = std::max(0, static_cast<int>(std::floor(blob.c[2] - blob.r)));
        const int k1 = std::min(D - 1, static_cast<int>(std::ceil(blob.c[2] + blob.r)));
        for (int k = k0; k <= k1; ++k)
            for (int j = j0; j <= j1; ++j)
                for (int i = i0; i <= i1; ++i) {
                    const double dx = i - blob.c[0], dy = j - blob.c[1], dz = k - blob.c[2];
                    if (dx * dx + dy * dy + dz * dz > blob.r * blob.r) continue;
                    if (lung != nullptr && !lung->contains(i, j, k)) continue;
                    const std::array<int, 3> q = {i - t.shift[0], j - t.shift[1],
                                                  k - t.shift[2]};
                    const double n =
                        rng::normal(rng::combine(seed, kChBlobNoise, voxel_key(q)));
                    v.at(i, j, k) = blob.value + static_cast<float>(4.0 * n);
                }
    }

    return v;
}

double fat_shell_voxel_count(const PhantomSpec& spec) {
    // Exact voxel count of the shell region the generator samples fat in,
    // clipped to the volume; matches pass 1's membership test.
    const Template t = build_template(spec);
    double count = 0;
    for (int k = 0; k < spec.dims[2]; ++k)
        for (int j = 0; j < spec.dims[1]; ++j)
            for (int i = 0; i < spec.dims[0]; ++i) {
                const double bi = (i - t.body_c[0]) / t.body_a[0];
                const double bj = (j - t.body_c[1]) / t.body_a[1];
                if (bi * bi + bj * bj > 1.0) continue;
                const double r2 = t.heart.r2(i, j, k);
                if (r2 > 1.0 && r2 <= geo::kFatShellOuter * geo::kFatShellOuter) count += 1;
            }
    return count;
}

std::string phantom_spec_to_json(const PhantomSpec& spec) {
    json j;
    j["seed"] = spec.seed;
    j["dims"] = spec.dims;
    j["spacing_mm"] = spec.spacing;
    json levels;
    for (Finding f : kAllFindings) levels[to_string(f)] = spec.level(f);
    j["pathology_levels"] = levels;
    j["heart_center"] = spec.heart_center;
    j["heart_axes"] = spec.heart_axes;
    j["calcification_burden"] = spec.calcification_burden;
    j["pericardial_fat_fraction"] = spec.pericardial_fat_fraction;
    j["subject_id"] = spec.subject_id;
    j["scan_id"] = spec.scan_id;
    return j.dump(2);
}

PhantomSpec phantom_spec_from_json(const std::string& text) {
    PhantomSpec spec;
    try {
        const json j = json::parse(text);
        spec.seed = j.at("seed").get<std::uint64_t>();
        for (int a = 0; a < 3; ++a) {
            spec.dims[a] = j.at("dims").at(a).get<int>();
            spec.spacing[a] = j.at("spacing_mm").at(a).get<double>();
            spec.heart_center[a] = j.at("heart_center").at(a).get<double>();
            spec.heart_axes[a] = j.at("heart_axes").at(a).get<double>();
        }
        for (Finding f : kAllFindings)
            spec.level(f) = j.at("pathology_levels").at(to_string(f)).get<double>();
        spec.calcification_burden = j.at("calcification_burden").get<double>();
        spec.pericardial_fat_fraction = j.at("pericardial_fat_fraction").get<double>();
        spec.subject_id = j.at("subject_id").get<std::string>();
        spec.scan_id = j.at("scan_id").get<std::string>();
    } catch (const json::exception& e) {
        throw ValidationError(std::string("bad PhantomSpec JSON: ") + e.what());
    }
    validate(spec);
    return spec;
}

}  // namespace cardiopulm
