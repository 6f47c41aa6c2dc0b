#include "cardiopulm/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace cardiopulm::kernels {

namespace {

inline std::size_t block_count(std::size_t n) {
    return (n + kReduceBlock - 1) / kReduceBlock;
}

}  // namespace

void clamp_inplace(std::span<float> v, float lo, float hi, Exec exec) {
    const std::int64_t n = static_cast<std::int64_t>(v.size());
    if (exec == Exec::parallel) {
#pragma omp parallel for schedule(static)
        for (std::int64_t i = 0; i < n; ++i) v[i] = std::clamp(v[i], lo, hi);
    } else {
        for (std::int64_t i = 0; i < n; ++i) v[i] = std::clamp(v[i], lo, hi);
    }
}

void affine_inplace(std::span<float> v, float a, float b, Exec exec) {
    const std::int64_t n = static_cast<std::int64_t>(v.size());
    if (exec == Exec::parallel) {
#pragma omp parallel for schedule(static)
        for (std::int64_t i = 0; i < n; ++i) v[i] = a * v[i] + b;
    } else {
        for (std::int64_t i = 0; i < n; ++i) v[i] = a * v[i] + b;
    }
}

namespace {

struct ResampleMap {
    std::array<int, 3> sdims;
    std::array<double, 3> scale;  // dst index -> src continuous coordinate

    // Interpolate with edge clamping. Arithmetic is double throughout so the
    // linear-field exactness properties hold to float precision.
    float sample(const float* src, int x, int y, int z) const {
        const auto at = [&](int i, int j, int k) {
            i = std::clamp(i, 0, sdims[0] - 1);
            j = std::clamp(j, 0, sdims[1] - 1);
            k = std::clamp(k, 0, sdims[2] - 1);
            return static_cast<double>(
                src[static_cast<std::size_t>(i) +
                    static_cast<std::size_t>(sdims[0]) *
                        (static_cast<std::size_t>(j) +
                         static_cast<std::size_t>(sdims[1]) * static_cast<std::size_t>(k))]);
        };
        const double cx = static_cast<double>(x) * scale[0];
        const double cy = static_cast<double>(y) * scale[1];
        const double cz = static_cast<double>(z) * scale[2];
        const int x0 = static_cast<int>(std::floor(cx));
        const int y0 = static_cast<int>(std::floor(cy));
        const int z0 = static_cast<int>(std::floor(cz));
        const double fx = cx - x0, fy = cy - y0, fz = cz - z0;

        double acc = 0.0;
        for (int dz = 0; dz <= 1; ++dz) {
            const double wz = dz ? fz : 1.0 - fz;
            if (wz == 0.0) continue;
            for (int dy = 0; dy <= 1; ++dy) {
                const double wy = dy ? fy : 1.0 - fy;
                if (wy == 0.0) continue;
                for (int dx = 0; dx <= 1; ++dx) {
                    const double wx = dx ? fx : 1.0 - fx;
                    if (wx == 0.0) continue;
                    acc += wx * wy * wz * at(x0 + dx, y0 + dy, z0 + dz);
                }
            }
        }
        return static_cast<float>(acc);
    }
};

}  // namespace

void resample_trilinear(const float* src, const std::array<int, 3>& sdims,
                        const std::array<double, 3>& sspacing, float* dst,
                        const std::array<int, 3>& ddims, double target_mm, Exec exec) {
    ResampleMap map;
    map.sdims = sdims;
    for (int a = 0; a < 3; ++a) map.scale[a] = target_mm / sspacing[a];

    const std::int64_t nz = ddims[2];
    const auto slice = [&](int z) {
        std::size_t out = static_cast<std::size_t>(z) * ddims[0] * ddims[1];
        for (int y = 0; y < ddims[1]; ++y)
            for (int x = 0; x < ddims[0]; ++x) dst[out++] = map.sample(src, x, y, z);
    };

    if (exec == Exec::parallel) {
#pragma omp parallel for schedule(static)
        for (std::int64_t z = 0; z < nz; ++z) slice(static_cast<int>(z));
    } else {
        for (std::int64_t z = 0; z < nz; ++z) slice(static_cast<int>(z));
    }
}

std::size_t count_in_range(std::span<const float> v, float lo, float hi, Exec exec) {
    const std::int64_t nb = static_cast<std::int64_t>(block_count(v.size()));
    std::vector<std::size_t> per_block(static_cast<std::size_t>(nb), 0);
    const auto block = [&](std::int64_t b) {
        const std::size_t begin = static_cast<std::size_t>(b) * kReduceBlock;
        const std::size_t end = std::min(begin + kReduceBlock, v.size());
        std::size_t c = 0;
        for (std::size_t i = begin; i < end; ++i)
            if (v[i] >= lo && v[i] <= hi) ++c;
        per_block[static_cast<std::size_t>(b)] = c;
    };
    if (exec == Exec::parallel) {
#pragma omp parallel for schedule(static)
        for (std::int64_t b = 0; b < nb; ++b) block(b);
    } else {
        for (std::int64_t b = 0; b < nb; ++b) block(b);
    }
    std::size_t total = 0;
    for (std::size_t c : per_block) total += c;
    return total;
}

void threshold_above(std::span<const float> v, float threshold,
                     std::span<std::uint8_t> out, Exec exec) {
    const std::int64_t n = static_cast<std::int64_t>(v.size());
    if (exec == Exec::parallel) {
#pragma omp parallel for schedule(static)
        for (std::int64_t i = 0; i < n; ++i) out[i] = v[i] > threshold ? 1 : 0;
    } else {
        for (std::int64_t i = 0; i < n; ++i) out[i] = v[i] > threshold ? 1 : 0;
    }
}

MomentSums moment_sums(std::span<const float> v, Exec exec) {
    const std::int64_t nb = static_cast<std::int64_t>(block_count(v.size()));
    std::vector<MomentSums> per_block(static_cast<std::size_t>(nb));
    const auto block = [&](std::int64_t b) {
        const std::size_t begin = static_cast<std::size_t>(b) * kReduceBlock;
        const std::size_t end = std::min(begin + kReduceBlock, v.size());
        MomentSums m;
        for (std::size_t i = begin; i < end; ++i) {
            const double x = v[i];
            m.n += 1.0;
            m.s1 += x;
            m.s2 += x * x;
            m.s3 += x * x * x;
        }
        per_block[static_cast<std::size_t>(b)] = m;
    };
    if (exec == Exec::parallel) {
#pragma omp parallel for schedule(static)
        for (std::int64_t b = 0; b < nb; ++b) block(b);
    } else {
        for (std::int64_t b = 0; b < nb; ++b) block(b);
    }
    MomentSums total;
    for (const MomentSums& m : per_block) {
        total.n += m.n;
        total.s1 += m.s1;
        total.s2 += m.s2;
        total.s3 += m.s3;
    }
    return total;
}

std::array<double, 16> histogram16(std::span<const float> v, float lo, float hi,
                                   Exec exec) {
    const double width = (static_cast<double>(hi) - lo) / 16.0;
    const std::int64_t nb = static_cast<std::int64_t>(block_count(v.size()));
    std::vector<std::array<std::size_t, 16>> per_block(
        static_cast<std::size_t>(nb), std::array<std::size_t, 16>{});
    const auto block = [&](std::int64_t b) {
        const std::size_t begin = static_cast<std::size_t>(b) * kReduceBlock;
        const std::size_t end = std::min(begin + kReduceBlock, v.size());
        auto& h = per_block[static_cast<std::size_t>(b)];
        for (std::size_t i = begin; i < end; ++i) {
            int bin = static_cast<int>((static_cast<double>(v[i]) - lo) / width);
            bin = std::clamp(bin, 0, 15);
            ++h[static_cast<std::size_t>(bin)];
        }
    };
    if (exec == Exec::parallel) {
#pragma omp parallel for schedule(static)
        for (std::int64_t b = 0; b < nb; ++b) block(b);
    } else {
        for (std::int64_t b = 0; b < nb; ++b) block(b);
    }
    std::array<std::size_t, 16> counts{};
    for (const auto& h : per_block)
        for (int i = 0; i < 16; ++i) counts[static_cast<std::size_t>(i)] += h[static_cast<std::size_t>(i)];
    std::array<double, 16> out{};
    const double n = v.empty() ? 1.0 : static_cast<double>(v.size());
    for (int i = 0; i < 16; ++i) out[static_cast<std::size_t>(i)] = static_cast<double>(counts[static_cast<std::size_t>(i)]) / n;
    return out;
}

double pairwise_sum(std::span<const double> terms) {
    if (terms.empty()) return 0.0;
    if (terms.size() == 1) return terms[0];
    const std::size_t half = terms.size() / 2;
    return pairwise_sum(terms.subspan(0, half)) + pairwise_sum(terms.subspan(half));
}

}  // namespace cardiopulm::kernels
