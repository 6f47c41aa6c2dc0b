#include "cardiopulm/masks.hpp"

#include <algorithm>
#include <queue>

#include "cardiopulm/errors.hpp"
#include "cardiopulm/kernels.hpp"

namespace cardiopulm {

std::size_t MaskVolume::count() const {
    std::size_t c = 0;
    for (std::uint8_t b : data) c += b != 0;
    return c;
}

MaskVolume make_mask(const std::array<int, 3>& dims) {
    MaskVolume m;
    m.dims = dims;
    m.data.assign(static_cast<std::size_t>(dims[0]) * dims[1] * dims[2], 0);
    return m;
}

Components connected_components_6(const MaskVolume& m) {
    Components out;
    out.labels.assign(m.size(), 0);
    const int H = m.dims[0], W = m.dims[1], D = m.dims[2];

    std::vector<std::size_t> stack;
    for (std::size_t seed = 0; seed < m.size(); ++seed) {
        if (!m.data[seed] || out.labels[seed] != 0) continue;
        const std::int32_t label = ++out.count;
        std::size_t size = 0;
        stack.clear();
        stack.push_back(seed);
        out.labels[seed] = label;
        while (!stack.empty()) {
            const std::size_t cur = stack.back();
            stack.pop_back();
            ++size;
            const int i = static_cast<int>(cur % H);
            const int j = static_cast<int>((cur / H) % W);
            const int k = static_cast<int>(cur / (static_cast<std::size_t>(H) * W));
            const auto visit = [&](int ni, int nj, int nk) {
                if (ni < 0 || nj < 0 || nk < 0 || ni >= H || nj >= W || nk >= D) return;
                const std::size_t n = m.index(ni, nj, nk);
                if (m.data[n] && out.labels[n] == 0) {
                    out.labels[n] = label;
                    stack.push_back(n);
                }
            };
            visit(i - 1, j, k);
            visit(i + 1, j, k);
            visit(i, j - 1, k);
            visit(i, j + 1, k);
            visit(i, j, k - 1);
            visit(i, j, k + 1);
        }
        out.sizes.push_back(size);
    }
    return out;
}

MaskVolume extract_label(const Components& comps, const std::array<int, 3>& dims,
                         std::int32_t label) {
    MaskVolume m = make_mask(dims);
    for (std::size_t i = 0; i < comps.labels.size(); ++i)
        m.data[i] = comps.labels[i] == label ? 1 : 0;
    return m;
}

MaskVolume largest_component(const MaskVolume& m) {
    const Components comps = connected_components_6(m);
    if (comps.count == 0) return make_mask(m.dims);
    std::int32_t best = 1;
    for (std::int32_t l = 2; l <= comps.count; ++l)
        if (comps.sizes[static_cast<std::size_t>(l - 1)] >
            comps.sizes[static_cast<std::size_t>(best - 1)])
            best = l;
    return extract_label(comps, m.dims, best);
}

void fill_holes_axial(MaskVolume& m) {
    const int H = m.dims[0], W = m.dims[1], D = m.dims[2];
    const std::int64_t nk = D;
    // Slices are independent: parallel across k.
#pragma omp parallel for schedule(static)
    for (std::int64_t kk = 0; kk < nk; ++kk) {
        const int k = static_cast<int>(kk);
        // 2D flood of the complement from the slice border; unreached
        // complement voxels are enclosed holes.
        std::vector<std::uint8_t> outside(static_cast<std::size_t>(H) * W, 0);
        std::vector<int> stack;
        const auto idx2 = [&](int i, int j) { return static_cast<std::size_t>(j) * H + i; };
        const auto push_if_open = [&](int i, int j) {
            if (i < 0 || j < 0 || i >= H || j >= W) return;
            const std::size_t p = idx2(i, j);
            if (!outside[p] && !m.at(i, j, k)) {
                outside[p] = 1;
                stack.push_back(i + j * H);
            }
        };
        for (int i = 0; i < H; ++i) {
            push_if_open(i, 0);
            push_if_open(i, W - 1);
        }
        for (int j = 0; j < W; ++j) {
            push_if_open(0, j);
            push_if_open(H - 1, j);
        }
        while (!stack.empty()) {
            const int cur = stack.back();
            stack.pop_back();
            const int i = cur % H, j = cur / H;
            push_if_open(i - 1, j);
            push_if_open(i + 1, j);
            push_if_open(i, j - 1);
            push_if_open(i, j + 1);
        }
        for (int j = 0; j < W; ++j)
            for (int i = 0; i < H; ++i)
                if (!outside[idx2(i, j)]) m.data[m.index(i, j, k)] = 1;
    }
}

MaskVolume body_mask(const CtVolume& v) {
    if (v.intensity_state == IntensityState::normalized)
        throw ValidationError("body_mask needs HU intensities (raw_hu or clipped_hu)");
    validate_geometry(v);

    MaskVolume cand = make_mask(v.dims);
    kernels::threshold_above(v.voxels, -500.0f, cand.data, kernels::Exec::parallel);
    MaskVolume body = largest_component(cand);
    if (body.count() == 0) throw ValidationError("no body found (empty > -500 HU mask)");
    fill_holes_axial(body);
    return body;
}

std::pair<MaskVolume, MaskVolume> lung_mask(const CtVolume& v, const MaskVolume& body) {
    if (body.dims != v.dims) throw ValidationError("body mask does not match volume dims");
    MaskVolume air = make_mask(v.dims);
    const std::size_t n = v.size();
    for (std::size_t i = 0; i < n; ++i)
        air.data[i] = (body.data[i] && v.voxels[i] < -500.0f) ? 1 : 0;

    const Components comps = connected_components_6(air);
    const std::size_t min_size = static_cast<std::size_t>(0.01 * static_cast<double>(body.count()));

    std::vector<std::int32_t> order;
    for (std::int32_t l = 1; l <= comps.count; ++l)
        if (comps.sizes[static_cast<std::size_t>(l - 1)] >= std::max<std::size_t>(min_size, 1))
            order.push_back(l);
    std::sort(order.begin(), order.end(), [&](std::int32_t a, std::int32_t b) {
        return comps.sizes[static_cast<std::size_t>(a - 1)] >
               comps.sizes[static_cast<std::size_t>(b - 1)];
    });
    if (order.size() < 2)
        throw ValidationError("fewer than two lung components found (" +
                              std::to_string(order.size()) + ")");

    MaskVolume a = extract_label(comps, v.dims, order[0]);
    MaskVolume b = extract_label(comps, v.dims, order[1]);

    // first = smaller centroid along axis 0
    const auto centroid0 = [&](const MaskVolume& m) {
        double s = 0, c = 0;
        for (int k = 0; k < m.dims[2]; ++k)
            for (int j = 0; j < m.dims[1]; ++j)
                for (int i = 0; i < m.dims[0]; ++i)
                    if (m.at(i, j, k)) {
                        s += i;
                        c += 1;
                    }
        return s / c;
    };
    if (centroid0(a) > centroid0(b)) std::swap(a, b);
    return {std::move(a), std::move(b)};
}

}  // namespace cardiopulm
