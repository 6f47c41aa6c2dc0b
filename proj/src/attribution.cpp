#include "cardiopulm/attribution.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "cardiopulm/errors.hpp"

namespace cardiopulm {

using nlohmann::json;

Attribution attribute_input(const ModelParams& p, const FusionInput& x) {
    Attribution a;
    a.layout = p.layout;
    std::vector<double> grad;
    a.logit = logit_with_input_gradient(p, x.x, grad);
    a.values.resize(x.x.size());
    double total = 0;
    for (std::size_t i = 0; i < x.x.size(); ++i) {
        a.values[i] = grad[i] * x.x[i];
        total += a.values[i];
    }
    a.bias_term = a.logit - total;
    a.first_order_only = p.has_hidden();

    std::size_t at = 0;
    const auto block_sum = [&](int len) {
        double s = 0;
        for (int i = 0; i < len; ++i) s += a.values[at++];
        return s;
    };
    a.cardiac_sum = block_sum(p.layout.d_card);
    a.reasoning_sum = block_sum(p.layout.d_reason);
    a.lung_sum = block_sum(p.layout.d_lung);
    a.findings_sum = block_sum(p.layout.d_findings);
    return a;
}

std::vector<double> project_cardiac_attribution(const Attribution& attr,
                                                const CardiacFeatureVector& features,
                                                const CtVolume& roi) {
    if (attr.layout.d_card != kCardiacChannels)
        throw ValidationError("attribution has no cardiac block to project");

    std::vector<double> heat(roi.voxels.size(), 0.0);
    for (int c = 0; c < kCardiacChannels; ++c) {
        const double a = attr.values[static_cast<std::size_t>(c)];
        if (a == 0.0) continue;
        const std::vector<std::uint32_t> support = channel_support(features, c, roi);
        if (support.empty()) continue;
        const double share = a / static_cast<double>(support.size());
        for (std::uint32_t idx : support) heat[idx] += share;
    }
    return heat;
}

CtVolume heat_to_volume(const std::vector<double>& heat, const CtVolume& roi) {
    if (heat.size() != roi.voxels.size())
        throw ValidationError("heat field does not match the ROI");
    CtVolume out;
    out.dims = roi.dims;
    out.spacing = roi.spacing;
    out.intensity_state = IntensityState::raw_hu;
    out.subject_id = roi.subject_id;
    out.scan_id = roi.scan_id;
    out.voxels.resize(heat.size());
    for (std::size_t i = 0; i < heat.size(); ++i) out.voxels[i] = static_cast<float>(heat[i]);
    return out;
}

std::string attribute_indicators(const Attribution& attr, const ReasoningTrace& trace,
                                 const KnowledgeGraph& kb, int top_k) {
    if (trace.kb_version != kb.version)
        throw ValidationError("trace KB version '" + trace.kb_version +
                              "' does not match KB '" + kb.version + "'");
    if (attr.layout.d_reason != kb.d_reason())
        throw ValidationError("attribution reasoning block does not match KB dimension");

    struct Row {
        std::string name;
        double attribution;
        double activation;
    };
    std::vector<Row> rows;
    const int offset = attr.layout.d_card;
    for (int i = 0; i < kb.d_reason(); ++i) {
        rows.push_back({kb.indicator_names[static_cast<std::size_t>(i)],
                        attr.values[static_cast<std::size_t>(offset + i)],
                        trace.indicator_vector[static_cast<std::size_t>(i)]});
    }
    std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
        if (std::fabs(a.attribution) != std::fabs(b.attribution))
            return std::fabs(a.attribution) > std::fabs(b.attribution);
        return a.name < b.name;
    });

    json j;
    j["rationale"] = render_rationale(trace);
    j["first_order_only"] = attr.first_order_only;
    json mech = json::array();
    for (int i = 0; i < std::min<int>(top_k, static_cast<int>(rows.size())); ++i) {
        mech.push_back({{"name", rows[static_cast<std::size_t>(i)].name},
                        {"attribution", rows[static_cast<std::size_t>(i)].attribution},
                        {"activation", rows[static_cast<std::size_t>(i)].activation}});
    }
    j["mechanisms"] = mech;
    return j.dump(2);
}

}  // namespace cardiopulm
