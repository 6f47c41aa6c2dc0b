#pragma once

#include <string>
#include <vector>

#include "cardiopulm/cardiac_features.hpp"
#include "cardiopulm/fusion.hpp"
#include "cardiopulm/reasoning.hpp"

namespace cardiopulm {

// gradient x input over the fused feature vector. For the linear-head test
// configuration the values satisfy sum(a_i) + bias = logit exactly; with a
// hidden layer they are a first-order account and first_order_only is set.
struct Attribution {
    std::vector<double> values;  // per input dimension
    double logit = 0;
    double bias_term = 0;  // logit minus sum of attributions (exact for linear)
    double cardiac_sum = 0, reasoning_sum = 0, lung_sum = 0, findings_sum = 0;
    bool first_order_only = false;
    BlockLayout layout;
};

Attribution attribute_input(const ModelParams& p, const FusionInput& x);

// Back-project cardiac-block attributions onto ROI voxels:
// heat(v) = sum over channels whose support contains v of attr_c / |support_c|.
// Double precision so the total equals the projected attribution mass to
// 1e-9; heat_to_volume converts to float for the NIfTI overlay.
std::vector<double> project_cardiac_attribution(const Attribution& attr,
                                                const CardiacFeatureVector& features,
                                                const CtVolume& roi);

CtVolume heat_to_volume(const std::vector<double>& heat, const CtVolume& roi);

// Rationale annotated with per-indicator attributions; inactive indicators
// get exactly zero (their input is zero). JSON shape:
// {rationale, first_order_only, mechanisms:[{name, attribution, activation}]}.
std::string attribute_indicators(const Attribution& attr, const ReasoningTrace& trace,
                                 const KnowledgeGraph& kb, int top_k = 5);

}  // namespace cardiopulm
