#pragma once

#include <array>
#include <string>

#include "cardiopulm/findings.hpp"

namespace cardiopulm {

inline constexpr int kTrajectoryYears = 6;

enum class TrajectorySource { surrogate, file };

// Cumulative 1..6 year malignancy risk; non-decreasing by construction.
struct RiskTrajectory {
    std::array<double, kTrajectoryYears> values{};
    TrajectorySource source = TrajectorySource::surrogate;
};

// Frozen logistic surrogate: year-t risk is
// sigmoid(bias + sum_f coeff_f * score_f + delta * (t-1)) over
// {nodule, opacity, fibrosis, emphysema}; delta > 0 keeps the curve
// non-decreasing. Never trained with the fusion head.
struct LungSurrogate {
    std::string version;
    double bias = 0.0;
    double delta = 0.0;  // > 0
    std::array<double, kFindingCount> coeff{};  // pleural_effusion slot unused (0)
};

const LungSurrogate& builtin_lung_surrogate();
LungSurrogate lung_surrogate_from_json(const std::string& text);
std::string lung_surrogate_to_json(const LungSurrogate& s);

RiskTrajectory estimate_trajectory(const FindingSet& findings,
                                   const LungSurrogate& surrogate = builtin_lung_surrogate());

// CSV bridge for externally computed trajectories: columns
// scan_id,y1,y2,y3,y4,y5,y6. Non-monotone rows are rejected unless
// repair_monotone is set, which applies a cumulative max.
RiskTrajectory load_trajectory_file(const std::string& path, const std::string& scan_id,
                                    bool repair_monotone = false);

void validate(const RiskTrajectory& t);

}  // namespace cardiopulm
