// Fits the statistic -> score logistic maps against phantom severity grids
// and prints the frozen constants (C++ snippet + JSON). Run once after any
// change to the generator or the signature statistics, then paste the values
// into src/findings.cpp and data/perception_calibration.json.

#include <array>
#include <cmath>
#include <cstdio>
#include <vector>

#include "cardiopulm/findings.hpp"
#include "cardiopulm/masks.hpp"
#include "cardiopulm/phantom.hpp"

using namespace cardiopulm;

namespace {

constexpr int kSeeds = 10;
constexpr std::array<double, 5> kLevels = {0.0, 0.25, 0.5, 0.75, 1.0};

double stat_of(const SignatureStats& s, Finding f) {
    switch (f) {
        case Finding::opacity: return s.opacity_mid_fraction;
        case Finding::pleural_effusion: return s.effusion_layer;
        case Finding::fibrosis: return s.fibrosis_peripheral;
        case Finding::emphysema: return s.emphysema_low_attenuation;
        case Finding::nodule: return s.nodule_count;
    }
    return 0;
}

double logit(double p) { return std::log(p / (1.0 - p)); }

}  // namespace

int main() {
    // mean statistic per finding per severity level
    std::array<std::array<double, 5>, kFindingCount> mean{};

    for (int fi = 0; fi < kFindingCount; ++fi) {
        const Finding f = kAllFindings[static_cast<std::size_t>(fi)];
        for (std::size_t li = 0; li < kLevels.size(); ++li) {
            double acc = 0;
            for (int seed = 0; seed < kSeeds; ++seed) {
                PhantomSpec spec = default_phantom_spec(1000 + static_cast<std::uint64_t>(seed));
                spec.level(f) = kLevels[li];
                const CtVolume v = generate_phantom(spec);
                const MaskVolume body = body_mask(v);
                const auto [left, right] = lung_mask(v, body);
                acc += stat_of(measure_signatures(v, left, right), f);
            }
            mean[static_cast<std::size_t>(fi)][li] = acc / kSeeds;
            std::printf("# %-17s severity %.2f  mean stat %.6f\n", to_string(f), kLevels[li],
                        mean[static_cast<std::size_t>(fi)][li]);
        }
    }

    // Two-point fit: severity 0 -> score 0.10, severity 0.75 -> score 0.80.
    std::printf("\n// builtin_perception_calibration() maps {slope, offset}:\n");
    std::printf("{\n  \"version\": \"percal-v1\",\n  \"maps\": {\n");
    for (int fi = 0; fi < kFindingCount; ++fi) {
        const double s0 = mean[static_cast<std::size_t>(fi)][0];
        const double s1 = mean[static_cast<std::size_t>(fi)][3];
        const double slope = (logit(0.80) - logit(0.10)) / (s1 - s0);
        const double offset = logit(0.10) - slope * s0;
        std::printf("    \"%s\": {\"slope\": %.4f, \"offset\": %.4f}%s\n",
                    to_string(kAllFindings[static_cast<std::size_t>(fi)]), slope, offset,
                    fi + 1 < kFindingCount ? "," : "");
    }
    std::printf("  }\n}\n");
    return 0;
}
