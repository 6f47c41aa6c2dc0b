#pragma once

#include <array>
#include <string>
#include <vector>

#include "cardiopulm/masks.hpp"
#include "cardiopulm/volume.hpp"

namespace cardiopulm {

// The five-finding vocabulary shared by the perception detectors, the
// knowledge base and the phantom generator.
enum class Finding { opacity = 0, pleural_effusion, fibrosis, emphysema, nodule };

inline constexpr int kFindingCount = 5;
inline constexpr std::array<Finding, 5> kAllFindings = {
    Finding::opacity, Finding::pleural_effusion, Finding::fibrosis, Finding::emphysema,
    Finding::nodule};

const char* to_string(Finding f);
Finding finding_from_string(const std::string& s);

enum class FindingSource { rule_based, external_service, file };
const char* to_string(FindingSource s);

inline constexpr double kRetentionThreshold = 0.5;

struct FindingScore {
    Finding name;
    double score;  // [0, 1]
};

struct FindingSet {
    std::vector<FindingScore> findings;  // unique names, insertion order preserved
    FindingSource source = FindingSource::rule_based;

    // Names with score >= 0.5, in findings order. Computed, so it can never
    // drift from the scores.
    std::vector<Finding> retained() const;
    bool is_retained(Finding f) const;
    double score_of(Finding f) const;  // 0 when absent
};

// Validate scores/uniqueness and build a FindingSet applying the >= 0.5
// retention rule. Throws ValidationError on out-of-range scores or duplicates.
FindingSet filter_findings(const std::vector<FindingScore>& raw,
                           FindingSource source = FindingSource::rule_based);

// Raw signature statistics measured on a standardized volume; inputs to the
// frozen logistic calibration below.
struct SignatureStats {
    double emphysema_low_attenuation = 0;  // fraction of lung voxels < -950 HU
    double effusion_layer = 0;             // dependent water-density layer, relative thickness
    double fibrosis_peripheral = 0;        // fraction of peripheral lung band > -700 HU
    double opacity_mid_fraction = 0;       // mid-attenuation fraction of the filled lung region
    double nodule_count = 0;               // compact blob count / 10
};

SignatureStats measure_signatures(const CtVolume& v, const MaskVolume& left_lung,
                                  const MaskVolume& right_lung);

struct LogisticMap {
    double slope = 1.0;
    double offset = 0.0;
    double score(double stat) const;
};

// Frozen statistic->score calibration (fit once against generator severity
// grids by tools/calibrate_perception, then hard-coded here).
struct PerceptionCalibration {
    std::string version;
    std::array<LogisticMap, kFindingCount> maps;  // indexed by Finding
};

const PerceptionCalibration& builtin_perception_calibration();

// Score the five findings from signature statistics and apply the retention
// rule. Deterministic per volume.
FindingSet score_findings(const CtVolume& v, const MaskVolume& left_lung,
                          const MaskVolume& right_lung,
                          const PerceptionCalibration& cal = builtin_perception_calibration());

// {"findings":[{"name":..,"score":..}], "source":..} — the same schema the
// remote findings protocol uses.
std::string findings_to_json(const FindingSet& fs);
FindingSet findings_from_json(const std::string& text, FindingSource source_override);
FindingSet findings_from_json(const std::string& text);

}  // namespace cardiopulm
