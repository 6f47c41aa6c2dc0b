#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cardiopulm/eval.hpp"
#include "cardiopulm/phantom.hpp"

namespace cardiopulm {

// Generative risk model behind the synthetic cohort. The driver vector u
// holds the five pathology severities, calcification burden and pericardial
// fat fraction; indicator_w adds weight on knowledge-graph activations
// computed from the true severities (treating severity as a finding score
// without retention), which is what lets the reasoning features carry signal
// the raw scores only encode nonlinearly.
struct RiskWeights {
    std::array<double, kFindingCount> severity_w{};
    double calcification_w = 0;
    double fat_w = 0;
    std::map<std::string, double> indicator_w;  // KB node name -> weight
    double bias = 0;
    double mortality_factor = 0.5;  // P(mortality | screening=1) = risk * factor
};

RiskWeights default_risk_weights();

struct CohortRecord {
    std::string subject_id;
    std::vector<std::string> scan_ids;
    double true_risk = 0;  // (0, 1)
    int label_screening = 0;
    int label_mortality = 0;
    PhantomSpec spec;  // subject anatomy; scan k regenerates with scan_seed(spec.seed, k)
};

struct CohortOptions {
    std::array<int, 3> dims{96, 96, 96};
    double spacing_mm = 1.5;
    int scans_per_subject = 1;
};

// True risk for a driver configuration under the given weights.
double true_risk(const PhantomSpec& spec, const RiskWeights& w);

// Draw subjects: pathology severities and cardiac drivers from the documented
// mixture distributions, labels from the generative risk. Deterministic per
// seed; subjects are independent streams.
std::vector<CohortRecord> sample_cohort(int n_subjects, std::uint64_t seed,
                                        const RiskWeights& weights,
                                        const CohortOptions& options = {});

// AUC of the generative risk against the realized labels: the ceiling for any
// model on this cohort. Throws on single-class cohorts.
double bayes_optimal_auc(const std::vector<CohortRecord>& cohort, Task task);

std::vector<SubjectLabel> subject_labels(const std::vector<CohortRecord>& cohort);

// Manifest CSV: subject_id,scan_id,volume_path,label_screening,label_mortality,
// true_risk. The true_risk column is the oracle score; the pipeline never
// feeds it to the model.
std::string cohort_manifest_csv(const std::vector<CohortRecord>& cohort,
                                const std::map<std::string, std::string>& volume_paths);
struct ManifestRow {
    std::string subject_id, scan_id, volume_path;
    int label_screening = 0, label_mortality = 0;
    double true_risk = 0;
};
std::vector<ManifestRow> parse_cohort_manifest(const std::string& csv_text);

std::string risk_weights_to_json(const RiskWeights& w);
RiskWeights risk_weights_from_json(const std::string& text);

}  // namespace cardiopulm
