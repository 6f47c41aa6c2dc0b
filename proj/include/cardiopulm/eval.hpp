#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cardiopulm/fusion.hpp"

namespace cardiopulm {

enum class Task { screening, mortality };
const char* to_string(Task t);
Task task_from_string(const std::string& s);

struct SubjectLabel {
    std::string subject_id;
    int label_screening = 0;
    int label_mortality = 0;
    int label(Task t) const {
        return t == Task::screening ? label_screening : label_mortality;
    }
};

struct SplitResult {
    std::vector<std::string> train, val, test;
};

// Disjoint 70/10/20 subject partition (largest-remainder rounding on the
// totals), filled stratum-by-stratum over (screening, mortality) classes so
// every fold sees both classes whenever the counts allow it. Deterministic
// per seed; all scans of a subject inherit its fold.
SplitResult split_subjects(const std::vector<SubjectLabel>& subjects, std::uint64_t seed);

// Mann-Whitney AUC: (#concordant + 0.5 #tied) / (n_pos * n_neg), computed by
// average ranks. Throws on single-class inputs.
double auc(std::span<const double> scores, std::span<const int> labels);

struct RocPoint {
    double fpr = 0, tpr = 0, threshold = 0;
};

// Step ROC with ties grouped: one point per distinct threshold (descending)
// plus the (0,0) and (1,1) endpoints.
std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const int> labels);

// Trapezoid area under a ROC polyline; agrees with auc() to 1e-12.
double auc_trapezoid(const std::vector<RocPoint>& roc);

struct BootstrapResult {
    double lo = 0, hi = 0, median = 0;
    int resamples = 0;
    int skipped = 0;  // single-class resamples
};

// Percentile CI from subject-level block resampling: a drawn subject
// contributes all of its scans. Resample r derives its own seed, so replicas
// can run in parallel without changing the interval. Errors when more than
// 10% of resamples are single-class.
BootstrapResult bootstrap_ci(std::span<const double> scores, std::span<const int> labels,
                             std::span<const std::string> subject_ids, int n_resamples,
                             std::uint64_t seed);

struct EvalReport {
    std::string task;
    std::string variant_name;
    double auc = 0;
    double ci_lo = 0, ci_hi = 0;
    double bootstrap_median = 0;
    bool point_outside_ci = false;  // point AUC beyond the percentile bounds by >= 0.02
    std::vector<RocPoint> roc_points;
    int n_pos = 0, n_neg = 0;
    std::uint64_t seed = 0;
    int n_resamples = 0;
    int skipped_resamples = 0;
};

EvalReport evaluate_subject_level(std::span<const FusionInput> test_inputs,
                                  std::span<const double> scan_scores, Task task,
                                  const std::string& variant_name, int n_resamples,
                                  std::uint64_t seed,
                                  SubjectAggregate aggregate = SubjectAggregate::max);

std::string report_to_json(const EvalReport& r);
EvalReport report_from_json(const std::string& text);
std::string roc_to_csv(const EvalReport& r);
std::string roc_to_svg(const std::vector<EvalReport>& reports, int size_px = 480);

// Per-scan feature cache the ablation runner assembles variants from.
struct ScanFeatures {
    std::string subject_id;
    std::string scan_id;
    std::vector<double> z_card;      // 32
    std::vector<double> z_reason;    // d_reason
    std::vector<double> z_lung;      // 6
    std::vector<double> finding_scores;  // 5, raw perception scores
    int label_screening = 0;
    int label_mortality = 0;
};

// The six comparison rows, fixed order and spelling.
const std::vector<std::string>& ablation_variants();
inline constexpr const char* kIntegratedVariant = "cardiac+lung+reasoning";

BlockLayout variant_layout(const std::string& variant, int d_card, int d_reason, int d_lung);
std::vector<double> variant_features(const std::string& variant, const ScanFeatures& f);

struct AblationConfig {
    TrainConfig train;
    int n_resamples = 1000;
    std::uint64_t split_seed = 7;
};

// Train and evaluate every variant for the given task on one shared split.
std::vector<EvalReport> run_ablation(const std::vector<ScanFeatures>& features,
                                     const std::vector<SubjectLabel>& subjects, Task task,
                                     const AblationConfig& config,
                                     const std::string& kb_version);

std::string ablation_table(const std::vector<EvalReport>& screening,
                           const std::vector<EvalReport>& mortality);

}  // namespace cardiopulm
