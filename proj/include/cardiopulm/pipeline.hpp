#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cardiopulm/cohort.hpp"
#include "cardiopulm/eval.hpp"
#include "cardiopulm/fusion.hpp"
#include "cardiopulm/knowledge.hpp"
#include "cardiopulm/lung_risk.hpp"

namespace cardiopulm {

// Run-directory layout (everything under config.run_dir):
//   manifest.json                 manifest-of-record: config, hash, versions
//   cohort/manifest.csv           subject/scan/label table (+ oracle true_risk)
//   cohort/specs/<scan>.json      PhantomSpec per scan
//   volumes/<scan>.nii            raw phantoms
//   prep/<scan>.nii               clipped + isotropically resampled
//   locate/<scan>.json            heart ROI
//   findings/<scan>.json          scored findings
//   reason/<scan>.json            reasoning trace
//   lungrisk/trajectories.csv     scan_id,y1..y6
//   features/cardiac.csv          32-channel cardiac features
//   train/<task>/<variant>/params.json, training_log.json
//   eval/<task>/<variant>/report.json, roc.csv, roc.svg
//   eval/ablation_<task>.json, eval/ablation.txt, eval/<task>.json
//   explain/<scan>/heatmap.nii, indicators.json
// Each stage directory carries a stage.json stamp with the config hash;
// outputs from a different hash are recomputed, never reused.

struct PipelineConfig {
    std::string run_dir = "run";
    std::uint64_t seed = 7;
    int workers = 0;  // 0 = library default

    // simulate
    int n_subjects = 600;
    std::array<int, 3> dims{96, 96, 96};
    double spacing_mm = 1.5;
    int scans_per_subject = 1;
    RiskWeights risk_weights = default_risk_weights();

    // preprocess
    double target_spacing_mm = 1.5;

    // locate
    int roi_extent = 128;

    // findings: rule_based | external_service | file
    std::string findings_source = "rule_based";
    std::string findings_endpoint;
    std::string findings_dir;  // for source=file

    // reason: local | external_service
    std::string kb_path;  // empty = built-in KB
    std::string reasoning_source = "local";
    std::string reasoning_endpoint;

    // lungrisk: surrogate | file
    std::string lungrisk_source = "surrogate";
    std::string lung_surrogate_path;  // empty = built-in constants
    std::string trajectory_file;
    bool repair_monotone = false;

    // train / evaluate / ablate
    TrainConfig train;
    std::string variant = kIntegratedVariant;
    int n_resamples = 1000;
    std::uint64_t split_seed = 7;
    std::string aggregate = "max";  // subject score aggregation: max | mean
};

PipelineConfig config_from_json(const std::string& text);
std::string config_to_json(const PipelineConfig& cfg);

// Hash of the result-relevant config (run_dir and workers excluded: neither
// changes any output byte).
std::string config_hash(const PipelineConfig& cfg);

void write_run_manifest(const PipelineConfig& cfg);

struct Pipeline {
    explicit Pipeline(PipelineConfig cfg);

    void simulate();
    void preprocess();
    void locate();
    void findings();
    void reason();
    void lungrisk();
    void features();
    void train_stage(Task task, const std::string& variant);
    EvalReport evaluate_stage(Task task, const std::string& variant);
    void ablate();
    void explain(const std::string& scan_id);
    void run_all();

    // Assembled per-scan cache; throws UpstreamMissingError naming the first
    // stage whose output is absent.
    std::vector<ScanFeatures> load_feature_table() const;
    std::vector<ManifestRow> manifest_rows() const;
    const KnowledgeGraph& kb() const { return kb_; }

    PipelineConfig config;

private:
    bool stage_fresh(const std::string& stage) const;
    void stamp_stage(const std::string& stage) const;
    void require_stage(const std::string& stage) const;
    std::string dir(const std::string& stage) const;

    KnowledgeGraph kb_;
    LungSurrogate surrogate_;
    std::string hash_;
};

}  // namespace cardiopulm
