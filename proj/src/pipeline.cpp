#include "cardiopulm/pipeline.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "cardiopulm/attribution.hpp"
#include "cardiopulm/cardiac_features.hpp"
#include "cardiopulm/errors.hpp"
#include "cardiopulm/heart_locator.hpp"
#include "cardiopulm/knowledge.hpp"
#include "cardiopulm/lung_risk.hpp"
#include "cardiopulm/masks.hpp"
#include "cardiopulm/nifti_io.hpp"
#include "cardiopulm/reasoning.hpp"
#include "cardiopulm/remote.hpp"
#include "cardiopulm/version.hpp"

namespace cardiopulm {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string slurp(const std::string& path, const std::string& stage) {
    std::ifstream in(path);
    if (!in)
        throw UpstreamMissingError("missing output of the " + stage + " stage: '" + path +
                                   "' (run the " + stage + " subcommand first)");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void spit(const std::string& path, const std::string& text) {
    fs::create_directories(fs::path(path).parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << text;
    if (!out) throw IoError("I/O failure writing '" + path + "'");
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

json config_to_canonical_json(const PipelineConfig& cfg, bool include_machine_fields) {
    json j;
    if (include_machine_fields) {
        j["run_dir"] = cfg.run_dir;
        j["workers"] = cfg.workers;
    }
    j["seed"] = cfg.seed;
    j["simulate"] = {{"n_subjects", cfg.n_subjects},
                     {"dims", cfg.dims},
                     {"spacing_mm", cfg.spacing_mm},
                     {"scans_per_subject", cfg.scans_per_subject},
                     {"risk_weights", json::parse(risk_weights_to_json(cfg.risk_weights))}};
    j["preprocess"] = {{"target_spacing_mm", cfg.target_spacing_mm}};
    j["locate"] = {{"roi_extent", cfg.roi_extent}};
    j["findings"] = {{"source", cfg.findings_source},
                     {"endpoint", cfg.findings_endpoint},
                     {"dir", cfg.findings_dir}};
    j["reason"] = {{"kb_path", cfg.kb_path},
                   {"source", cfg.reasoning_source},
                   {"endpoint", cfg.reasoning_endpoint}};
    j["lungrisk"] = {{"source", cfg.lungrisk_source},
                     {"surrogate_path", cfg.lung_surrogate_path},
                     {"trajectory_file", cfg.trajectory_file},
                     {"repair_monotone", cfg.repair_monotone}};
    j["train"] = {{"lr", cfg.train.lr},
                  {"weight_decay", cfg.train.weight_decay},
                  {"max_epochs", cfg.train.max_epochs},
                  {"patience", cfg.train.patience},
                  {"batch_size", cfg.train.batch_size},
                  {"hidden_width", cfg.train.hidden_width},
                  {"pos_weight", cfg.train.pos_weight},
                  {"seed", cfg.train.seed}};
    j["evaluate"] = {{"variant", cfg.variant},
                     {"n_resamples", cfg.n_resamples},
                     {"split_seed", cfg.split_seed},
                     {"aggregate", cfg.aggregate}};
    return j;
}

}  // namespace

PipelineConfig config_from_json(const std::string& text) {
    PipelineConfig cfg;
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("bad config JSON: ") + e.what());
    }
    try {
        cfg.run_dir = j.value("run_dir", cfg.run_dir);
        cfg.seed = j.value("seed", cfg.seed);
        cfg.workers = j.value("workers", cfg.workers);
        if (j.contains("simulate")) {
            const json& s = j["simulate"];
            cfg.n_subjects = s.value("n_subjects", cfg.n_subjects);
            if (s.contains("dims"))
                for (int a = 0; a < 3; ++a) cfg.dims[a] = s["dims"].at(a).get<int>();
            cfg.spacing_mm = s.value("spacing_mm", cfg.spacing_mm);
            cfg.scans_per_subject = s.value("scans_per_subject", cfg.scans_per_subject);
            if (s.contains("risk_weights"))
                cfg.risk_weights = risk_weights_from_json(s["risk_weights"].dump());
        }
        if (j.contains("preprocess"))
            cfg.target_spacing_mm = j["preprocess"].value("target_spacing_mm", cfg.target_spacing_mm);
        if (j.contains("locate")) cfg.roi_extent = j["locate"].value("roi_extent", cfg.roi_extent);
        if (j.contains("findings")) {
            cfg.findings_source = j["findings"].value("source", cfg.findings_source);
            cfg.findings_endpoint = j["findings"].value("endpoint", cfg.findings_endpoint);
            cfg.findings_dir = j["findings"].value("dir", cfg.findings_dir);
        }
        if (j.contains("reason")) {
            cfg.kb_path = j["reason"].value("kb_path", cfg.kb_path);
            cfg.reasoning_source = j["reason"].value("source", cfg.reasoning_source);
            cfg.reasoning_endpoint = j["reason"].value("endpoint", cfg.reasoning_endpoint);
        }
        if (j.contains("lungrisk")) {
            cfg.lungrisk_source = j["lungrisk"].value("source", cfg.lungrisk_source);
            cfg.lung_surrogate_path = j["lungrisk"].value("surrogate_path", cfg.lung_surrogate_path);
            cfg.trajectory_file = j["lungrisk"].value("trajectory_file", cfg.trajectory_file);
            cfg.repair_monotone = j["lungrisk"].value("repair_monotone", cfg.repair_monotone);
        }
        if (j.contains("train")) {
            const json& t = j["train"];
            cfg.train.lr = t.value("lr", cfg.train.lr);
            cfg.train.weight_decay = t.value("weight_decay", cfg.train.weight_decay);
            cfg.train.max_epochs = t.value("max_epochs", cfg.train.max_epochs);
            cfg.train.patience = t.value("patience", cfg.train.patience);
            cfg.train.batch_size = t.value("batch_size", cfg.train.batch_size);
            cfg.train.hidden_width = t.value("hidden_width", cfg.train.hidden_width);
            cfg.train.pos_weight = t.value("pos_weight", cfg.train.pos_weight);
            cfg.train.seed = t.value("seed", cfg.train.seed);
        }
        if (j.contains("evaluate")) {
            cfg.variant = j["evaluate"].value("variant", cfg.variant);
            cfg.n_resamples = j["evaluate"].value("n_resamples", cfg.n_resamples);
            cfg.split_seed = j["evaluate"].value("split_seed", cfg.split_seed);
            cfg.aggregate = j["evaluate"].value("aggregate", cfg.aggregate);
        }
    } catch (const json::exception& e) {
        throw ValidationError(std::string("config schema violation: ") + e.what());
    }
    return cfg;
}

std::string config_to_json(const PipelineConfig& cfg) {
    return config_to_canonical_json(cfg, true).dump(2);
}

std::string config_hash(const PipelineConfig& cfg) {
    const std::string canonical = config_to_canonical_json(cfg, false).dump();
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a(canonical)));
    return buf;
}

void write_run_manifest(const PipelineConfig& cfg) {
    json j;
    j["config"] = config_to_canonical_json(cfg, true);
    j["config_hash"] = config_hash(cfg);
    j["versions"] = {{"tool", kToolVersion},
                     {"kb", cfg.kb_path.empty() ? default_knowledge_base().version
                                                : load_knowledge_base(cfg.kb_path).version},
                     {"perception_calibration", builtin_perception_calibration().version},
                     {"lung_surrogate", builtin_lung_surrogate().version}};
    spit(cfg.run_dir + "/manifest.json", j.dump(2) + "\n");
}

Pipeline::Pipeline(PipelineConfig cfg) : config(std::move(cfg)) {
    kb_ = config.kb_path.empty() ? default_knowledge_base()
                                 : load_knowledge_base(config.kb_path);
    if (config.lung_surrogate_path.empty()) {
        surrogate_ = builtin_lung_surrogate();
    } else {
        surrogate_ = lung_surrogate_from_json(
            slurp(config.lung_surrogate_path, "lungrisk-constants"));
    }
    hash_ = config_hash(config);
}

std::string Pipeline::dir(const std::string& stage) const {
    return config.run_dir + "/" + stage;
}

bool Pipeline::stage_fresh(const std::string& stage) const {
    const std::string stamp = dir(stage) + "/stage.json";
    if (!fs::exists(stamp)) return false;
    try {
        const json j = json::parse(slurp(stamp, stage));
        return j.at("config_hash").get<std::string>() == hash_;
    } catch (const std::exception&) {
        return false;
    }
}

void Pipeline::stamp_stage(const std::string& stage) const {
    json j;
    j["stage"] = stage;
    j["config_hash"] = hash_;
    spit(dir(stage) + "/stage.json", j.dump(2) + "\n");
}

void Pipeline::require_stage(const std::string& stage) const {
    if (!stage_fresh(stage))
        throw UpstreamMissingError(
            "stage '" + stage + "' has no up-to-date output under '" + dir(stage) +
            "' for config hash " + hash_ + "; run the '" + stage + "' subcommand first");
}

std::vector<ManifestRow> Pipeline::manifest_rows() const {
    return parse_cohort_manifest(slurp(dir("cohort") + "/manifest.csv", "simulate"));
}

void Pipeline::simulate() {
    if (stage_fresh("cohort") && stage_fresh("volumes")) return;
    CohortOptions opts;
    opts.dims = config.dims;
    opts.spacing_mm = config.spacing_mm;
    opts.scans_per_subject = config.scans_per_subject;
    const std::vector<CohortRecord> cohort =
        sample_cohort(config.n_subjects, config.seed, config.risk_weights, opts);

    fs::create_directories(dir("volumes"));
    fs::create_directories(dir("cohort") + "/specs");

    struct ScanJob {
        PhantomSpec spec;
        std::string path;
    };
    std::vector<ScanJob> jobs;
    std::map<std::string, std::string> paths;
    for (const CohortRecord& rec : cohort)
        for (std::size_t k = 0; k < rec.scan_ids.size(); ++k) {
            PhantomSpec spec = rec.spec;
            spec.seed = k == 0 ? rec.spec.seed : scan_seed(rec.spec.seed, static_cast<int>(k));
            spec.scan_id = rec.scan_ids[k];
            paths[spec.scan_id] = "volumes/" + spec.scan_id + ".nii";
            const std::string path = config.run_dir + "/" + paths[spec.scan_id];
            jobs.push_back({std::move(spec), path});
        }

    const std::int64_t n = static_cast<std::int64_t>(jobs.size());
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t i = 0; i < n; ++i) {
        const ScanJob& job = jobs[static_cast<std::size_t>(i)];
        const CtVolume v = generate_phantom(job.spec);
        save_volume(v, job.path);
    }
    for (const ScanJob& job : jobs)
        spit(dir("cohort") + "/specs/" + job.spec.scan_id + ".json",
             phantom_spec_to_json(job.spec) + "\n");

    spit(dir("cohort") + "/manifest.csv", cohort_manifest_csv(cohort, paths));
    stamp_stage("cohort");
    stamp_stage("volumes");
}

void Pipeline::preprocess() {
    require_stage("cohort");
    require_stage("volumes");
    if (stage_fresh("prep")) return;
    const auto rows = manifest_rows();
    fs::create_directories(dir("prep"));
    const std::int64_t n = static_cast<std::int64_t>(rows.size());
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t i = 0; i < n; ++i) {
        const ManifestRow& row = rows[static_cast<std::size_t>(i)];
        const std::string vol_path = row.volume_path.starts_with("/")
                                         ? row.volume_path
                                         : config.run_dir + "/" + row.volume_path;
        CtVolume v = load_volume(vol_path);
        v.subject_id = row.subject_id;
        v.scan_id = row.scan_id;
        const CtVolume prepped =
            resample_isotropic(clip_hu(v, kernels::Exec::serial), config.target_spacing_mm,
                               kernels::Exec::serial);
        save_volume(prepped, dir("prep") + "/" + row.scan_id + ".nii");
    }
    stamp_stage("prep");
}

void Pipeline::locate() {
    require_stage("prep");
    if (stage_fresh("locate")) return;
    const auto rows = manifest_rows();
    fs::create_directories(dir("locate"));
    const std::int64_t n = static_cast<std::int64_t>(rows.size());
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t i = 0; i < n; ++i) {
        const ManifestRow& row = rows[static_cast<std::size_t>(i)];
        const CtVolume v = load_volume(dir("prep") + "/" + row.scan_id + ".nii");
        const RoiResult roi = locate_heart_roi(v, config.roi_extent);
        spit(dir("locate") + "/" + row.scan_id + ".json", roi_to_json(roi) + "\n");
    }
    stamp_stage("locate");
}

void Pipeline::findings() {
    require_stage("prep");
    if (stage_fresh("findings")) return;
    const auto rows = manifest_rows();
    fs::create_directories(dir("findings"));
    const std::int64_t n = static_cast<std::int64_t>(rows.size());

    if (config.findings_source == "rule_based") {
#pragma omp parallel for schedule(dynamic)
        for (std::int64_t i = 0; i < n; ++i) {
            const ManifestRow& row = rows[static_cast<std::size_t>(i)];
            const CtVolume v = load_volume(dir("prep") + "/" + row.scan_id + ".nii");
            const MaskVolume body = body_mask(v);
            const auto [left, right] = lung_mask(v, body);
            const FindingSet fs_scan = score_findings(v, left, right);
            spit(dir("findings") + "/" + row.scan_id + ".json",
                 findings_to_json(fs_scan) + "\n");
        }
    } else if (config.findings_source == "external_service") {
        for (const ManifestRow& row : rows) {
            const FindingSet fs_scan =
                fetch_findings_remote(row.scan_id, config.findings_endpoint);
            spit(dir("findings") + "/" + row.scan_id + ".json",
                 findings_to_json(fs_scan) + "\n");
        }
    } else if (config.findings_source == "file") {
        for (const ManifestRow& row : rows) {
            const std::string src = config.findings_dir + "/" + row.scan_id + ".json";
            const FindingSet fs_scan =
                findings_from_json(slurp(src, "findings(file)"), FindingSource::file);
            spit(dir("findings") + "/" + row.scan_id + ".json",
                 findings_to_json(fs_scan) + "\n");
        }
    } else {
        throw ValidationError("unknown findings source '" + config.findings_source + "'");
    }
    stamp_stage("findings");
}

void Pipeline::reason() {
    require_stage("findings");
    if (stage_fresh("reason")) return;
    const auto rows = manifest_rows();
    fs::create_directories(dir("reason"));
    const std::int64_t n = static_cast<std::int64_t>(rows.size());
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t i = 0; i < n; ++i) {
        const ManifestRow& row = rows[static_cast<std::size_t>(i)];
        const FindingSet fs_scan =
            findings_from_json(slurp(dir("findings") + "/" + row.scan_id + ".json", "findings"),
                               FindingSource::file);
        ReasoningTrace trace;
        if (config.reasoning_source == "local") {
            trace = cardiopulm::reason(fs_scan, kb_);
        } else if (config.reasoning_source == "external_service") {
            trace = fetch_reasoning_remote(fs_scan, config.reasoning_endpoint, kb_);
        } else {
            throw ValidationError("unknown reasoning source '" + config.reasoning_source + "'");
        }
        spit(dir("reason") + "/" + row.scan_id + ".json", trace_to_json(trace) + "\n");
    }
    stamp_stage("reason");
}

void Pipeline::lungrisk() {
    require_stage("findings");
    if (stage_fresh("lungrisk")) return;
    const auto rows = manifest_rows();
    std::ostringstream csv;
    csv.precision(17);
    csv << "scan_id,y1,y2,y3,y4,y5,y6\n";
    for (const ManifestRow& row : rows) {
        RiskTrajectory t;
        if (config.lungrisk_source == "surrogate") {
            const FindingSet fs_scan = findings_from_json(
                slurp(dir("findings") + "/" + row.scan_id + ".json", "findings"),
                FindingSource::file);
            t = estimate_trajectory(fs_scan, surrogate_);
        } else if (config.lungrisk_source == "file") {
            t = load_trajectory_file(config.trajectory_file, row.scan_id,
                                     config.repair_monotone);
        } else {
            throw ValidationError("unknown lungrisk source '" + config.lungrisk_source + "'");
        }
        csv << row.scan_id;
        for (double v : t.values) csv << "," << v;
        csv << "\n";
    }
    spit(dir("lungrisk") + "/trajectories.csv", csv.str());
    stamp_stage("lungrisk");
}

void Pipeline::features() {
    require_stage("prep");
    require_stage("locate");
    if (stage_fresh("features")) return;
    const auto rows = manifest_rows();
    std::vector<std::string> lines(rows.size());
    const std::int64_t n = static_cast<std::int64_t>(rows.size());
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t i = 0; i < n; ++i) {
        const ManifestRow& row = rows[static_cast<std::size_t>(i)];
        const CtVolume v = load_volume(dir("prep") + "/" + row.scan_id + ".nii");
        const RoiResult roi =
            roi_from_json(slurp(dir("locate") + "/" + row.scan_id + ".json", "locate"));
        const CtVolume cropped = crop_roi(v, roi.box);
        const CardiacFeatureVector f = extract_cardiac_features(cropped);
        lines[static_cast<std::size_t>(i)] = feature_csv_row(row.scan_id, f);
    }
    std::ostringstream csv;
    csv << feature_csv_header() << "\n";
    for (const std::string& line : lines) csv << line << "\n";
    spit(dir("features") + "/cardiac.csv", csv.str());
    stamp_stage("features");
}

std::vector<ScanFeatures> Pipeline::load_feature_table() const {
    const auto rows = manifest_rows();

    // cardiac features
    std::map<std::string, std::vector<double>> card;
    {
        std::stringstream ss(slurp(dir("features") + "/cardiac.csv", "features"));
        std::string line;
        std::getline(ss, line);  // header
        while (std::getline(ss, line)) {
            if (line.empty()) continue;
            std::stringstream ls(line);
            std::string cell;
            std::getline(ls, cell, ',');
            const std::string scan = cell;
            std::vector<double> v;
            while (std::getline(ls, cell, ',')) v.push_back(std::stod(cell));
            if (static_cast<int>(v.size()) != kCardiacChannels)
                throw ValidationError("cardiac feature row for '" + scan + "' has " +
                                      std::to_string(v.size()) + " channels");
            card[scan] = std::move(v);
        }
    }

    // lung trajectories
    std::map<std::string, std::vector<double>> lung;
    {
        std::stringstream ss(slurp(dir("lungrisk") + "/trajectories.csv", "lungrisk"));
        std::string line;
        std::getline(ss, line);
        while (std::getline(ss, line)) {
            if (line.empty()) continue;
            std::stringstream ls(line);
            std::string cell;
            std::getline(ls, cell, ',');
            const std::string scan = cell;
            std::vector<double> v;
            while (std::getline(ls, cell, ',')) v.push_back(std::stod(cell));
            lung[scan] = std::move(v);
        }
    }

    std::vector<ScanFeatures> table;
    table.reserve(rows.size());
    for (const ManifestRow& row : rows) {
        ScanFeatures f;
        f.subject_id = row.subject_id;
        f.scan_id = row.scan_id;
        f.label_screening = row.label_screening;
        f.label_mortality = row.label_mortality;

        const auto ci = card.find(row.scan_id);
        if (ci == card.end())
            throw UpstreamMissingError("features stage has no row for scan '" + row.scan_id +
                                       "'");
        f.z_card = ci->second;

        const FindingSet fs_scan = findings_from_json(
            slurp(dir("findings") + "/" + row.scan_id + ".json", "findings"),
            FindingSource::file);
        for (Finding fd : kAllFindings) f.finding_scores.push_back(fs_scan.score_of(fd));

        const ReasoningTrace trace = trace_from_json(
            slurp(dir("reason") + "/" + row.scan_id + ".json", "reason"), kb_);
        f.z_reason = encode_indicators(trace, kb_.version, kb_.d_reason());

        const auto li = lung.find(row.scan_id);
        if (li == lung.end())
            throw UpstreamMissingError("lungrisk stage has no row for scan '" + row.scan_id +
                                       "'");
        f.z_lung = li->second;

        table.push_back(std::move(f));
    }
    return table;
}

namespace {

struct VariantData {
    std::vector<FusionInput> train_set, val_set, test_set;
    BlockLayout layout;
};

VariantData assemble_variant(const std::vector<ScanFeatures>& features,
                             const SplitResult& split, Task task,
                             const std::string& variant) {
    const int d_card = static_cast<int>(features.front().z_card.size());
    const int d_reason = static_cast<int>(features.front().z_reason.size());
    const int d_lung = static_cast<int>(features.front().z_lung.size());
    const std::set<std::string> train_ids(split.train.begin(), split.train.end());
    const std::set<std::string> val_ids(split.val.begin(), split.val.end());

    VariantData out;
    out.layout = variant_layout(variant, d_card, d_reason, d_lung);
    for (const ScanFeatures& f : features) {
        FusionInput in;
        in.subject_id = f.subject_id;
        in.scan_id = f.scan_id;
        in.label = task == Task::screening ? f.label_screening : f.label_mortality;
        in.x = variant_features(variant, f);
        if (train_ids.count(f.subject_id))
            out.train_set.push_back(std::move(in));
        else if (val_ids.count(f.subject_id))
            out.val_set.push_back(std::move(in));
        else
            out.test_set.push_back(std::move(in));
    }
    return out;
}

}  // namespace

void Pipeline::train_stage(Task task, const std::string& variant) {
    const std::vector<ScanFeatures> features = load_feature_table();
    std::vector<SubjectLabel> subjects;
    {
        std::set<std::string> seen;
        for (const ScanFeatures& f : features)
            if (seen.insert(f.subject_id).second)
                subjects.push_back({f.subject_id, f.label_screening, f.label_mortality});
    }
    const SplitResult split = split_subjects(subjects, config.split_seed);
    const VariantData data = assemble_variant(features, split, task, variant);
    const TrainResult result =
        train(data.train_set, data.val_set, config.train, data.layout, kb_.version);

    const std::string out_dir =
        dir("train") + "/" + to_string(task) + "/" + variant;
    fs::create_directories(out_dir);
    ModelParams params = result.params;
    params.channel_manifest.assign(cardiac_channel_names().begin(),
                                   cardiac_channel_names().end());
    save_params(params, out_dir + "/params.json");

    json log = json::array();
    for (const EpochLog& e : result.log)
        log.push_back({{"epoch", e.epoch},
                       {"lr", e.lr},
                       {"train_loss", e.train_loss},
                       {"val_auc", e.val_auc},
                       {"improved", e.improved}});
    json j;
    j["best_epoch"] = result.best_epoch;
    j["best_val_auc"] = result.best_val_auc;
    j["epochs"] = log;
    spit(out_dir + "/training_log.json", j.dump(2) + "\n");
}

EvalReport Pipeline::evaluate_stage(Task task, const std::string& variant) {
    const std::vector<ScanFeatures> features = load_feature_table();
    std::vector<SubjectLabel> subjects;
    {
        std::set<std::string> seen;
        for (const ScanFeatures& f : features)
            if (seen.insert(f.subject_id).second)
                subjects.push_back({f.subject_id, f.label_screening, f.label_mortality});
    }
    const SplitResult split = split_subjects(subjects, config.split_seed);
    const VariantData data = assemble_variant(features, split, task, variant);

    const std::string params_path =
        dir("train") + "/" + to_string(task) + "/" + variant + "/params.json";
    if (!fs::exists(params_path))
        throw UpstreamMissingError("train stage output missing: '" + params_path +
                                   "'; run the 'train' subcommand first");
    const ModelParams params = load_params(params_path, kb_.version, data.layout);

    const std::vector<double> scores = predict_batch(params, data.test_set);
    if (config.aggregate != "max" && config.aggregate != "mean")
        throw ValidationError("evaluate.aggregate must be max or mean");
    const SubjectAggregate rule =
        config.aggregate == "mean" ? SubjectAggregate::mean : SubjectAggregate::max;
    const EvalReport report = evaluate_subject_level(data.test_set, scores, task, variant,
                                                     config.n_resamples, config.train.seed,
                                                     rule);

    const std::string out_dir = dir("eval") + "/" + to_string(task) + "/" + variant;
    fs::create_directories(out_dir);
    spit(out_dir + "/report.json", report_to_json(report) + "\n");
    spit(out_dir + "/roc.csv", roc_to_csv(report));
    spit(out_dir + "/roc.svg", roc_to_svg({report}));
    return report;
}

void Pipeline::ablate() {
    const std::vector<ScanFeatures> features = load_feature_table();
    std::vector<SubjectLabel> subjects;
    {
        std::set<std::string> seen;
        for (const ScanFeatures& f : features)
            if (seen.insert(f.subject_id).second)
                subjects.push_back({f.subject_id, f.label_screening, f.label_mortality});
    }

    AblationConfig acfg;
    acfg.train = config.train;
    acfg.n_resamples = config.n_resamples;
    acfg.split_seed = config.split_seed;

    std::map<Task, std::vector<EvalReport>> all;
    for (Task task : {Task::screening, Task::mortality}) {
        all[task] = run_ablation(features, subjects, task, acfg, kb_.version);
        json arr = json::array();
        for (const EvalReport& r : all[task]) arr.push_back(json::parse(report_to_json(r)));
        spit(dir("eval") + "/ablation_" + to_string(task) + ".json", arr.dump(2) + "\n");
        spit(dir("eval") + "/roc_" + std::string(to_string(task)) + ".svg",
             roc_to_svg(all[task]));
        for (const EvalReport& r : all[task])
            if (r.variant_name == kIntegratedVariant)
                spit(dir("eval") + "/" + to_string(task) + ".json", report_to_json(r) + "\n");
    }
    spit(dir("eval") + "/ablation.txt",
         ablation_table(all[Task::screening], all[Task::mortality]));
    stamp_stage("eval");
}

void Pipeline::explain(const std::string& scan_id) {
    require_stage("prep");
    require_stage("locate");
    const std::string params_path =
        dir("train") + "/screening/" + config.variant + "/params.json";
    if (!fs::exists(params_path))
        throw UpstreamMissingError("train stage output missing: '" + params_path + "'");

    const std::vector<ScanFeatures> table = load_feature_table();
    const ScanFeatures* found = nullptr;
    for (const ScanFeatures& f : table)
        if (f.scan_id == scan_id) found = &f;
    if (found == nullptr)
        throw ValidationError("scan '" + scan_id + "' not present in the cohort manifest");

    const BlockLayout layout = variant_layout(
        config.variant, static_cast<int>(found->z_card.size()),
        static_cast<int>(found->z_reason.size()), static_cast<int>(found->z_lung.size()));
    const ModelParams params = load_params(params_path, kb_.version, layout);

    FusionInput in;
    in.subject_id = found->subject_id;
    in.scan_id = found->scan_id;
    in.label = found->label_screening;
    in.x = variant_features(config.variant, *found);
    const Attribution attr = attribute_input(params, in);

    const CtVolume v = load_volume(dir("prep") + "/" + scan_id + ".nii");
    const RoiResult roi =
        roi_from_json(slurp(dir("locate") + "/" + scan_id + ".json", "locate"));
    const CtVolume cropped = crop_roi(v, roi.box);
    const CardiacFeatureVector cf = extract_cardiac_features(cropped);

    const std::string out_dir = dir("explain") + "/" + scan_id;
    fs::create_directories(out_dir);
    if (layout.d_card == kCardiacChannels) {
        const std::vector<double> heat = project_cardiac_attribution(attr, cf, cropped);
        save_volume(heat_to_volume(heat, cropped), out_dir + "/heatmap.nii");
    }
    if (layout.d_reason > 0) {
        const ReasoningTrace trace = trace_from_json(
            slurp(dir("reason") + "/" + scan_id + ".json", "reason"), kb_);
        spit(out_dir + "/indicators.json",
             attribute_indicators(attr, trace, kb_) + "\n");
    }
    json blocks;
    blocks["logit"] = attr.logit;
    blocks["bias_term"] = attr.bias_term;
    blocks["first_order_only"] = attr.first_order_only;
    blocks["cardiac_sum"] = attr.cardiac_sum;
    blocks["reasoning_sum"] = attr.reasoning_sum;
    blocks["lung_sum"] = attr.lung_sum;
    blocks["findings_sum"] = attr.findings_sum;
    spit(out_dir + "/blocks.json", blocks.dump(2) + "\n");
}

void Pipeline::run_all() {
    write_run_manifest(config);
    simulate();
    preprocess();
    locate();
    findings();
    reason();
    lungrisk();
    features();
    ablate();
}

}  // namespace cardiopulm
