#include "cardiopulm/cohort.hpp"

#include <cmath>
#include <sstream>

#include <json.hpp>

#include "cardiopulm/errors.hpp"
#include "cardiopulm/knowledge.hpp"
#include "cardiopulm/reasoning.hpp"
#include "cardiopulm/rng.hpp"

namespace cardiopulm {

using nlohmann::json;

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Severity mixtures: absent with some probability, otherwise uniform on a
// finding-specific range. Effusion is bimodal-high on purpose: sub-threshold
// effusion would be invisible to the pipeline (it reaches the model only
// through retained findings), so the cohort keeps it either absent or clearly
// present.
struct SeverityMixture {
    double p_absent;
    double lo, hi;
};

constexpr SeverityMixture kMixtures[kFindingCount] = {
    /*opacity*/ {0.45, 0.15, 0.95},
    /*pleural_effusion*/ {0.60, 0.70, 1.00},
    /*fibrosis*/ {0.55, 0.20, 0.90},
    /*emphysema*/ {0.40, 0.10, 1.00},
    /*nodule*/ {0.50, 0.20, 1.00},
};

double draw_severity(Finding f, std::uint64_t key) {
    const SeverityMixture& m = kMixtures[static_cast<int>(f)];
    const double gate = rng::uniform01(rng::mix64(key ^ 0xAAAA));
    if (gate < m.p_absent) return 0.0;
    return m.lo + (m.hi - m.lo) * rng::uniform01(rng::mix64(key ^ 0xBBBB));
}

void validate_weights(const RiskWeights& w) {
    double mass = std::fabs(w.calcification_w) + std::fabs(w.fat_w);
    for (double x : w.severity_w) mass += std::fabs(x);
    for (const auto& [name, x] : w.indicator_w) mass += std::fabs(x);
    if (mass == 0.0) throw ValidationError("degenerate risk weights (all zero)");
    if (w.mortality_factor < 0.0 || w.mortality_factor > 1.0)
        throw ValidationError("mortality_factor must lie in [0,1]");
    for (const auto& [name, x] : w.indicator_w)
        if (default_knowledge_base().indicator_index(name) < 0)
            throw ValidationError("risk weight references unknown KB node '" + name + "'");
}

}  // namespace

RiskWeights default_risk_weights() {
    RiskWeights w;
    // direct pulmonary weights proportional to the frozen lung-surrogate
    // coefficients (0.3x), so the trajectory carries the direct term in full;
    // effusion reaches the risk only through the indicator routes below
    w.severity_w[static_cast<int>(Finding::opacity)] = 0.24;
    w.severity_w[static_cast<int>(Finding::pleural_effusion)] = 0.0;
    w.severity_w[static_cast<int>(Finding::fibrosis)] = 0.18;
    w.severity_w[static_cast<int>(Finding::emphysema)] = 0.27;
    w.severity_w[static_cast<int>(Finding::nodule)] = 0.66;
    w.calcification_w = 2.20;
    w.fat_w = 1.40;
    // Route a substantial share of the pulmonary signal through level-2/3
    // indicator activations.
    w.indicator_w["pulmonary_hypertension"] = 1.20;
    w.indicator_w["venous_congestion"] = 0.80;
    w.indicator_w["right_ventricular_strain"] = 2.40;
    w.indicator_w["impaired_myocardial_perfusion"] = 1.00;
    w.bias = -4.45;
    w.mortality_factor = 0.50;
    return w;
}

double true_risk(const PhantomSpec& spec, const RiskWeights& w) {
    double logit = w.bias;
    for (Finding f : kAllFindings)
        logit += w.severity_w[static_cast<int>(f)] * spec.level(f);
    logit += w.calcification_w * std::min(spec.calcification_burden, 1.5);
    logit += w.fat_w * spec.pericardial_fat_fraction;

    if (!w.indicator_w.empty()) {
        // Activations of the shipped KB with severities standing in for
        // finding scores, under the same >= 0.5 retention rule the perception
        // stage applies. Indicator-routed risk is therefore exactly what the
        // reasoning features measure.
        const KnowledgeGraph& kb = default_knowledge_base();
        std::map<std::string, double> act;
        for (const KbNode& n : kb.nodes) act[n.name] = 0.0;
        for (Finding f : kAllFindings)
            act[to_string(f)] = spec.level(f) >= kRetentionThreshold ? spec.level(f) : 0.0;
        for (int level = 1; level <= 3; ++level)
            for (const KbNode& n : kb.nodes) {
                if (n.level != level) continue;
                double best = 0.0;
                std::map<int, double> group_min;
                for (const KbEdge& e : kb.edges) {
                    if (e.to != n.name) continue;
                    const double c = act[e.from] * e.weight;
                    if (e.and_group != 0) {
                        const auto it = group_min.find(e.and_group);
                        group_min[e.and_group] =
                            it == group_min.end() ? c : std::min(it->second, c);
                    } else {
                        best = std::max(best, c);
                    }
                }
                for (const auto& [gid, c] : group_min) best = std::max(best, c);
                act[n.name] = best;
            }
        for (const auto& [name, weight] : w.indicator_w) logit += weight * act[name];
    }
    return sigmoid(logit);
}

std::vector<CohortRecord> sample_cohort(int n_subjects, std::uint64_t seed,
                                        const RiskWeights& weights,
                                        const CohortOptions& options) {
    if (n_subjects < 10) throw ValidationError("cohort needs at least 10 subjects");
    validate_weights(weights);

    std::vector<CohortRecord> cohort;
    cohort.reserve(static_cast<std::size_t>(n_subjects));
    for (int s = 0; s < n_subjects; ++s) {
        const std::uint64_t sk = rng::combine(seed, 0x5B, static_cast<std::uint64_t>(s));

        CohortRecord rec;
        char buf[32];
        std::snprintf(buf, sizeof(buf), "sub%05d", s);
        rec.subject_id = buf;

        rec.spec = default_phantom_spec(rng::combine(sk, 1), options.dims);
        for (int a = 0; a < 3; ++a) rec.spec.spacing[a] = options.spacing_mm;
        for (Finding f : kAllFindings)
            rec.spec.level(f) = draw_severity(f, rng::combine(sk, 2, static_cast<std::uint64_t>(f)));
        {
            const double gate = rng::uniform01(rng::combine(sk, 3));
            rec.spec.calcification_burden =
                gate < 0.35 ? 0.0 : 0.1 + 0.9 * rng::uniform01(rng::combine(sk, 4));
        }
        rec.spec.pericardial_fat_fraction = 0.05 + 0.40 * rng::uniform01(rng::combine(sk, 5));
        // mild anatomical variation
        for (int a = 0; a < 3; ++a) {
            rec.spec.heart_center[a] += 6.0 * (rng::uniform01(rng::combine(sk, 6, static_cast<std::uint64_t>(a))) - 0.5);
            rec.spec.heart_axes[a] *= 0.95 + 0.1 * rng::uniform01(rng::combine(sk, 7, static_cast<std::uint64_t>(a)));
        }
        rec.spec.subject_id = rec.subject_id;

        rec.true_risk = true_risk(rec.spec, weights);
        rec.label_screening = rng::uniform01(rng::combine(sk, 8)) < rec.true_risk ? 1 : 0;
        rec.label_mortality =
            rec.label_screening == 1 &&
                    rng::uniform01(rng::combine(sk, 9)) <
                        rec.true_risk * weights.mortality_factor
                ? 1
                : 0;

        for (int scan = 0; scan < options.scans_per_subject; ++scan) {
            rec.scan_ids.push_back(rec.subject_id + "_s" + std::to_string(scan));
        }
        rec.spec.scan_id = rec.scan_ids.front();
        cohort.push_back(std::move(rec));
    }
    return cohort;
}

double bayes_optimal_auc(const std::vector<CohortRecord>& cohort, Task task) {
    std::vector<double> scores;
    std::vector<int> labels;
    for (const CohortRecord& r : cohort) {
        scores.push_back(r.true_risk);
        labels.push_back(task == Task::screening ? r.label_screening : r.label_mortality);
    }
    return auc(scores, labels);
}

std::vector<SubjectLabel> subject_labels(const std::vector<CohortRecord>& cohort) {
    std::vector<SubjectLabel> out;
    out.reserve(cohort.size());
    for (const CohortRecord& r : cohort)
        out.push_back({r.subject_id, r.label_screening, r.label_mortality});
    return out;
}

std::string cohort_manifest_csv(const std::vector<CohortRecord>& cohort,
                                const std::map<std::string, std::string>& volume_paths) {
    std::ostringstream ss;
    ss.precision(17);
    ss << "subject_id,scan_id,volume_path,label_screening,label_mortality,true_risk\n";
    for (const CohortRecord& r : cohort)
        for (const std::string& scan : r.scan_ids) {
            const auto it = volume_paths.find(scan);
            ss << r.subject_id << "," << scan << ","
               << (it == volume_paths.end() ? "" : it->second) << "," << r.label_screening
               << "," << r.label_mortality << "," << r.true_risk << "\n";
        }
    return ss.str();
}

std::vector<ManifestRow> parse_cohort_manifest(const std::string& csv_text) {
    std::vector<ManifestRow> rows;
    std::stringstream ss(csv_text);
    std::string line;
    if (!std::getline(ss, line)) throw ValidationError("empty cohort manifest");
    while (std::getline(ss, line)) {
        if (line.empty()) continue;
        std::stringstream ls(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (cells.size() != 6)
            throw ValidationError("manifest row needs 6 columns, got " +
                                  std::to_string(cells.size()));
        ManifestRow r;
        r.subject_id = cells[0];
        r.scan_id = cells[1];
        r.volume_path = cells[2];
        try {
            r.label_screening = std::stoi(cells[3]);
            r.label_mortality = std::stoi(cells[4]);
            r.true_risk = std::stod(cells[5]);
        } catch (const std::exception&) {
            throw ValidationError("non-numeric manifest cell in row for scan '" + r.scan_id +
                                  "'");
        }
        rows.push_back(std::move(r));
    }
    return rows;
}

std::string risk_weights_to_json(const RiskWeights& w) {
    json j;
    json sev;
    for (Finding f : kAllFindings) sev[to_string(f)] = w.severity_w[static_cast<int>(f)];
    j["severity_w"] = sev;
    j["calcification_w"] = w.calcification_w;
    j["fat_w"] = w.fat_w;
    j["indicator_w"] = w.indicator_w;
    j["bias"] = w.bias;
    j["mortality_factor"] = w.mortality_factor;
    return j.dump(2);
}

RiskWeights risk_weights_from_json(const std::string& text) {
    RiskWeights w;
    try {
        const json j = json::parse(text);
        for (Finding f : kAllFindings)
            w.severity_w[static_cast<int>(f)] = j.at("severity_w").at(to_string(f)).get<double>();
        w.calcification_w = j.at("calcification_w").get<double>();
        w.fat_w = j.at("fat_w").get<double>();
        if (j.contains("indicator_w"))
            w.indicator_w = j.at("indicator_w").get<std::map<std::string, double>>();
        w.bias = j.at("bias").get<double>();
        w.mortality_factor = j.value("mortality_factor", 0.5);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("bad risk weights JSON: ") + e.what());
    }
    validate_weights(w);
    return w;
}

}  // namespace cardiopulm
