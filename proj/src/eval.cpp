#include "cardiopulm/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "cardiopulm/errors.hpp"
#include "cardiopulm/findings.hpp"
#include "cardiopulm/rng.hpp"

namespace cardiopulm {

using nlohmann::json;

const char* to_string(Task t) { return t == Task::screening ? "screening" : "mortality"; }

Task task_from_string(const std::string& s) {
    if (s == "screening") return Task::screening;
    if (s == "mortality") return Task::mortality;
    throw ValidationError("unknown task '" + s + "' (want screening|mortality)");
}

namespace {

void require_both_classes(std::span<const int> labels) {
    bool pos = false, neg = false;
    for (int y : labels) (y ? pos : neg) = true;
    if (!pos || !neg)
        throw ValidationError("need both classes present (single-class input)");
}

// Largest-remainder apportionment of n into ratios.
std::array<std::size_t, 3> largest_remainder(std::size_t n,
                                             const std::array<double, 3>& ratios) {
    std::array<std::size_t, 3> sizes{};
    std::array<double, 3> exact{};
    std::size_t assigned = 0;
    for (int i = 0; i < 3; ++i) {
        exact[i] = ratios[i] * static_cast<double>(n);
        sizes[i] = static_cast<std::size_t>(std::floor(exact[i]));
        assigned += sizes[i];
    }
    std::array<int, 3> order = {0, 1, 2};
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        const double ra = exact[a] - std::floor(exact[a]);
        const double rb = exact[b] - std::floor(exact[b]);
        if (ra != rb) return ra > rb;
        return a < b;
    });
    for (int i = 0; assigned < n; ++i, ++assigned) sizes[order[static_cast<std::size_t>(i % 3)]] += 1;
    return sizes;
}

}  // namespace

SplitResult split_subjects(const std::vector<SubjectLabel>& subjects, std::uint64_t seed) {
    if (subjects.size() < 10)
        throw ValidationError("need at least 10 subjects to split 70/10/20");
    {
        std::set<std::string> ids;
        for (const SubjectLabel& s : subjects)
            if (!ids.insert(s.subject_id).second)
                throw ValidationError("duplicate subject id '" + s.subject_id + "'");
    }

    const std::array<double, 3> ratios = {0.7, 0.1, 0.2};
    const auto fold_sizes = largest_remainder(subjects.size(), ratios);

    // Strata: negatives, screening-only positives, mortality positives.
    std::array<std::vector<std::size_t>, 3> strata;
    for (std::size_t i = 0; i < subjects.size(); ++i) {
        const int s = subjects[i].label_mortality ? 2 : (subjects[i].label_screening ? 1 : 0);
        strata[static_cast<std::size_t>(s)].push_back(i);
    }
    for (std::size_t s = 0; s < 3; ++s) {
        auto& v = strata[s];
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(
                rng::below(rng::combine(seed, 0x57A7, s, i), i));
            std::swap(v[i - 1], v[j]);
        }
    }

    SplitResult out;
    std::array<std::size_t, 3> remaining = fold_sizes;
    std::array<std::vector<std::string>*, 3> folds = {&out.train, &out.val, &out.test};

    // Round-robin per stratum in fold-proportional order: each stratum is cut
    // with largest remainder, then adjusted to whatever capacity is left.
    for (std::size_t s = 0; s < 3; ++s) {
        const auto want = largest_remainder(strata[s].size(), ratios);
        std::array<std::size_t, 3> take{};
        for (int f = 0; f < 3; ++f) take[static_cast<std::size_t>(f)] = std::min(want[static_cast<std::size_t>(f)], remaining[static_cast<std::size_t>(f)]);
        std::size_t assigned = take[0] + take[1] + take[2];
        // distribute leftovers deterministically into folds with spare room
        for (int f = 0; assigned < strata[s].size(); f = (f + 1) % 3) {
            if (take[static_cast<std::size_t>(f)] < remaining[static_cast<std::size_t>(f)]) {
                take[static_cast<std::size_t>(f)] += 1;
                ++assigned;
            }
        }
        // a stratum with >= 3 members reaches every fold, so each fold keeps
        // both classes whenever the counts allow it
        if (strata[s].size() >= 3) {
            for (int f = 0; f < 3; ++f) {
                if (take[static_cast<std::size_t>(f)] > 0 || remaining[static_cast<std::size_t>(f)] == 0) continue;
                int donor = 0;
                for (int g = 1; g < 3; ++g)
                    if (take[static_cast<std::size_t>(g)] > take[static_cast<std::size_t>(donor)]) donor = g;
                if (take[static_cast<std::size_t>(donor)] > 1) {
                    take[static_cast<std::size_t>(donor)] -= 1;
                    take[static_cast<std::size_t>(f)] += 1;
                }
            }
        }
        std::size_t cursor = 0;
        for (int f = 0; f < 3; ++f)
            for (std::size_t i = 0; i < take[static_cast<std::size_t>(f)]; ++i) {
                folds[static_cast<std::size_t>(f)]->push_back(subjects[strata[s][cursor++]].subject_id);
                remaining[static_cast<std::size_t>(f)] -= 1;
            }
    }

    for (auto* f : folds) std::sort(f->begin(), f->end());
    return out;
}

double auc(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size())
        throw ValidationError("scores/labels length mismatch");
    require_both_classes(labels);

    // Average ranks over ties, then the Mann-Whitney identity.
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    double rank_sum_pos = 0;
    std::size_t n_pos = 0, n_neg = 0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        const double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
        for (std::size_t k = i; k < j; ++k)
            if (labels[order[k]] == 1) rank_sum_pos += avg_rank;
        i = j;
    }
    for (int y : labels) (y == 1 ? n_pos : n_neg) += 1;
    const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
    return (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn);
}

std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size())
        throw ValidationError("scores/labels length mismatch");
    require_both_classes(labels);

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    double n_pos = 0, n_neg = 0;
    for (int y : labels) (y == 1 ? n_pos : n_neg) += 1;

    std::vector<RocPoint> roc;
    roc.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
    double tp = 0, fp = 0;
    std::size_t i = 0;
    while (i < order.size()) {
        const double t = scores[order[i]];
        while (i < order.size() && scores[order[i]] == t) {
            if (labels[order[i]] == 1)
                tp += 1;
            else
                fp += 1;
            ++i;
        }
        roc.push_back({fp / n_neg, tp / n_pos, t});
    }
    return roc;
}

double auc_trapezoid(const std::vector<RocPoint>& roc) {
    double area = 0;
    for (std::size_t i = 1; i < roc.size(); ++i)
        area += (roc[i].fpr - roc[i - 1].fpr) * 0.5 * (roc[i].tpr + roc[i - 1].tpr);
    return area;
}

BootstrapResult bootstrap_ci(std::span<const double> scores, std::span<const int> labels,
                             std::span<const std::string> subject_ids, int n_resamples,
                             std::uint64_t seed) {
    if (scores.size() != labels.size() || scores.size() != subject_ids.size())
        throw ValidationError("scores/labels/subjects length mismatch");
    require_both_classes(labels);

    // Subject blocks keyed by id (sorted), so scan order never affects which
    // block a resample draw picks.
    std::map<std::string, std::vector<std::size_t>> block_of;
    for (std::size_t i = 0; i < subject_ids.size(); ++i)
        block_of[subject_ids[i]].push_back(i);
    std::vector<std::vector<std::size_t>> blocks;
    blocks.reserve(block_of.size());
    for (auto& [id, idx] : block_of) blocks.push_back(std::move(idx));
    const std::size_t n_subj = blocks.size();

    std::vector<double> replicas(static_cast<std::size_t>(n_resamples),
                                 std::numeric_limits<double>::quiet_NaN());
    const std::int64_t reps = n_resamples;
#pragma omp parallel for schedule(static)
    for (std::int64_t r = 0; r < reps; ++r) {
        const std::uint64_t rep_seed = rng::combine(seed, 0xB007, static_cast<std::uint64_t>(r));
        std::vector<double> s;
        std::vector<int> y;
        s.reserve(scores.size());
        y.reserve(scores.size());
        for (std::size_t d = 0; d < n_subj; ++d) {
            const std::size_t pick = static_cast<std::size_t>(
                rng::below(rng::combine(rep_seed, d), n_subj));
            for (std::size_t idx : blocks[pick]) {
                s.push_back(scores[idx]);
                y.push_back(labels[idx]);
            }
        }
        bool pos = false, neg = false;
        for (int yy : y) (yy ? pos : neg) = true;
        if (pos && neg) replicas[static_cast<std::size_t>(r)] = auc(s, y);
    }

    BootstrapResult out;
    out.resamples = n_resamples;
    std::vector<double> kept;
    kept.reserve(replicas.size());
    for (double v : replicas)
        if (std::isfinite(v)) kept.push_back(v);
    out.skipped = n_resamples - static_cast<int>(kept.size());
    if (out.skipped > n_resamples / 10)
        throw ValidationError("more than 10% of bootstrap resamples were single-class (" +
                              std::to_string(out.skipped) + "/" + std::to_string(n_resamples) +
                              ")");
    std::sort(kept.begin(), kept.end());
    const auto quantile = [&](double q) {
        const double pos = q * static_cast<double>(kept.size() - 1);
        const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
        const std::size_t hi = std::min(kept.size() - 1, lo + 1);
        const double frac = pos - static_cast<double>(lo);
        return kept[lo] * (1.0 - frac) + kept[hi] * frac;
    };
    out.lo = quantile(0.025);
    out.hi = quantile(0.975);
    out.median = quantile(0.5);
    return out;
}

EvalReport evaluate_subject_level(std::span<const FusionInput> test_inputs,
                                  std::span<const double> scan_scores, Task task,
                                  const std::string& variant_name, int n_resamples,
                                  std::uint64_t seed, SubjectAggregate aggregate) {
    std::vector<std::string> subjects;
    std::vector<double> scores;
    std::vector<int> labels;
    aggregate_by_subject(test_inputs, scan_scores, subjects, scores, labels, aggregate);

    EvalReport r;
    r.task = to_string(task);
    r.variant_name = variant_name;
    r.seed = seed;
    r.auc = auc(scores, labels);
    r.roc_points = roc_curve(scores, labels);
    const BootstrapResult ci = bootstrap_ci(scores, labels, subjects, n_resamples, seed);
    r.ci_lo = ci.lo;
    r.ci_hi = ci.hi;
    r.bootstrap_median = ci.median;
    r.n_resamples = ci.resamples;
    r.skipped_resamples = ci.skipped;
    r.point_outside_ci = r.auc < ci.lo - 0.02 || r.auc > ci.hi + 0.02;
    for (int y : labels) (y == 1 ? r.n_pos : r.n_neg) += 1;
    return r;
}

std::string report_to_json(const EvalReport& r) {
    json j;
    j["task"] = r.task;
    j["variant"] = r.variant_name;
    j["auc"] = r.auc;
    j["ci95"] = {r.ci_lo, r.ci_hi};
    j["bootstrap_median"] = r.bootstrap_median;
    j["point_outside_ci"] = r.point_outside_ci;
    j["n_pos"] = r.n_pos;
    j["n_neg"] = r.n_neg;
    j["seed"] = r.seed;
    j["n_resamples"] = r.n_resamples;
    j["skipped_resamples"] = r.skipped_resamples;
    json roc = json::array();
    for (const RocPoint& p : r.roc_points) {
        const double thr = std::isinf(p.threshold) ? 1e308 : p.threshold;
        roc.push_back({{"fpr", p.fpr}, {"tpr", p.tpr}, {"threshold", thr}});
    }
    j["roc_points"] = roc;
    return j.dump(2);
}

EvalReport report_from_json(const std::string& text) {
    EvalReport r;
    try {
        const json j = json::parse(text);
        r.task = j.at("task").get<std::string>();
        r.variant_name = j.at("variant").get<std::string>();
        r.auc = j.at("auc").get<double>();
        r.ci_lo = j.at("ci95").at(0).get<double>();
        r.ci_hi = j.at("ci95").at(1).get<double>();
        r.bootstrap_median = j.at("bootstrap_median").get<double>();
        r.point_outside_ci = j.at("point_outside_ci").get<bool>();
        r.n_pos = j.at("n_pos").get<int>();
        r.n_neg = j.at("n_neg").get<int>();
        r.seed = j.at("seed").get<std::uint64_t>();
        r.n_resamples = j.at("n_resamples").get<int>();
        r.skipped_resamples = j.at("skipped_resamples").get<int>();
        for (const json& p : j.at("roc_points"))
            r.roc_points.push_back({p.at("fpr").get<double>(), p.at("tpr").get<double>(),
                                    p.at("threshold").get<double>()});
    } catch (const json::exception& e) {
        throw ValidationError(std::string("bad EvalReport JSON: ") + e.what());
    }
    return r;
}

std::string roc_to_csv(const EvalReport& r) {
    std::ostringstream ss;
    ss.precision(17);
    ss << "fpr,tpr,threshold\n";
    for (const RocPoint& p : r.roc_points)
        ss << p.fpr << "," << p.tpr << "," << p.threshold << "\n";
    return ss.str();
}

std::string roc_to_svg(const std::vector<EvalReport>& reports, int size_px) {
    const int m = 40;  // margin
    const int plot = size_px - 2 * m;
    const auto X = [&](double fpr) { return m + fpr * plot; };
    const auto Y = [&](double tpr) { return m + (1.0 - tpr) * plot; };
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                   "#ff7f0e", "#8c564b"};

    std::ostringstream ss;
    ss << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size_px + 240
       << "\" height=\"" << size_px << "\">\n";
    ss << "<rect x=\"" << m << "\" y=\"" << m << "\" width=\"" << plot << "\" height=\""
       << plot << "\" fill=\"white\" stroke=\"black\"/>\n";
    ss << "<line x1=\"" << X(0) << "\" y1=\"" << Y(0) << "\" x2=\"" << X(1) << "\" y2=\""
       << Y(1) << "\" stroke=\"#999\" stroke-dasharray=\"4\"/>\n";
    for (std::size_t i = 0; i < reports.size(); ++i) {
        const char* color = colors[i % 6];
        ss << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (const RocPoint& p : reports[i].roc_points) ss << X(p.fpr) << "," << Y(p.tpr) << " ";
        ss << "\"/>\n";
        ss << "<text x=\"" << size_px - 30 << "\" y=\"" << m + 16 * (i + 1)
           << "\" fill=\"" << color << "\" font-size=\"12\">" << reports[i].variant_name
           << " (AUC " << std::fixed;
        ss.precision(3);
        ss << reports[i].auc << ")</text>\n";
        ss.unsetf(std::ios_base::floatfield);
        ss.precision(6);
    }
    ss << "<text x=\"" << m + plot / 2 - 60 << "\" y=\"" << size_px - 8
       << "\" font-size=\"12\">false positive rate</text>\n";
    ss << "<text x=\"12\" y=\"" << m + plot / 2
       << "\" font-size=\"12\" transform=\"rotate(-90 12 " << m + plot / 2
       << ")\">true positive rate</text>\n";
    ss << "</svg>\n";
    return ss.str();
}

const std::vector<std::string>& ablation_variants() {
    static const std::vector<std::string> v = {"lung-risk-only", "reasoning-only",
                                               "cardiac-only", "cardiac+lung",
                                               "cardiac+lung+findings",
                                               "cardiac+lung+reasoning"};
    return v;
}

BlockLayout variant_layout(const std::string& variant, int d_card, int d_reason, int d_lung) {
    BlockLayout l;
    if (variant == "lung-risk-only") {
        l.d_lung = d_lung;
    } else if (variant == "reasoning-only") {
        l.d_reason = d_reason;
    } else if (variant == "cardiac-only") {
        l.d_card = d_card;
    } else if (variant == "cardiac+lung") {
        l.d_card = d_card;
        l.d_lung = d_lung;
    } else if (variant == "cardiac+lung+findings") {
        l.d_card = d_card;
        l.d_lung = d_lung;
        l.d_findings = kFindingCount;
    } else if (variant == "cardiac+lung+reasoning") {
        l.d_card = d_card;
        l.d_reason = d_reason;
        l.d_lung = d_lung;
    } else {
        throw ValidationError("unknown variant '" + variant + "'");
    }
    return l;
}

std::vector<double> variant_features(const std::string& variant, const ScanFeatures& f) {
    std::vector<double> x;
    const auto append = [&](const std::vector<double>& v) {
        x.insert(x.end(), v.begin(), v.end());
    };
    if (variant == "lung-risk-only") {
        append(f.z_lung);
    } else if (variant == "reasoning-only") {
        append(f.z_reason);
    } else if (variant == "cardiac-only") {
        append(f.z_card);
    } else if (variant == "cardiac+lung") {
        append(f.z_card);
        append(f.z_lung);
    } else if (variant == "cardiac+lung+findings") {
        append(f.z_card);
        append(f.z_lung);
        append(f.finding_scores);
    } else if (variant == "cardiac+lung+reasoning") {
        append(f.z_card);
        append(f.z_reason);
        append(f.z_lung);
    } else {
        throw ValidationError("unknown variant '" + variant + "'");
    }
    return x;
}

std::vector<EvalReport> run_ablation(const std::vector<ScanFeatures>& features,
                                     const std::vector<SubjectLabel>& subjects, Task task,
                                     const AblationConfig& config,
                                     const std::string& kb_version) {
    if (features.empty()) throw UpstreamMissingError("no cached features for ablation");
    const int d_card = static_cast<int>(features.front().z_card.size());
    const int d_reason = static_cast<int>(features.front().z_reason.size());
    const int d_lung = static_cast<int>(features.front().z_lung.size());

    const SplitResult split = split_subjects(subjects, config.split_seed);
    const std::set<std::string> train_ids(split.train.begin(), split.train.end());
    const std::set<std::string> val_ids(split.val.begin(), split.val.end());
    const std::set<std::string> test_ids(split.test.begin(), split.test.end());

    std::vector<EvalReport> reports;
    for (const std::string& variant : ablation_variants()) {
        std::vector<FusionInput> train_set, val_set, test_set;
        for (const ScanFeatures& f : features) {
            FusionInput in;
            in.subject_id = f.subject_id;
            in.scan_id = f.scan_id;
            in.label = task == Task::screening ? f.label_screening : f.label_mortality;
            in.x = variant_features(variant, f);
            if (train_ids.count(f.subject_id))
                train_set.push_back(std::move(in));
            else if (val_ids.count(f.subject_id))
                val_set.push_back(std::move(in));
            else if (test_ids.count(f.subject_id))
                test_set.push_back(std::move(in));
        }
        const BlockLayout layout = variant_layout(variant, d_card, d_reason, d_lung);
        const TrainResult tr = train(train_set, val_set, config.train, layout, kb_version);
        const std::vector<double> scores = predict_batch(tr.params, test_set);
        reports.push_back(evaluate_subject_level(test_set, scores, task, variant,
                                                 config.n_resamples, config.train.seed));
    }
    return reports;
}

std::string ablation_table(const std::vector<EvalReport>& screening,
                           const std::vector<EvalReport>& mortality) {
    std::ostringstream ss;
    ss << "variant                      screening AUC [95% CI]      mortality AUC [95% CI]\n";
    ss << "---------------------------  --------------------------  --------------------------\n";
    const auto fmt = [](const EvalReport& r) {
        std::ostringstream s;
        s.precision(3);
        s << std::fixed << r.auc << " [" << r.ci_lo << ", " << r.ci_hi << "]";
        return s.str();
    };
    for (std::size_t i = 0; i < screening.size(); ++i) {
        ss << screening[i].variant_name;
        for (std::size_t pad = screening[i].variant_name.size(); pad < 29; ++pad) ss << ' ';
        const std::string sc = fmt(screening[i]);
        ss << sc;
        for (std::size_t pad = sc.size(); pad < 28; ++pad) ss << ' ';
        ss << (i < mortality.size() ? fmt(mortality[i]) : std::string("-")) << "\n";
    }
    return ss.str();
}

}  // namespace cardiopulm
