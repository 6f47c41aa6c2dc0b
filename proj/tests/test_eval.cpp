#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "cardiopulm/errors.hpp"
#include "cardiopulm/eval.hpp"
#include "cardiopulm/rng.hpp"

using namespace cardiopulm;

namespace {

// Literal pairwise concordance count; the oracle the rank-based production
// path is checked against.
double auc_pairwise(const std::vector<double>& scores, const std::vector<int>& labels) {
    double concordant = 0, tied = 0, pairs = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] != 1) continue;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (labels[j] != 0) continue;
            pairs += 1;
            if (scores[i] > scores[j])
                concordant += 1;
            else if (scores[i] == scores[j])
                tied += 1;
        }
    }
    return (concordant + 0.5 * tied) / pairs;
}

std::vector<SubjectLabel> synthetic_subjects(int n, double prevalence, std::uint64_t seed) {
    std::vector<SubjectLabel> out;
    for (int i = 0; i < n; ++i) {
        SubjectLabel s;
        s.subject_id = "p" + std::to_string(i);
        s.label_screening =
            rng::uniform01(rng::combine(seed, static_cast<std::uint64_t>(i))) < prevalence ? 1 : 0;
        s.label_mortality = s.label_screening &&
                            rng::uniform01(rng::combine(seed, static_cast<std::uint64_t>(i), 2)) < 0.2;
        out.push_back(s);
    }
    return out;
}

}  // namespace

TEST_SUITE("split_subjects") {
    TEST_CASE("100 subjects split 70/10/20") {
        const auto subjects = synthetic_subjects(100, 0.2, 1);
        const SplitResult s = split_subjects(subjects, 7);
        CHECK(s.train.size() == 70);
        CHECK(s.val.size() == 10);
        CHECK(s.test.size() == 20);
        std::set<std::string> all;
        for (const auto& id : s.train) all.insert(id);
        for (const auto& id : s.val) all.insert(id);
        for (const auto& id : s.test) all.insert(id);
        CHECK(all.size() == 100);  // disjoint partition
    }

    TEST_CASE("same seed gives an identical assignment") {
        const auto subjects = synthetic_subjects(137, 0.25, 2);
        const SplitResult a = split_subjects(subjects, 9);
        const SplitResult b = split_subjects(subjects, 9);
        CHECK(a.train == b.train);
        CHECK(a.val == b.val);
        CHECK(a.test == b.test);
        const SplitResult c = split_subjects(subjects, 10);
        CHECK(a.train != c.train);
    }

    TEST_CASE("each fold sees both screening classes when counts allow") {
        const auto subjects = synthetic_subjects(200, 0.2, 3);
        const SplitResult s = split_subjects(subjects, 4);
        const auto has_pos = [&](const std::vector<std::string>& fold) {
            int pos = 0, neg = 0;
            for (const auto& id : fold)
                for (const auto& sub : subjects)
                    if (sub.subject_id == id) (sub.label_screening ? pos : neg)++;
            return pos > 0 && neg > 0;
        };
        CHECK(has_pos(s.train));
        CHECK(has_pos(s.val));
        CHECK(has_pos(s.test));
    }

    TEST_CASE("tiny cohorts are rejected") {
        CHECK_THROWS_AS((void)split_subjects(synthetic_subjects(9, 0.3, 5), 1),
                        ValidationError);
    }
}

TEST_SUITE("auc") {
    TEST_CASE("hand example: pos {0.9, 0.8} vs neg {0.85, 0.7} is exactly 0.75") {
        const std::vector<double> scores = {0.9, 0.8, 0.85, 0.7};
        const std::vector<int> labels = {1, 1, 0, 0};
        CHECK(auc(scores, labels) == 0.75);
    }

    TEST_CASE("perfect separation is 1, all ties are 0.5, reversal is 0") {
        CHECK(auc(std::vector<double>{0.9, 0.8, 0.2, 0.1}, std::vector<int>{1, 1, 0, 0}) == 1.0);
        CHECK(auc(std::vector<double>{0.5, 0.5, 0.5, 0.5}, std::vector<int>{1, 1, 0, 0}) == 0.5);
        CHECK(auc(std::vector<double>{0.1, 0.2, 0.8, 0.9}, std::vector<int>{1, 1, 0, 0}) == 0.0);
    }

    TEST_CASE("single-class inputs are rejected") {
        CHECK_THROWS_AS((void)auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}),
                        ValidationError);
    }

    TEST_CASE("rank path matches the pairwise oracle and the trapezoid path") {
        for (std::uint64_t trial = 0; trial < 300; ++trial) {
            const int n = 5 + static_cast<int>(rng::below(rng::combine(trial, 1), 60));
            std::vector<double> scores(static_cast<std::size_t>(n));
            std::vector<int> labels(static_cast<std::size_t>(n));
            int pos = 0;
            for (int i = 0; i < n; ++i) {
                // quantized scores force plenty of ties
                scores[static_cast<std::size_t>(i)] =
                    std::floor(10.0 * rng::uniform01(rng::combine(trial, 2, static_cast<std::uint64_t>(i)))) / 10.0;
                labels[static_cast<std::size_t>(i)] =
                    rng::uniform01(rng::combine(trial, 3, static_cast<std::uint64_t>(i))) < 0.4 ? 1 : 0;
                pos += labels[static_cast<std::size_t>(i)];
            }
            if (pos == 0 || pos == n) continue;
            const double a = auc(scores, labels);
            CHECK(a == doctest::Approx(auc_pairwise(scores, labels)).epsilon(1e-12));
            CHECK(a == doctest::Approx(auc_trapezoid(roc_curve(scores, labels))).epsilon(1e-12));
        }
    }

    TEST_CASE("positive affine transforms leave the AUC unchanged") {
        for (std::uint64_t trial = 0; trial < 50; ++trial) {
            std::vector<double> scores(40);
            std::vector<int> labels(40);
            for (int i = 0; i < 40; ++i) {
                scores[static_cast<std::size_t>(i)] = rng::uniform01(rng::combine(trial, 5, static_cast<std::uint64_t>(i)));
                labels[static_cast<std::size_t>(i)] = i % 3 == 0;
            }
            std::vector<double> scaled = scores;
            for (double& s : scaled) s = 3.7 * s + 11.0;
            CHECK(auc(scores, labels) == auc(scaled, labels));
        }
    }
}

TEST_SUITE("roc_curve") {
    TEST_CASE("perfect classifier passes through (0,1)") {
        const auto roc = roc_curve(std::vector<double>{0.9, 0.8, 0.2, 0.1},
                                   std::vector<int>{1, 1, 0, 0});
        bool hits = false;
        for (const RocPoint& p : roc) hits |= p.fpr == 0.0 && p.tpr == 1.0;
        CHECK(hits);
        CHECK(roc.front().fpr == 0.0);
        CHECK(roc.front().tpr == 0.0);
        CHECK(roc.back().fpr == 1.0);
        CHECK(roc.back().tpr == 1.0);
    }

    TEST_CASE("reversed classifier passes through (1,0) with zero area") {
        const auto roc = roc_curve(std::vector<double>{0.1, 0.2, 0.8, 0.9},
                                   std::vector<int>{1, 1, 0, 0});
        bool hits = false;
        for (const RocPoint& p : roc) hits |= p.fpr == 1.0 && p.tpr == 0.0;
        CHECK(hits);
        CHECK(auc_trapezoid(roc) == 0.0);
    }

    TEST_CASE("curve is monotone with ties grouped at one threshold") {
        const std::vector<double> scores = {0.9, 0.5, 0.5, 0.5, 0.2, 0.1};
        const std::vector<int> labels = {1, 1, 0, 1, 0, 0};
        const auto roc = roc_curve(scores, labels);
        for (std::size_t i = 1; i < roc.size(); ++i) {
            CHECK(roc[i].fpr >= roc[i - 1].fpr);
            CHECK(roc[i].tpr >= roc[i - 1].tpr);
        }
        int at_half = 0;
        for (const RocPoint& p : roc) at_half += p.threshold == 0.5;
        CHECK(at_half == 1);
    }
}

TEST_SUITE("bootstrap_ci") {
    TEST_CASE("perfect classifier yields the degenerate [1,1] interval") {
        std::vector<double> scores;
        std::vector<int> labels;
        std::vector<std::string> subjects;
        for (int i = 0; i < 60; ++i) {
            scores.push_back(i < 20 ? 0.9 + 0.001 * i : 0.1 + 0.001 * i);
            labels.push_back(i < 20 ? 1 : 0);
            subjects.push_back("s" + std::to_string(i));
        }
        const BootstrapResult r = bootstrap_ci(scores, labels, subjects, 1000, 3);
        CHECK(r.lo == 1.0);
        CHECK(r.hi == 1.0);
        CHECK(r.resamples == 1000);
    }

    TEST_CASE("deterministic per seed, different across seeds") {
        std::vector<double> scores;
        std::vector<int> labels;
        std::vector<std::string> subjects;
        for (int i = 0; i < 80; ++i) {
            scores.push_back(rng::uniform01(rng::combine(12, static_cast<std::uint64_t>(i))));
            labels.push_back(i % 4 == 0);
            subjects.push_back("s" + std::to_string(i));
        }
        const BootstrapResult a = bootstrap_ci(scores, labels, subjects, 500, 5);
        const BootstrapResult b = bootstrap_ci(scores, labels, subjects, 500, 5);
        CHECK(a.lo == b.lo);
        CHECK(a.hi == b.hi);
        const BootstrapResult c = bootstrap_ci(scores, labels, subjects, 500, 6);
        CHECK((a.lo != c.lo || a.hi != c.hi));
    }

    TEST_CASE("interval brackets the median and stays in [0,1]") {
        std::vector<double> scores;
        std::vector<int> labels;
        std::vector<std::string> subjects;
        for (int i = 0; i < 100; ++i) {
            const double signal = i % 5 == 0 ? 0.3 : 0.0;
            scores.push_back(signal + rng::uniform01(rng::combine(77, static_cast<std::uint64_t>(i))));
            labels.push_back(i % 5 == 0);
            subjects.push_back("s" + std::to_string(i));
        }
        const BootstrapResult r = bootstrap_ci(scores, labels, subjects, 1000, 9);
        CHECK(r.lo >= 0.0);
        CHECK(r.lo <= r.median);
        CHECK(r.median <= r.hi);
        CHECK(r.hi <= 1.0);
    }

    TEST_CASE("an overwhelmingly single-class cohort errors on degenerate resamples") {
        std::vector<double> scores = {0.9, 0.1, 0.2, 0.3};
        std::vector<int> labels = {1, 0, 0, 0};
        std::vector<std::string> subjects = {"a", "b", "c", "d"};
        // with 4 subjects and one positive, ~31% of resamples drop the positive
        CHECK_THROWS_AS((void)bootstrap_ci(scores, labels, subjects, 1000, 2),
                        ValidationError);
    }
}

TEST_SUITE("subject-level evaluation") {
    TEST_CASE("scan order never changes subject-level results") {
        // 20 subjects, two scans each
        std::vector<FusionInput> inputs;
        std::vector<double> scores;
        for (int s = 0; s < 20; ++s) {
            for (int scan = 0; scan < 2; ++scan) {
                FusionInput in;
                in.subject_id = "p" + std::to_string(s);
                in.scan_id = in.subject_id + "_" + std::to_string(scan);
                in.label = s % 3 == 0;
                inputs.push_back(in);
                scores.push_back(rng::uniform01(
                    rng::combine(31, static_cast<std::uint64_t>(s), static_cast<std::uint64_t>(scan))));
            }
        }
        const EvalReport a =
            evaluate_subject_level(inputs, scores, Task::screening, "v", 200, 1);

        // reverse the scan order entirely
        std::vector<FusionInput> perm(inputs.rbegin(), inputs.rend());
        std::vector<double> perm_scores(scores.rbegin(), scores.rend());
        const EvalReport b =
            evaluate_subject_level(perm, perm_scores, Task::screening, "v", 200, 1);
        CHECK(a.auc == b.auc);
        CHECK(a.ci_lo == b.ci_lo);
        CHECK(a.ci_hi == b.ci_hi);
        CHECK(a.bootstrap_median == b.bootstrap_median);
        CHECK(a.n_pos == b.n_pos);
    }

    TEST_CASE("report JSON round trips") {
        std::vector<FusionInput> inputs(10);
        std::vector<double> scores(10);
        for (int i = 0; i < 10; ++i) {
            inputs[static_cast<std::size_t>(i)].subject_id = "s" + std::to_string(i);
            inputs[static_cast<std::size_t>(i)].label = i < 4;
            scores[static_cast<std::size_t>(i)] = 0.1 * i;
        }
        const EvalReport r = evaluate_subject_level(inputs, scores, Task::mortality, "x", 100, 2);
        const EvalReport back = report_from_json(report_to_json(r));
        CHECK(back.auc == r.auc);
        CHECK(back.ci_lo == r.ci_lo);
        CHECK(back.n_pos == r.n_pos);
        CHECK(back.variant_name == r.variant_name);
        CHECK(back.roc_points.size() == r.roc_points.size());
    }
}

TEST_SUITE("ablation plumbing") {
    TEST_CASE("the six comparison rows are fixed") {
        const auto& v = ablation_variants();
        REQUIRE(v.size() == 6);
        CHECK(v[0] == "lung-risk-only");
        CHECK(v[1] == "reasoning-only");
        CHECK(v[2] == "cardiac-only");
        CHECK(v[3] == "cardiac+lung");
        CHECK(v[4] == "cardiac+lung+findings");
        CHECK(v[5] == "cardiac+lung+reasoning");
    }

    TEST_CASE("variant layouts and feature slices line up") {
        ScanFeatures f;
        f.z_card.assign(32, 0.1);
        f.z_reason.assign(11, 0.2);
        f.z_lung.assign(6, 0.3);
        f.finding_scores.assign(5, 0.4);
        for (const std::string& variant : ablation_variants()) {
            const BlockLayout l = variant_layout(variant, 32, 11, 6);
            const auto x = variant_features(variant, f);
            CHECK(static_cast<int>(x.size()) == l.total());
        }
        CHECK(variant_layout("cardiac+lung+findings", 32, 11, 6).d_findings == 5);
        CHECK_THROWS_AS((void)variant_layout("bogus", 32, 11, 6), ValidationError);
    }
}
