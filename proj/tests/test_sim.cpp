#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "cardiopulm/cohort.hpp"
#include "cardiopulm/errors.hpp"
#include "cardiopulm/kernels.hpp"
#include "cardiopulm/masks.hpp"
#include "cardiopulm/phantom.hpp"
#include "cardiopulm/rng.hpp"

using namespace cardiopulm;

namespace {

double lung_fraction_below(const CtVolume& v, float threshold) {
    const MaskVolume body = body_mask(v);
    const auto [left, right] = lung_mask(v, body);
    std::size_t lung = 0, low = 0;
    for (std::size_t i = 0; i < v.voxels.size(); ++i) {
        const bool in_lung = left.data[i] || right.data[i];
        if (!in_lung) continue;
        ++lung;
        if (v.voxels[i] < threshold) ++low;
    }
    return static_cast<double>(low) / static_cast<double>(lung);
}

}  // namespace

TEST_SUITE("phantom generator") {
    TEST_CASE("same spec twice is bit-identical") {
        const PhantomSpec spec = [&] {
            PhantomSpec s = default_phantom_spec(77);
            s.level(Finding::emphysema) = 0.4;
            s.level(Finding::opacity) = 0.6;
            s.calcification_burden = 0.5;
            s.pericardial_fat_fraction = 0.25;
            return s;
        }();
        const CtVolume a = generate_phantom(spec);
        const CtVolume b = generate_phantom(spec);
        CHECK(a.voxels == b.voxels);
    }

    TEST_CASE("clean lungs have a negligible low-attenuation fraction") {
        const CtVolume v = generate_phantom(default_phantom_spec(3));
        CHECK(lung_fraction_below(v, -950.0f) < 0.005);
    }

    TEST_CASE("emphysema severity strictly raises the low-attenuation fraction") {
        PhantomSpec lo = default_phantom_spec(9);
        lo.level(Finding::emphysema) = 0.2;
        PhantomSpec hi = lo;
        hi.level(Finding::emphysema) = 0.8;
        CHECK(lung_fraction_below(generate_phantom(hi), -950.0f) >
              lung_fraction_below(generate_phantom(lo), -950.0f));
    }

    TEST_CASE("signature monotonicity across the severity grid") {
        // every severity knob raises its signature statistic over 5 levels
        const std::array<double, 5> levels = {0.0, 0.25, 0.5, 0.75, 1.0};
        for (Finding f : kAllFindings) {
            for (std::uint64_t seed : {11ull, 12ull}) {
                double prev = -1.0;
                for (double level : levels) {
                    PhantomSpec spec = default_phantom_spec(seed);
                    spec.level(f) = level;
                    const CtVolume v = generate_phantom(spec);
                    const MaskVolume body = body_mask(v);
                    const auto [left, right] = lung_mask(v, body);
                    const SignatureStats st = measure_signatures(v, left, right);
                    double stat = 0;
                    switch (f) {
                        case Finding::opacity: stat = st.opacity_mid_fraction; break;
                        case Finding::pleural_effusion: stat = st.effusion_layer; break;
                        case Finding::fibrosis: stat = st.fibrosis_peripheral; break;
                        case Finding::emphysema: stat = st.emphysema_low_attenuation; break;
                        case Finding::nodule: stat = st.nodule_count; break;
                    }
                    CHECK(stat >= prev);
                    prev = stat;
                }
            }
        }
    }

    TEST_CASE("calcification burden raises the > 300 HU voxel count in the heart shell") {
        PhantomSpec lo = default_phantom_spec(21);
        lo.calcification_burden = 0.2;
        PhantomSpec hi = lo;
        hi.calcification_burden = 0.8;
        const auto count_calc = [](const CtVolume& v) {
            std::size_t c = 0;
            for (float x : v.voxels) c += x > 300.0f;
            return c;
        };
        CHECK(count_calc(generate_phantom(hi)) > count_calc(generate_phantom(lo)));
    }

    TEST_CASE("invalid specs are rejected") {
        PhantomSpec s = default_phantom_spec(1);
        s.level(Finding::opacity) = 1.5;
        CHECK_THROWS_AS((void)generate_phantom(s), ValidationError);
        s = default_phantom_spec(1);
        s.heart_center = {4.0, 4.0, 4.0};  // ellipsoid pokes outside
        CHECK_THROWS_AS((void)generate_phantom(s), ValidationError);
        s = default_phantom_spec(1);
        s.pericardial_fat_fraction = -0.1;
        CHECK_THROWS_AS((void)generate_phantom(s), ValidationError);
    }

    TEST_CASE("spec JSON round trip") {
        PhantomSpec s = default_phantom_spec(123);
        s.level(Finding::fibrosis) = 0.45;
        s.calcification_burden = 0.7;
        s.subject_id = "sub00042";
        s.scan_id = "sub00042_s1";
        const PhantomSpec r = phantom_spec_from_json(phantom_spec_to_json(s));
        CHECK(r.seed == s.seed);
        CHECK(r.level(Finding::fibrosis) == s.level(Finding::fibrosis));
        CHECK(r.heart_center == s.heart_center);
        CHECK(r.scan_id == s.scan_id);
    }
}

TEST_SUITE("cohort sampling") {
    TEST_CASE("screening prevalence lands in the target band") {
        const auto cohort = sample_cohort(1000, 5, default_risk_weights());
        double pos = 0;
        for (const CohortRecord& r : cohort) pos += r.label_screening;
        const double prevalence = pos / static_cast<double>(cohort.size());
        CHECK(prevalence >= 0.15);
        CHECK(prevalence <= 0.25);
    }

    TEST_CASE("mortality positives are a subset of screening positives") {
        const auto cohort = sample_cohort(1000, 6, default_risk_weights());
        for (const CohortRecord& r : cohort)
            if (r.label_mortality == 1) CHECK(r.label_screening == 1);
    }

    TEST_CASE("same seed reproduces identical labels and risks") {
        const auto a = sample_cohort(200, 9, default_risk_weights());
        const auto b = sample_cohort(200, 9, default_risk_weights());
        REQUIRE(a.size() == b.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(a[i].label_screening == b[i].label_screening);
            CHECK(a[i].label_mortality == b[i].label_mortality);
            CHECK(a[i].true_risk == b[i].true_risk);
        }
    }

    TEST_CASE("degenerate all-zero weights are rejected") {
        RiskWeights w;  // everything zero
        CHECK_THROWS_AS((void)sample_cohort(100, 1, w), ValidationError);
    }

    TEST_CASE("true risk stays in (0,1) and subject ids are unique") {
        const auto cohort = sample_cohort(300, 8, default_risk_weights());
        std::set<std::string> ids;
        for (const CohortRecord& r : cohort) {
            CHECK(r.true_risk > 0.0);
            CHECK(r.true_risk < 1.0);
            CHECK(ids.insert(r.subject_id).second);
        }
    }

    TEST_CASE("risk weights JSON round trip") {
        const RiskWeights w = default_risk_weights();
        const RiskWeights r = risk_weights_from_json(risk_weights_to_json(w));
        CHECK(r.bias == w.bias);
        CHECK(r.calcification_w == w.calcification_w);
        CHECK(r.indicator_w == w.indicator_w);
    }

    TEST_CASE("manifest CSV round trip") {
        const auto cohort = sample_cohort(12, 4, default_risk_weights());
        std::map<std::string, std::string> paths;
        for (const auto& r : cohort) paths[r.scan_ids[0]] = "volumes/" + r.scan_ids[0] + ".nii";
        const auto rows = parse_cohort_manifest(cohort_manifest_csv(cohort, paths));
        REQUIRE(rows.size() == cohort.size());
        CHECK(rows[3].subject_id == cohort[3].subject_id);
        CHECK(rows[3].label_screening == cohort[3].label_screening);
        CHECK(rows[3].true_risk == doctest::Approx(cohort[3].true_risk).epsilon(1e-12));
    }
}

TEST_SUITE("bayes optimal auc") {
    TEST_CASE("uninformative risk scores give AUC near one half") {
        // force constant risk: labels become independent coin flips
        auto cohort = sample_cohort(1000, 13, default_risk_weights());
        for (std::size_t i = 0; i < cohort.size(); ++i) {
            cohort[i].true_risk = 0.5;
            cohort[i].label_screening = (rng::uniform01(rng::combine(1234, i)) < 0.5) ? 1 : 0;
            cohort[i].label_mortality = 0;
        }
        const double a = bayes_optimal_auc(cohort, Task::screening);
        CHECK(a > 0.45);
        CHECK(a < 0.55);
    }

    TEST_CASE("perfectly separated risks give AUC near one") {
        auto cohort = sample_cohort(600, 14, default_risk_weights());
        for (auto& r : cohort) r.true_risk = r.label_screening ? 0.99 : 0.01;
        CHECK(bayes_optimal_auc(cohort, Task::screening) >= 0.98);
    }

    TEST_CASE("single-class cohort is an error") {
        auto cohort = sample_cohort(50, 15, default_risk_weights());
        for (auto& r : cohort) {
            r.label_screening = 0;
            r.label_mortality = 0;
        }
        CHECK_THROWS_AS((void)bayes_optimal_auc(cohort, Task::screening), ValidationError);
    }
}
