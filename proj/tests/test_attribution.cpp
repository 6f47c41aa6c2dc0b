#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include <json.hpp>

#include "cardiopulm/attribution.hpp"
#include "cardiopulm/errors.hpp"
#include "cardiopulm/heart_locator.hpp"
#include "cardiopulm/masks.hpp"
#include "cardiopulm/phantom.hpp"
#include "cardiopulm/rng.hpp"

using namespace cardiopulm;
using nlohmann::json;

namespace {

ModelParams linear_params(const BlockLayout& layout, std::uint64_t seed) {
    return init_params(layout, 0, seed, "kb-v1");
}

FusionInput random_input(const BlockLayout& layout, std::uint64_t seed) {
    FusionInput in;
    in.x.resize(static_cast<std::size_t>(layout.total()));
    for (std::size_t i = 0; i < in.x.size(); ++i)
        in.x[i] = rng::uniform01(rng::combine(seed, i));
    return in;
}

}  // namespace

TEST_SUITE("attribute_input") {
    TEST_CASE("linear head satisfies the completeness identity exactly") {
        BlockLayout layout;
        layout.d_card = 5;
        layout.d_lung = 3;
        const ModelParams p = linear_params(layout, 11);
        const FusionInput in = random_input(layout, 12);
        const Attribution a = attribute_input(p, in);
        CHECK_FALSE(a.first_order_only);
        double sum = 0;
        for (double v : a.values) sum += v;
        CHECK(sum + a.bias_term == doctest::Approx(a.logit).epsilon(1e-12));
        CHECK(a.bias_term == doctest::Approx(p.biases[0][0]).epsilon(1e-12));
        CHECK(a.cardiac_sum + a.lung_sum == doctest::Approx(sum).epsilon(1e-12));
    }

    TEST_CASE("zero inputs produce zero attributions") {
        BlockLayout layout;
        layout.d_card = 4;
        const ModelParams p = init_params(layout, 8, 13, "kb-v1");
        FusionInput in;
        in.x.assign(4, 0.0);
        const Attribution a = attribute_input(p, in);
        for (double v : a.values) CHECK(v == 0.0);
        CHECK(a.first_order_only);  // hidden layer present
    }

    TEST_CASE("zeroing a small input moves the logit by its attribution, first order") {
        BlockLayout layout;
        layout.d_card = 6;
        const ModelParams p = init_params(layout, 16, 17, "kb-v1");
        FusionInput in = random_input(layout, 18);
        in.x[2] = 0.01;  // small value: first-order regime
        const Attribution a = attribute_input(p, in);

        FusionInput zeroed = in;
        zeroed.x[2] = 0.0;
        std::vector<double> g;
        const double logit_full = logit_with_input_gradient(p, in.x, g);
        const double logit_zeroed = logit_with_input_gradient(p, zeroed.x, g);
        CHECK(std::fabs(a.values[2] - (logit_full - logit_zeroed)) <= 1e-3);
    }

    TEST_CASE("dimension mismatches are rejected") {
        BlockLayout layout;
        layout.d_card = 4;
        const ModelParams p = linear_params(layout, 19);
        FusionInput in;
        in.x.assign(3, 0.5);
        CHECK_THROWS_AS((void)attribute_input(p, in), ValidationError);
    }
}

TEST_SUITE("project_cardiac_attribution") {
    TEST_CASE("attribution mass lands exactly on channel supports and is conserved") {
        PhantomSpec spec = default_phantom_spec(401);
        spec.calcification_burden = 0.6;
        spec.pericardial_fat_fraction = 0.3;
        const CtVolume v = clip_hu(generate_phantom(spec));
        const RoiResult roi = locate_heart_roi(v, 96);
        const CtVolume cropped = crop_roi(v, roi.box);
        const CardiacFeatureVector f = extract_cardiac_features(cropped);

        BlockLayout layout;
        layout.d_card = kCardiacChannels;
        Attribution a;
        a.layout = layout;
        a.values.assign(kCardiacChannels, 0.0);
        a.values[0] = 2.0;  // all mass on the calcification channel

        const std::vector<double> heat = project_cardiac_attribution(a, f, cropped);
        double total = 0;
        std::size_t nonzero = 0;
        for (double h : heat) {
            total += h;
            nonzero += h != 0.0;
        }
        CHECK(nonzero == f.calcified_voxels.size());
        CHECK(total == doctest::Approx(2.0).epsilon(1e-9));
        for (std::uint32_t idx : f.calcified_voxels) CHECK(heat[idx] != 0.0);
        const CtVolume overlay = heat_to_volume(heat, cropped);
        CHECK(overlay.dims == cropped.dims);
    }

    TEST_CASE("zero attribution projects to a zero heat volume") {
        const CtVolume roi = make_volume({16, 16, 16}, {1.5, 1.5, 1.5}, 40.0f,
                                         IntensityState::clipped_hu);
        const CardiacFeatureVector f = extract_cardiac_features(roi);
        BlockLayout layout;
        layout.d_card = kCardiacChannels;
        Attribution a;
        a.layout = layout;
        a.values.assign(kCardiacChannels, 0.0);
        const std::vector<double> heat = project_cardiac_attribution(a, f, roi);
        for (double h : heat) CHECK(h == 0.0);
    }

    TEST_CASE("multi-channel projection conserves the projected sum") {
        PhantomSpec spec = default_phantom_spec(402);
        spec.pericardial_fat_fraction = 0.4;
        spec.calcification_burden = 0.3;
        const CtVolume v = clip_hu(generate_phantom(spec));
        const CtVolume cropped = crop_roi(v, locate_heart_roi(v, 96).box);
        const CardiacFeatureVector f = extract_cardiac_features(cropped);

        BlockLayout layout;
        layout.d_card = kCardiacChannels;
        Attribution a;
        a.layout = layout;
        a.values.assign(kCardiacChannels, 0.0);
        double projected = 0;
        for (int c = 0; c < kCardiacChannels; ++c) {
            a.values[static_cast<std::size_t>(c)] = 0.01 * (c + 1);
            if (!channel_support(f, c, cropped).empty())
                projected += a.values[static_cast<std::size_t>(c)];
        }
        const std::vector<double> heat = project_cardiac_attribution(a, f, cropped);
        double total = 0;
        for (double h : heat) total += h;
        CHECK(total == doctest::Approx(projected).epsilon(1e-9));
    }
}

TEST_SUITE("attribute_indicators") {
    TEST_CASE("top mechanisms come only from active chains") {
        const KnowledgeGraph& kb = default_knowledge_base();
        const FindingSet fs = filter_findings({{Finding::opacity, 0.9},
                                               {Finding::pleural_effusion, 0.8},
                                               {Finding::fibrosis, 0.7}});
        const ReasoningTrace trace = reason(fs, kb);

        BlockLayout layout;
        layout.d_card = 2;
        layout.d_reason = kb.d_reason();
        ModelParams p = linear_params(layout, 21);
        FusionInput in;
        in.x = {0.5, 0.5};
        in.x.insert(in.x.end(), trace.indicator_vector.begin(), trace.indicator_vector.end());
        const Attribution a = attribute_input(p, in);

        const json out = json::parse(attribute_indicators(a, trace, kb, 5));
        CHECK(out.at("rationale") == render_rationale(trace));
        for (const json& m : out.at("mechanisms")) {
            const int idx = kb.indicator_index(m.at("name").get<std::string>());
            REQUIRE(idx >= 0);
            if (m.at("attribution").get<double>() != 0.0)
                CHECK(trace.indicator_vector[static_cast<std::size_t>(idx)] > 0.0);
        }
    }

    TEST_CASE("inactive indicators attribute exactly zero") {
        const KnowledgeGraph& kb = default_knowledge_base();
        const FindingSet fs = filter_findings({{Finding::opacity, 0.9}});
        const ReasoningTrace trace = reason(fs, kb);
        BlockLayout layout;
        layout.d_reason = kb.d_reason();
        const ModelParams p = linear_params(layout, 23);
        FusionInput in;
        in.x = trace.indicator_vector;
        const Attribution a = attribute_input(p, in);
        for (int i = 0; i < kb.d_reason(); ++i)
            if (trace.indicator_vector[static_cast<std::size_t>(i)] == 0.0)
                CHECK(a.values[static_cast<std::size_t>(i)] == 0.0);
    }

    TEST_CASE("KB version mismatches are rejected") {
        const KnowledgeGraph& kb = default_knowledge_base();
        const FindingSet fs = filter_findings({{Finding::opacity, 0.9}});
        ReasoningTrace trace = reason(fs, kb);
        trace.kb_version = "kb-v0";
        BlockLayout layout;
        layout.d_reason = kb.d_reason();
        const ModelParams p = linear_params(layout, 25);
        FusionInput in;
        in.x = trace.indicator_vector;
        const Attribution a = attribute_input(p, in);
        CHECK_THROWS_AS((void)attribute_indicators(a, trace, kb, 3), ValidationError);
    }
}
