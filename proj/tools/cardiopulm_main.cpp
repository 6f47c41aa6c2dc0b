// Command-line front end: one subcommand per pipeline stage plus run-all.
// Exit codes: 0 success, 2 validation error, 3 missing upstream stage,
// 4 numeric failure.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <omp.h>

#include "cardiopulm/errors.hpp"
#include "cardiopulm/pipeline.hpp"
#include "cardiopulm/version.hpp"

using namespace cardiopulm;

namespace {

PipelineConfig load_config(const std::string& config_path) {
    if (config_path.empty()) return PipelineConfig{};
    std::ifstream in(config_path);
    if (!in) throw ValidationError("cannot open config file '" + config_path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return config_from_json(ss.str());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cardiopulm: cardiovascular risk from chest CT phantom cohorts"};
    app.set_version_flag("--version", kToolVersion);

    std::string config_path;
    std::string run_dir_override;
    std::string task_str = "screening";
    std::string variant_override;
    std::string scan_id;
    long long seed_override = -1;
    int workers = -1;

    app.add_option("--config", config_path, "pipeline config JSON");
    app.add_option("--run-dir", run_dir_override, "run directory (overrides config)");
    app.add_option("--seed", seed_override, "cohort seed (overrides config)");
    app.add_option("--workers", workers, "worker threads for per-scan stages");
    app.add_option("--task", task_str, "screening|mortality")
        ->check(CLI::IsMember({"screening", "mortality"}));
    app.add_option("--variant", variant_override, "model variant name");

    app.fallthrough();
    app.require_subcommand(1);
    auto* sc_simulate = app.add_subcommand("simulate", "generate the phantom cohort");
    auto* sc_preprocess = app.add_subcommand("preprocess", "clip + resample volumes");
    auto* sc_locate = app.add_subcommand("locate", "heart ROI per scan");
    auto* sc_findings = app.add_subcommand("findings", "score pulmonary findings");
    auto* sc_reason = app.add_subcommand("reason", "derive reasoning traces");
    auto* sc_lungrisk = app.add_subcommand("lungrisk", "lung-risk trajectories");
    auto* sc_features = app.add_subcommand("features", "cardiac feature extraction");
    auto* sc_train = app.add_subcommand("train", "train the fusion head");
    auto* sc_evaluate = app.add_subcommand("evaluate", "evaluate on the test fold");
    auto* sc_ablate = app.add_subcommand("ablate", "train + evaluate all variants");
    auto* sc_explain = app.add_subcommand("explain", "attribution outputs for one scan");
    sc_explain->add_option("scan", scan_id, "scan id")->required();
    auto* sc_runall = app.add_subcommand("run-all", "full chain on a fresh cohort");

    CLI11_PARSE(app, argc, argv);

    try {
        PipelineConfig cfg = load_config(config_path);
        if (!run_dir_override.empty()) cfg.run_dir = run_dir_override;
        if (seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(seed_override);
        if (workers >= 0) cfg.workers = workers;
        if (!variant_override.empty()) cfg.variant = variant_override;
        if (cfg.workers > 0) omp_set_num_threads(cfg.workers);
        const Task task = task_from_string(task_str);

        Pipeline pipe(cfg);
        write_run_manifest(cfg);

        if (sc_simulate->parsed()) pipe.simulate();
        if (sc_preprocess->parsed()) pipe.preprocess();
        if (sc_locate->parsed()) pipe.locate();
        if (sc_findings->parsed()) pipe.findings();
        if (sc_reason->parsed()) pipe.reason();
        if (sc_lungrisk->parsed()) pipe.lungrisk();
        if (sc_features->parsed()) pipe.features();
        if (sc_train->parsed()) pipe.train_stage(task, cfg.variant);
        if (sc_evaluate->parsed()) {
            const EvalReport r = pipe.evaluate_stage(task, cfg.variant);
            std::printf("%s %s: AUC %.4f [%.4f, %.4f] (n_pos %d, n_neg %d)\n",
                        r.task.c_str(), r.variant_name.c_str(), r.auc, r.ci_lo, r.ci_hi,
                        r.n_pos, r.n_neg);
        }
        if (sc_ablate->parsed()) {
            pipe.ablate();
            std::ifstream table(cfg.run_dir + "/eval/ablation.txt");
            std::cout << table.rdbuf();
        }
        if (sc_explain->parsed()) pipe.explain(scan_id);
        if (sc_runall->parsed()) {
            pipe.run_all();
            std::ifstream table(cfg.run_dir + "/eval/ablation.txt");
            std::cout << table.rdbuf();
        }
    } catch (const UpstreamMissingError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
