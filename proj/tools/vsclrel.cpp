// Command-line front end: configuration-driven FEM validation, surrogate
// training, reliability estimation and sensitivity reporting.
//
// Exit codes: 0 ok, 2 config error, 3 numerical failure, 4 non-convergence.

#include <CLI11.hpp>
#include <cstdio>

#include "vscl/study.hpp"

using namespace vscl;

namespace {

struct CommonOpts {
    std::string config_path;
    std::string out_dir;
    std::string cache_dir;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int threads = 1;
};

void add_common(CLI::App* cmd, CommonOpts& o, bool needs_config = true) {
    auto* copt = cmd->add_option("--config", o.config_path, "study configuration file");
    if (needs_config) copt->required();
    cmd->add_option("--seed", o.seed, "override the study seed")->each([&](const std::string&) {
        o.seed_set = true;
    });
    cmd->add_option("--threads", o.threads, "worker threads for FEM evaluations");
    cmd->add_option("--out", o.out_dir, "output directory (overrides config)");
    cmd->add_option("--cache", o.cache_dir, "cache directory (overrides config)");
}

StudyConfig configure(const CommonOpts& o) {
    StudyConfig cfg = load_config(o.config_path);
    if (o.seed_set) cfg.seed = o.seed;
    if (!o.out_dir.empty()) cfg.out_dir = o.out_dir;
    if (!o.cache_dir.empty()) cfg.cache_dir = o.cache_dir;
    return cfg;
}

RunRecord make_record(const StudyConfig& cfg) {
    RunRecord rec;
    rec.config_digest = study_digest(cfg);
    rec.seed = cfg.seed;
    return rec;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"reliability and sensitivity analysis of variable-stiffness composite plates"};
    app.require_subcommand(1);

    CommonOpts o_validate, o_train, o_rel, o_sens;
    std::string rel_method;
    std::string report_dir;

    auto* c_validate = app.add_subcommand("validate-fem", "mesh-refinement frequency study");
    add_common(c_validate, o_validate);

    auto* c_train = app.add_subcommand("train", "sample, evaluate and train the surrogate");
    add_common(c_train, o_train);

    auto* c_rel = app.add_subcommand("reliability", "failure-probability estimation");
    add_common(c_rel, o_rel);
    c_rel->add_option("method", rel_method, "form|sorm|mcs|mcis|adaptive")->required();

    auto* c_sens = app.add_subcommand("sensitivity", "Garson and total-effect indices");
    add_common(c_sens, o_sens);

    auto* c_report = app.add_subcommand("report", "summarize artifacts of a study directory");
    c_report->add_option("--out", report_dir, "study output directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        const auto t0 = std::chrono::steady_clock::now();
        if (c_validate->parsed()) {
            StudyConfig cfg = configure(o_validate);
            RunRecord rec = make_record(cfg);
            auto rows = run_validate_fem(cfg, rec, o_validate.threads);
            for (const auto& r : rows) {
                std::printf("mesh %2dx%-2d:", r.nx, r.ny);
                for (double w : r.freqs) std::printf(" %10.2f", w);
                std::printf("  (%.2f s)\n", r.seconds);
            }
            rec.wall_seconds =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            rec.write(cfg.out_dir);
        } else if (c_train->parsed()) {
            StudyConfig cfg = configure(o_train);
            RunRecord rec = make_record(cfg);
            auto rows = run_train(cfg, rec, o_train.threads);
            for (const auto& r : rows)
                std::printf("n=%d  test mse %.3e  (%.1f s, %ld solves, %ld cached)\n",
                            r.n_samples, r.mse_test, r.seconds, r.fem_solves, r.cache_hits);
            rec.wall_seconds =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            rec.write(cfg.out_dir);
        } else if (c_rel->parsed()) {
            StudyConfig cfg = configure(o_rel);
            const MethodKind kind = method_kind_from(rel_method);
            RunRecord rec = make_record(cfg);
            auto run = run_reliability(cfg, kind, rec, o_rel.threads);
            for (const auto& r : run.results)
                std::printf("%-8s pf = %.6g  beta = %.4f  std = %.3g\n", method_name(r.method),
                            r.pf, r.beta, r.estimator_std);
            rec.wall_seconds =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            rec.write(cfg.out_dir);
        } else if (c_sens->parsed()) {
            StudyConfig cfg = configure(o_sens);
            RunRecord rec = make_record(cfg);
            auto run = run_sensitivity(cfg, rec);
            std::printf("garson (grouped):\n");
            for (size_t i = 0; i < run.garson_grouped.names.size(); ++i)
                std::printf("  %-12s %.4f\n", run.garson_grouped.names[i].c_str(),
                            run.garson_grouped.index[i]);
            std::printf("total effect (grouped, mcs):\n");
            for (size_t i = 0; i < run.total_mcs_grouped.names.size(); ++i)
                std::printf("  %-12s %.4f\n", run.total_mcs_grouped.names[i].c_str(),
                            run.total_mcs_grouped.index[i]);
            rec.wall_seconds =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            rec.write(cfg.out_dir);
        } else if (c_report->parsed()) {
            std::fputs(run_report(report_dir).c_str(), stdout);
        }
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error class=config msg=\"%s\"\n", e.what());
        return 2;
    } catch (const SurrogateBindingError& e) {
        std::fprintf(stderr, "error class=config msg=\"%s\"\n", e.what());
        return 2;
    } catch (const SurrogateFormatError& e) {
        std::fprintf(stderr, "error class=config msg=\"%s\"\n", e.what());
        return 2;
    } catch (const NonConvergenceError& e) {
        std::fprintf(stderr, "error class=nonconvergence msg=\"%s\"\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error class=numerical msg=\"%s\"\n", e.what());
        return 3;
    }
    return 0;
}
