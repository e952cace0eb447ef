#include <cstdio>
#include <filesystem>
#include <iostream>
#include <thread>

#include "CLI11.hpp"

#include "dividemix/config.hpp"
#include "dividemix/exports.hpp"
#include "dividemix/trainer.hpp"

namespace fs = std::filesystem;

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    std::string seed_str;
    double noise_ratio = -1.0;
    std::string noise_kind;
    std::vector<std::string> ablation;
};

void add_common_options(CLI::App* sub, CommonArgs& args) {
    sub->add_option("--config", args.config_path, "experiment config file (JSON)")->required();
    sub->add_option("--out", args.out_dir, "output directory");
    sub->add_option("--seed", args.seed_str, "network seeds as <u64>,<u64>");
    sub->add_option("--noise-ratio", args.noise_ratio, "override noise ratio");
    sub->add_option("--noise-kind", args.noise_kind, "override noise kind: sym-all|sym-excl|asym|none");
    sub->add_option("--ablation", args.ablation, "ablation flags (comma or space separated)")
        ->delimiter(',');
}

dmx::CliOverrides to_overrides(const CommonArgs& args) {
    dmx::CliOverrides o;
    if (!args.seed_str.empty()) {
        auto comma = args.seed_str.find(',');
        if (comma == std::string::npos)
            throw dmx::InvalidConfig("--seed: expected two comma-separated integers");
        try {
            o.seeds = {std::stoull(args.seed_str.substr(0, comma)),
                       std::stoull(args.seed_str.substr(comma + 1))};
        } catch (const std::exception&) {
            throw dmx::InvalidConfig("--seed: expected two comma-separated integers");
        }
    }
    if (!args.out_dir.empty()) o.out_dir = args.out_dir;
    if (args.noise_ratio >= 0.0) o.noise_ratio = args.noise_ratio;
    if (!args.noise_kind.empty()) o.noise_kind = args.noise_kind;
    o.ablation = args.ablation;
    return o;
}

dmx::TrainConfig prepare(const CommonArgs& args) {
    dmx::TrainConfig cfg = dmx::load_config(args.config_path);
    dmx::apply_overrides(cfg, to_overrides(args));
    if (cfg.out_dir.empty()) cfg.out_dir = (fs::path("runs") / cfg.run_name).string();
    cfg.validate();
    return cfg;
}

void print_summary(const dmx::TrainConfig& cfg, const dmx::TrainingHistory& hist) {
    dmx::Summary s = hist.summary();
    std::printf("%-24s best %.4f  last10 %.4f  (%d epochs, out: %s)\n", cfg.run_name.c_str(),
                s.best, s.last10, static_cast<int>(hist.epochs.size()), cfg.out_dir.c_str());
}

int run_single(dmx::TrainConfig cfg) {
    fs::create_directories(cfg.out_dir);
    dmx::write_resolved_config(cfg, (fs::path(cfg.out_dir) / "config.resolved.json").string());
    dmx::TrainingHistory hist = dmx::run_experiment(cfg);
    print_summary(cfg, hist);
    return 0;
}

int cmd_run(const CommonArgs& args) { return run_single(prepare(args)); }

int cmd_validate(const CommonArgs& args) {
    dmx::TrainConfig cfg = dmx::load_config(args.config_path);
    dmx::apply_overrides(cfg, to_overrides(args));
    cfg.validate();
    std::cout << dmx::resolved_config_string(cfg);
    std::fprintf(stderr, "config OK: %s\n", args.config_path.c_str());
    return 0;
}

int cmd_ablate(const CommonArgs& args) {
    dmx::TrainConfig base = prepare(args);
    struct Variant {
        const char* name;
        void (*apply)(dmx::AblationFlags&);
    };
    const Variant variants[] = {
        {"full", [](dmx::AblationFlags&) {}},
        {"single_model_test", [](dmx::AblationFlags& f) { f.single_model_test = true; }},
        {"no_co_training", [](dmx::AblationFlags& f) { f.no_co_training = true; }},
        {"no_label_refinement", [](dmx::AblationFlags& f) { f.no_label_refinement = true; }},
        {"no_augmentation", [](dmx::AblationFlags& f) { f.no_augmentation = true; }},
        {"plain_mixmatch", [](dmx::AblationFlags& f) { f.plain_mixmatch = true; }},
    };
    fs::path root(base.out_dir);
    for (const auto& v : variants) {
        dmx::TrainConfig cfg = base;
        v.apply(cfg.ablation);
        cfg.run_name = base.run_name + "-" + v.name;
        cfg.out_dir = (root / v.name).string();
        run_single(std::move(cfg));
    }
    return 0;
}

int cmd_sweep(const CommonArgs& args, const std::vector<double>& ratios, bool parallel) {
    dmx::TrainConfig base = prepare(args);
    fs::path root(base.out_dir);

    std::vector<dmx::TrainConfig> cfgs;
    for (double r : ratios) {
        dmx::TrainConfig cfg = base;
        cfg.noise.ratio = r;
        char tag[32];
        std::snprintf(tag, sizeof(tag), "r%02d", static_cast<int>(r * 100 + 0.5));
        cfg.run_name = base.run_name + "-" + tag;
        cfg.out_dir = (root / tag).string();
        cfg.validate();
        cfgs.push_back(std::move(cfg));
    }

    if (!parallel) {
        for (auto& cfg : cfgs) run_single(std::move(cfg));
        return 0;
    }
    std::vector<std::thread> pool;
    std::vector<int> status(cfgs.size(), 0);
    for (size_t i = 0; i < cfgs.size(); ++i)
        pool.emplace_back([&, i] {
            try {
                run_single(cfgs[i]);
            } catch (const std::exception& e) {
                std::fprintf(stderr, "sweep %s failed: %s\n", cfgs[i].run_name.c_str(), e.what());
                status[i] = 1;
            }
        });
    for (auto& t : pool) t.join();
    for (int s : status)
        if (s != 0) return 1;
    return 0;
}

int cmd_export_plots(const std::string& run_dir) {
    auto files = dmx::export_plots(run_dir);
    for (const auto& f : files) std::printf("wrote %s\n", f.c_str());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"DivideMix: noisy-label training via loss modeling + semi-supervised MixMatch"};
    app.require_subcommand(1);

    CommonArgs run_args, validate_args, ablate_args, sweep_args;
    std::vector<double> sweep_ratios{0.2, 0.5, 0.8, 0.9};
    bool sweep_parallel = false;
    std::string plots_run_dir;

    auto* run = app.add_subcommand("run", "run one experiment");
    add_common_options(run, run_args);

    auto* validate = app.add_subcommand("validate-config", "check a config without running");
    add_common_options(validate, validate_args);

    auto* ablate = app.add_subcommand("ablate", "run the ablation variant matrix");
    add_common_options(ablate, ablate_args);

    auto* sweep = app.add_subcommand("sweep", "run a noise-ratio grid");
    add_common_options(sweep, sweep_args);
    sweep->add_option("--ratios", sweep_ratios, "noise ratios to sweep")->delimiter(',');
    sweep->add_flag("--parallel", sweep_parallel, "run the grid concurrently");

    auto* plots = app.add_subcommand("export-plots", "convert run logs to plot-ready CSVs");
    plots->add_option("--run", plots_run_dir, "run directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return cmd_run(run_args);
        if (validate->parsed()) return cmd_validate(validate_args);
        if (ablate->parsed()) return cmd_ablate(ablate_args);
        if (sweep->parsed()) return cmd_sweep(sweep_args, sweep_ratios, sweep_parallel);
        if (plots->parsed()) return cmd_export_plots(plots_run_dir);
    } catch (const dmx::InvalidConfig& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const dmx::FormatError& e) {
        std::fprintf(stderr, "format error: %s\n", e.what());
        return 2;
    } catch (const dmx::NumericalError& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
