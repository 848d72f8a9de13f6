#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gmeasure/parallel.hpp"
#include "gmeasure/pipeline.hpp"

namespace fs = std::filesystem;
using namespace gmeasure;

namespace {

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

struct CommonOpts {
    std::uint64_t seed = 0;
    int workers = 0;  // 0 = available parallelism
    std::string out = "report.json";
    bool csv = false;
    double nu = 0.01;
    int noise_samples = 16;
    int margin_steps = 40;
    int margin_restarts = 3;
    int pm_iters = 200;
    double pm_tol = 1e-5;
    int subsample = 256;
    int max_cond_size = 2;

    MeasureConfig to_measure_config() const {
        MeasureConfig cfg;
        cfg.noise.nu = nu;
        cfg.noise.num_noise_samples = noise_samples;
        cfg.margin.max_steps = margin_steps;
        cfg.margin.num_restarts = margin_restarts;
        cfg.power.max_iters = pm_iters;
        cfg.power.rel_tolerance = pm_tol;
        cfg.aggregate.subsample = subsample;
        cfg.workers = workers > 0 ? workers : default_workers();
        cfg.reseed(seed);
        return cfg;
    }
};

void add_common(CLI::App* cmd, CommonOpts& o, bool need_seed) {
    auto* seed_opt = cmd->add_option("--seed", o.seed, "global RNG seed");
    if (need_seed) seed_opt->required();
    cmd->add_option("--workers", o.workers, "worker threads (0 = all cores)");
    cmd->add_option("--out", o.out, "output report path");
    cmd->add_flag("--csv", o.csv, "emit a flat CSV table instead of JSON");
    cmd->add_option("--nu", o.nu, "noise variance ratio");
    cmd->add_option("--noise-samples", o.noise_samples, "Monte Carlo draws per (example, layer)");
    cmd->add_option("--margin-steps", o.margin_steps, "ascent steps per margin-solver restart");
    cmd->add_option("--margin-restarts", o.margin_restarts, "margin-solver restarts");
    cmd->add_option("--pm-iters", o.pm_iters, "power method iteration cap");
    cmd->add_option("--pm-tol", o.pm_tol, "power method relative tolerance");
    cmd->add_option("--subsample", o.subsample, "margin measure subsample size");
    cmd->add_option("--max-cond-size", o.max_cond_size, "largest conditioning subset");
}

ZooBuildConfig make_build_config(std::uint64_t seed, int workers, int n_train, int epochs) {
    ZooBuildConfig cfg;
    cfg.task.seed = seed;
    cfg.task.n_train = n_train;
    cfg.task.n_test = 2 * n_train;
    cfg.epochs = epochs;
    cfg.workers = workers;
    return cfg;
}

int run_measure_cmd(const std::string& model_path, const std::string& data_path,
                    const std::vector<std::string>& measures, const CommonOpts& o) {
    for (const auto& m : measures)
        if (!is_measure_name(m)) {
            std::cerr << "error: unknown measure '" << m << "'\n";
            return 1;
        }
    Network net = load_model(model_path);
    LabeledDataset data = load_dataset(data_path);
    MeasureConfig cfg = o.to_measure_config();
    auto outcomes = compute_measures(net, data, measures, cfg);
    int failures = write_measure_report(outcomes, cfg, o.out, o.csv);
    for (const auto& oc : outcomes) {
        if (oc.ok)
            std::printf("%-40s %.6g  (%.2fs)\n", oc.name.c_str(), oc.value, oc.wall_time_s);
        else
            std::printf("%-40s FAILED: %s\n", oc.name.c_str(), oc.error.c_str());
    }
    return failures == 0 ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"generalization-measure engine: compute and score complexity measures "
                 "for trained feed-forward networks"};
    app.require_subcommand(1);

    CommonOpts gen_o, meas_o, score_o, all_o;
    std::string gen_dir = "zoo";
    int gen_ntrain = 256, gen_epochs = 3000;
    auto* gen = app.add_subcommand("gen-zoo", "train a synthetic model zoo");
    add_common(gen, gen_o, /*need_seed=*/true);
    gen->add_option("--zoo", gen_dir, "zoo output directory");
    gen->add_option("--n-train", gen_ntrain, "training examples per task");
    gen->add_option("--epochs", gen_epochs, "epoch budget per model");

    std::string meas_model, meas_data, meas_list;
    auto* meas = app.add_subcommand("measure", "compute measures for one model");
    add_common(meas, meas_o, /*need_seed=*/true);
    meas->add_option("--model", meas_model, "model file")->required();
    meas->add_option("--data", meas_data, "dataset file")->required();
    meas->add_option("--measures", meas_list, "comma-separated measure names (default: all)");

    std::string score_zoo, score_list;
    auto* score = app.add_subcommand("score", "score measures recorded in a zoo manifest");
    add_common(score, score_o, /*need_seed=*/false);
    score->add_option("--zoo", score_zoo, "zoo manifest path")->required();
    score->add_option("--measures", score_list, "comma-separated measure names (default: all)");

    std::string all_dir = "zoo";
    std::string all_list;
    int all_ntrain = 256, all_epochs = 3000, all_meas_sub = 128;
    auto* all = app.add_subcommand("all", "gen-zoo + measure every model + score");
    add_common(all, all_o, /*need_seed=*/true);
    all->add_option("--zoo", all_dir, "zoo directory");
    all->add_option("--measures", all_list, "comma-separated measure names (default: all)");
    all->add_option("--n-train", all_ntrain, "training examples per task");
    all->add_option("--epochs", all_epochs, "epoch budget per model");
    all->add_option("--measure-subsample", all_meas_sub, "examples per measurement split");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            int workers = gen_o.workers > 0 ? gen_o.workers : default_workers();
            ZooBuildConfig cfg = make_build_config(gen_o.seed, workers, gen_ntrain, gen_epochs);
            ZooManifest manifest = generate_zoo(cfg, gen_dir);
            std::printf("trained %zu models -> %s/manifest.json\n", manifest.entries.size(),
                        gen_dir.c_str());
            return 0;
        }
        if (meas->parsed()) {
            std::vector<std::string> measures =
                meas_list.empty() ? all_measure_names() : split_csv(meas_list);
            return run_measure_cmd(meas_model, meas_data, measures, meas_o);
        }
        if (score->parsed()) {
            std::vector<std::string> measures =
                score_list.empty() ? all_measure_names() : split_csv(score_list);
            for (const auto& m : measures)
                if (!is_measure_name(m)) {
                    std::cerr << "error: unknown measure '" << m << "'\n";
                    return 1;
                }
            ZooManifest manifest = load_manifest(score_zoo);
            auto outcomes = score_measures(manifest.entries, measures, score_o.max_cond_size);
            write_score_report(outcomes, score_o.out, score_o.csv);
            for (const auto& oc : outcomes)
                std::printf("%-40s cmi=%8.4f  tau=%+.3f\n", oc.measure.c_str(), oc.cmi.score,
                            oc.kendall_tau);
            return 0;
        }
        // all
        std::vector<std::string> measures =
            all_list.empty() ? all_measure_names() : split_csv(all_list);
        for (const auto& m : measures)
            if (!is_measure_name(m)) {
                std::cerr << "error: unknown measure '" << m << "'\n";
                return 1;
            }
        int workers = all_o.workers > 0 ? all_o.workers : default_workers();
        ZooBuildConfig build_cfg = make_build_config(all_o.seed, workers, all_ntrain, all_epochs);
        ZooManifest manifest = generate_zoo(build_cfg, all_dir);
        std::printf("trained %zu models\n", manifest.entries.size());
        MeasureConfig mcfg = all_o.to_measure_config();
        fill_measures(manifest, all_dir, build_cfg, measures, mcfg, all_meas_sub);
        save_manifest(manifest, (fs::path(all_dir) / "manifest.json").string());
        auto outcomes = score_measures(manifest.entries, measures, all_o.max_cond_size);
        write_score_report(outcomes, all_o.out, all_o.csv);
        for (const auto& oc : outcomes)
            std::printf("%-40s cmi=%8.4f  tau=%+.3f\n", oc.measure.c_str(), oc.cmi.score,
                        oc.kendall_tau);
        return 0;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
