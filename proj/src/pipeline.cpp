#include "gmeasure/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "gmeasure/rng.hpp"

namespace gmeasure {

using nlohmann::json;
namespace fs = std::filesystem;

const std::vector<std::string>& all_measure_names() {
    static const std::vector<std::string> names = {
        "mean-noise-stability",
        "geometric-mean-noise-stability",
        "mean-noise-stability-output",
        "geometric-mean-noise-stability-output",
        "input-layer-margin",
        "all-layer-margin",
        "margin-jacobian",
        "fast-log-spec",
    };
    return names;
}

bool is_measure_name(const std::string& name) {
    const auto& names = all_measure_names();
    return std::find(names.begin(), names.end(), name) != names.end();
}

void MeasureConfig::reseed(std::uint64_t seed_value) {
    seed = seed_value;
    noise.seed = seed_value;
    margin.seed = seed_value;
    power.seed = seed_value;
    aggregate.seed = seed_value;
}

namespace {

double elapsed_s(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

MeasureOutcome compute_measure(const Network& net, const LabeledDataset& data,
                               const std::string& name, const MeasureConfig& cfg) {
    MeasureOutcome out;
    out.name = name;
    auto t0 = std::chrono::steady_clock::now();
    try {
        NoiseConfig noise = cfg.noise;
        noise.workers = cfg.workers;
        MarginAggregateConfig agg = cfg.aggregate;
        agg.workers = cfg.workers;
        if (name == "mean-noise-stability") {
            out.value = mean_noise_stability(net, data, noise).aggregate;
            out.diagnostics = std::to_string(noise.num_noise_samples) + " draws/(example,layer)";
        } else if (name == "geometric-mean-noise-stability") {
            out.value = geometric_mean_noise_stability(net, data, noise).aggregate;
            out.diagnostics = std::to_string(noise.num_noise_samples) + " draws/(example,layer)";
        } else if (name == "mean-noise-stability-output") {
            out.value = noise_stability_output_measures(net, data, noise).first.aggregate;
            out.diagnostics = std::to_string(noise.num_noise_samples) + " draws/example";
        } else if (name == "geometric-mean-noise-stability-output") {
            out.value = noise_stability_output_measures(net, data, noise).second.aggregate;
            out.diagnostics = std::to_string(noise.num_noise_samples) + " draws/example";
        } else if (name == "input-layer-margin") {
            out.value = input_layer_margin_measure(net, data, agg);
        } else if (name == "all-layer-margin") {
            out.value = all_layer_margin_measure(net, data, cfg.margin, agg);
            out.diagnostics = std::to_string(cfg.margin.num_restarts) + " restarts x " +
                              std::to_string(cfg.margin.max_steps) + " steps";
        } else if (name == "margin-jacobian") {
            out.value = margin_jacobian(net, data, cfg.workers);
        } else if (name == "fast-log-spec") {
            FastLogSpecResult r = fast_log_spec(net, data, cfg.power);
            out.value = r.value;
            std::ostringstream diag;
            diag << net.depth() << " layer norms";
            if (!r.all_converged) diag << " (power method hit max_iters; last estimate used)";
            out.diagnostics = diag.str();
        } else {
            throw ValidationError("unknown measure '" + name + "'");
        }
        out.ok = true;
    } catch (const std::exception& e) {
        out.ok = false;
        out.error = e.what();
    }
    out.wall_time_s = elapsed_s(t0);
    return out;
}

std::vector<MeasureOutcome> compute_measures(const Network& net, const LabeledDataset& data,
                                             const std::vector<std::string>& names,
                                             const MeasureConfig& cfg) {
    for (const auto& n : names)
        if (!is_measure_name(n)) throw ValidationError("unknown measure '" + n + "'");
    std::vector<MeasureOutcome> outcomes;
    outcomes.reserve(names.size());
    for (const auto& n : names) outcomes.push_back(compute_measure(net, data, n, cfg));
    return outcomes;
}

int write_measure_report(const std::vector<MeasureOutcome>& outcomes, const MeasureConfig& cfg,
                         const std::string& out_path, bool csv) {
    int failures = 0;
    if (csv) {
        std::ofstream os(out_path);
        if (!os) throw IoError("cannot open '" + out_path + "' for writing");
        os << "measure,value,ok,wall_time_s\n";
        for (const auto& o : outcomes) {
            if (!o.ok) ++failures;
            os << o.name << "," << (o.ok ? std::to_string(o.value) : "") << ","
               << (o.ok ? 1 : 0) << "," << o.wall_time_s << "\n";
        }
        return failures;
    }
    json doc;
    doc["kind"] = "measure-report";
    doc["config"] = {
        {"nu", cfg.noise.nu},
        {"noise_samples", cfg.noise.num_noise_samples},
        {"margin_steps", cfg.margin.max_steps},
        {"margin_restarts", cfg.margin.num_restarts},
        {"pm_iters", cfg.power.max_iters},
        {"pm_tol", cfg.power.rel_tolerance},
        {"subsample", cfg.aggregate.subsample},
        {"seed", cfg.seed},
        {"workers", cfg.workers},
    };
    json measures = json::object();
    for (const auto& o : outcomes) {
        json jm;
        jm["ok"] = o.ok;
        if (o.ok)
            jm["value"] = o.value;
        else {
            jm["error"] = o.error;
            ++failures;
        }
        jm["wall_time_s"] = o.wall_time_s;
        if (!o.diagnostics.empty()) jm["diagnostics"] = o.diagnostics;
        measures[o.name] = std::move(jm);
    }
    doc["measures"] = std::move(measures);
    std::ofstream os(out_path);
    if (!os) throw IoError("cannot open '" + out_path + "' for writing");
    os << doc.dump(2) << "\n";
    return failures;
}

std::vector<ScoreOutcome> score_measures(const std::vector<ZooEntry>& zoo,
                                         const std::vector<std::string>& measures,
                                         int max_condition_size) {
    std::vector<ScoreOutcome> outcomes;
    for (const auto& m : measures) {
        // models whose measure computation failed are dropped from this
        // measure's ranking rather than aborting every other measure
        std::vector<ZooEntry> usable;
        for (const auto& e : zoo)
            if (e.measure_values.count(m)) usable.push_back(e);
        if (usable.size() < 2)
            throw DegenerateZoo("measure '" + m + "' present on " +
                                std::to_string(usable.size()) + " models; need at least 2");
        ScoreOutcome so;
        so.measure = m;
        so.cmi = conditional_mi_score(usable, m, max_condition_size);
        so.kendall_tau = rank_correlation(usable, m);
        outcomes.push_back(std::move(so));
    }
    return outcomes;
}

void write_score_report(const std::vector<ScoreOutcome>& outcomes, const std::string& out_path,
                        bool csv) {
    if (csv) {
        std::ofstream os(out_path);
        if (!os) throw IoError("cannot open '" + out_path + "' for writing");
        os << "measure,cmi_score,kendall_tau,min_subset\n";
        for (const auto& o : outcomes) {
            std::string subset;
            for (const auto& k : o.cmi.min_subset) subset += (subset.empty() ? "" : "+") + k;
            os << o.measure << "," << o.cmi.score << "," << o.kendall_tau << "," << subset
               << "\n";
        }
        return;
    }
    json doc;
    doc["kind"] = "score-report";
    json scores = json::object();
    for (const auto& o : outcomes) {
        json js;
        js["cmi_score"] = o.cmi.score;
        js["min_subset"] = o.cmi.min_subset;
        js["kendall_tau"] = o.kendall_tau;
        json table = json::array();
        for (const auto& ss : o.cmi.per_condition) {
            table.push_back({{"subset", ss.subset},
                             {"score", ss.score},
                             {"usable_pairs", ss.usable_pairs},
                             {"skipped_cells", ss.skipped_cells}});
        }
        js["per_subset"] = std::move(table);
        scores[o.measure] = std::move(js);
    }
    doc["scores"] = std::move(scores);
    std::ofstream os(out_path);
    if (!os) throw IoError("cannot open '" + out_path + "' for writing");
    os << doc.dump(2) << "\n";
}

namespace {

std::string noise_tag_of(double level) {
    std::ostringstream os;
    os << level;
    return os.str();
}

SyntheticTaskSpec task_for_level(const ZooBuildConfig& cfg, double level) {
    SyntheticTaskSpec spec = cfg.task;
    spec.label_noise_fraction = level;
    return spec;
}

}  // namespace

ZooManifest generate_zoo(const ZooBuildConfig& cfg, const std::string& out_dir) {
    fs::create_directories(out_dir);
    ZooManifest manifest;
    {
        json task;
        task["generator"] = generator_name(cfg.task.generator);
        task["input_dim"] = cfg.task.input_dim;
        task["num_classes"] = cfg.task.num_classes;
        task["n_train"] = cfg.task.n_train;
        task["n_test"] = cfg.task.n_test;
        task["seed"] = cfg.task.seed;
        task["label_noise_levels"] = cfg.label_noise_levels;
        manifest.task_description = task.dump();
    }
    for (double level : cfg.label_noise_levels) {
        auto task = generate_task(task_for_level(cfg, level));
        std::vector<TrainConfig> sweep;
        for (int depth : cfg.depths)
            for (int width : cfg.widths)
                for (std::uint64_t seed : cfg.seeds) {
                    TrainConfig tc;
                    tc.depth = depth;
                    tc.width = width;
                    tc.epochs = cfg.epochs;
                    tc.batch_size = cfg.batch_size;
                    tc.learning_rate = cfg.learning_rate;
                    tc.seed = seed;
                    sweep.push_back(tc);
                }
        BuiltZoo built = build_zoo(task, sweep, cfg.workers, noise_tag_of(level));
        for (std::size_t i = 0; i < built.entries.size(); ++i) {
            ZooEntry e = std::move(built.entries[i]);
            std::string file = e.model_id + ".gmb";
            save_model(built.networks[i], (fs::path(out_dir) / file).string());
            e.model_path = file;
            manifest.entries.push_back(std::move(e));
        }
    }
    save_manifest(manifest, (fs::path(out_dir) / "manifest.json").string());
    return manifest;
}

void fill_measures(ZooManifest& manifest, const std::string& manifest_dir,
                   const ZooBuildConfig& build_cfg, const std::vector<std::string>& measures,
                   const MeasureConfig& cfg, int measure_subsample) {
    // one measurement split per label-noise level: a seeded subsample of that
    // level's training split
    std::map<std::string, LabeledDataset> splits;
    for (double level : build_cfg.label_noise_levels) {
        LabeledDataset train = generate_task(task_for_level(build_cfg, level)).first;
        if (measure_subsample > 0 && static_cast<std::size_t>(measure_subsample) < train.size()) {
            std::vector<std::size_t> idx(train.size());
            for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
            Rng rng = Rng::keyed(cfg.seed, 0x5e1ec7ULL);
            rng.shuffle(idx);
            idx.resize(static_cast<std::size_t>(measure_subsample));
            std::sort(idx.begin(), idx.end());
            LabeledDataset sub;
            sub.input_shape = train.input_shape;
            sub.num_classes = train.num_classes;
            for (std::size_t i : idx) {
                sub.inputs.push_back(train.inputs[i]);
                sub.labels.push_back(train.labels[i]);
            }
            train = std::move(sub);
        }
        splits[noise_tag_of(level)] = std::move(train);
    }
    for (ZooEntry& e : manifest.entries) {
        Network net = load_model((fs::path(manifest_dir) / e.model_path).string());
        const LabeledDataset& data = splits.at(e.hyperparams.at("label_noise"));
        for (const MeasureOutcome& o : compute_measures(net, data, measures, cfg)) {
            if (o.ok) e.measure_values[o.name] = o.value;
        }
    }
}

}  // namespace gmeasure
