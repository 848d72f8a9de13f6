#pragma once

#include <string>
#include <vector>

#include "gmeasure/eval.hpp"
#include "gmeasure/io.hpp"
#include "gmeasure/margin.hpp"
#include "gmeasure/network.hpp"
#include "gmeasure/noise.hpp"
#include "gmeasure/norms.hpp"
#include "gmeasure/zoo.hpp"

namespace gmeasure {

// The eight measure names, in report order.
const std::vector<std::string>& all_measure_names();
bool is_measure_name(const std::string& name);

struct MeasureConfig {
    NoiseConfig noise;
    MarginSolverConfig margin;
    PowerMethodConfig power;
    MarginAggregateConfig aggregate;
    int workers = 1;
    std::uint64_t seed = 0;

    void reseed(std::uint64_t seed_value);
};

struct MeasureOutcome {
    std::string name;
    double value = 0.0;
    bool ok = false;
    std::string error;
    double wall_time_s = 0.0;
    std::string diagnostics;  // free-form, e.g. solver stats
};

MeasureOutcome compute_measure(const Network& net, const LabeledDataset& data,
                               const std::string& name, const MeasureConfig& cfg);
std::vector<MeasureOutcome> compute_measures(const Network& net, const LabeledDataset& data,
                                             const std::vector<std::string>& names,
                                             const MeasureConfig& cfg);

// JSON report with stable key order; returns the number of failed measures.
int write_measure_report(const std::vector<MeasureOutcome>& outcomes, const MeasureConfig& cfg,
                         const std::string& out_path, bool csv);

struct ScoreOutcome {
    std::string measure;
    CmiScore cmi;
    double kendall_tau = 0.0;
};

std::vector<ScoreOutcome> score_measures(const std::vector<ZooEntry>& zoo,
                                         const std::vector<std::string>& measures,
                                         int max_condition_size);
void write_score_report(const std::vector<ScoreOutcome>& outcomes, const std::string& out_path,
                        bool csv);

struct ZooBuildConfig {
    SyntheticTaskSpec task;
    std::vector<double> label_noise_levels = {0.0, 0.25, 0.5};
    std::vector<int> depths = {1, 2, 3};
    std::vector<int> widths = {8, 32};
    std::vector<std::uint64_t> seeds = {1, 2, 3};
    int epochs = 3000;
    int batch_size = 32;
    double learning_rate = 0.05;
    int workers = 1;
};

// Trains the full sweep, writes model files next to the manifest, returns the
// manifest (entries carry model paths and errors, no measure values yet).
ZooManifest generate_zoo(const ZooBuildConfig& cfg, const std::string& out_dir);

// Loads each model in the manifest, computes the named measures on a seeded
// subsample of that model's own training split (regenerated from the task
// spec and the entry's label-noise tag), and fills entry.measure_values.
void fill_measures(ZooManifest& manifest, const std::string& manifest_dir,
                   const ZooBuildConfig& build_cfg, const std::vector<std::string>& measures,
                   const MeasureConfig& cfg, int measure_subsample = 128);

}  // namespace gmeasure
