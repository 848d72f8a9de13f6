#pragma once

#include <map>
#include <string>
#include <vector>

namespace gmeasure {

struct ZooEntry {
    std::string model_id;
    std::map<std::string, std::string> hyperparams;  // discrete tags
    double train_error = 0.0;
    double test_error = 0.0;
    std::map<std::string, double> measure_values;
    std::string model_path;  // optional, used by the manifest
    bool did_fit = true;
};

double generalization_gap(const ZooEntry& entry);

struct SubsetScore {
    std::vector<std::string> subset;  // conditioning hyperparameter names
    double score = 0.0;               // 100 x plug-in conditional MI (nats)
    int usable_pairs = 0;
    int skipped_cells = 0;
};

struct CmiScore {
    double score = 0.0;
    std::vector<std::string> min_subset;
    std::vector<SubsetScore> per_condition;
};

// Plug-in conditional mutual information between the pairwise
// measure-difference sign and gap-difference sign, conditioned on each
// hyperparameter subset of size <= max_condition_size; pairs are formed
// within cells that agree on the subset, zero-difference pairs are dropped,
// and the minimum over subsets is returned (x100, natural log).
CmiScore conditional_mi_score(const std::vector<ZooEntry>& zoo, const std::string& measure_name,
                              int max_condition_size);

// Kendall tau-b between measure values and generalization gaps.
double rank_correlation(const std::vector<ZooEntry>& zoo, const std::string& measure_name);

double kendall_tau_b(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace gmeasure
