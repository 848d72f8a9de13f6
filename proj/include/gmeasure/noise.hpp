#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gmeasure/network.hpp"

namespace gmeasure {

struct NoiseConfig {
    double nu = 0.01;
    int num_noise_samples = 16;
    std::uint64_t seed = 0;
    int workers = 1;
};

struct NoiseStabilityResult {
    // per_layer[i][j] = mean beta of affine layer j at example i (for the
    // -output variants there is a single column).
    std::vector<std::vector<double>> per_layer;
    double aggregate = 0.0;
    std::string measure_name;
};

// Monte Carlo mean of (1/nu) * ||z'_j - z_j||^2 / ||z_j||^2 where the input
// activation of affine layer j is perturbed by sqrt(nu/h) * ||a|| * Y,
// Y ~ N(0, I). `affine_ordinal` is 0-based; the noise stream is keyed by
// (seed, example_index, affine_ordinal).
double beta_layer(const Network& net, const ActivationTrace& trace, int affine_ordinal,
                  const NoiseConfig& cfg, std::uint64_t example_index = 0);

// Same construction end to end: perturb the input, re-run the full forward
// pass, compare logits.
double beta_output(const Network& net, const ActivationTrace& trace, const NoiseConfig& cfg,
                   std::uint64_t example_index = 0);

NoiseStabilityResult mean_noise_stability(const Network& net, const LabeledDataset& data,
                                          const NoiseConfig& cfg);
NoiseStabilityResult geometric_mean_noise_stability(const Network& net,
                                                    const LabeledDataset& data,
                                                    const NoiseConfig& cfg);
std::pair<NoiseStabilityResult, NoiseStabilityResult> noise_stability_output_measures(
    const Network& net, const LabeledDataset& data, const NoiseConfig& cfg);

}  // namespace gmeasure
