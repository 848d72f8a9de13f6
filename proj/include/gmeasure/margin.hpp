#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "gmeasure/network.hpp"

namespace gmeasure {

// Per-layer perturbations of the all-layer margin: deltas[j] is shaped like
// the j-th affine layer's output (flattened).
struct PerturbationVector {
    std::vector<std::vector<float>> deltas;

    double norm() const;
    bool is_zero() const;
};

struct MarginSolverConfig {
    int max_steps = 40;
    double step_size = 0.1;  // relative to the radius under trial
    int num_restarts = 3;
    std::uint64_t seed = 0;
    double tolerance = 1e-3;  // radius search resolution (relative)
};

struct AllLayerMarginResult {
    double margin = 0.0;  // +inf sentinel when the solver found nothing
    PerturbationVector perturbation;
    bool solved = false;
    int ascent_evals = 0;  // diagnostic: perturbed forward passes spent
};

// First-order (Taylor) distance to the nearest decision boundary:
// min over y' != y of max(0, (f_y - f_{y'}) / ||grad_x f_y - grad_x f_{y'}||).
// Returns 0 for misclassified inputs.
double input_layer_margin(const Network& net, const std::vector<float>& x, int y);

// Perturbed composition: each affine layer output gets + delta_j * ||g_{j-1}||
// where g_{j-1} is the previous perturbed affine output (the input for j = 1).
std::vector<float> perturbed_forward(const Network& net, const std::vector<float>& x,
                                     const PerturbationVector& delta);

// Gradient-ascent upper bound on the all-layer margin. Every returned
// perturbation is verified to flip the argmax by an exact perturbed forward
// pass; failure returns the +inf sentinel with solved = false.
AllLayerMarginResult all_layer_margin(const Network& net, const std::vector<float>& x, int y,
                                      const MarginSolverConfig& cfg,
                                      std::uint64_t example_index = 0);

// (l / gamma_out^2)^(1/l)
//   + [sum_i sum_j (1/(d_l d_j)) ||d f(x_i)/d a_j||_F^2] / (n l^2 gamma_out)
double margin_jacobian(const Network& net, const LabeledDataset& data, int workers = 1);

// Dataset aggregates (median over a seeded subsample).
struct MarginAggregateConfig {
    int subsample = 256;
    std::uint64_t seed = 0;
    int workers = 1;
};

double input_layer_margin_measure(const Network& net, const LabeledDataset& data,
                                  const MarginAggregateConfig& agg);
double all_layer_margin_measure(const Network& net, const LabeledDataset& data,
                                const MarginSolverConfig& cfg, const MarginAggregateConfig& agg);

}  // namespace gmeasure
