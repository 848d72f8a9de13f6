#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "gmeasure/network.hpp"

namespace gmeasure {

// Matrix-free linear map: apply/adjoint over flattened vectors, bias excluded.
struct LinearOperatorHandle {
    std::function<std::vector<float>(const std::vector<float>&)> apply;
    std::function<std::vector<float>(const std::vector<float>&)> adjoint;
    int in_dim = 0;
    int out_dim = 0;
};

struct PowerMethodConfig {
    int max_iters = 200;
    double rel_tolerance = 1e-5;
    std::uint64_t seed = 0;
};

struct SpectralNormResult {
    double value = 0.0;
    int iterations = 0;
    bool converged = false;
};

SpectralNormResult spectral_norm(const LinearOperatorHandle& op, const PowerMethodConfig& cfg);

LinearOperatorHandle dense_operator(const DenseLayer& layer);
LinearOperatorHandle conv_operator(const Conv2dLayer& layer, const Shape& input_shape);
LinearOperatorHandle layer_operator(const Layer& layer, const Shape& input_shape);

struct FastLogSpecResult {
    double value = 0.0;
    std::vector<double> layer_norms;
    bool all_converged = true;
};

// (1 - 1/l) * sum_i log(||W_i||_2^2) - log(gamma_out^2) over affine layers.
FastLogSpecResult fast_log_spec(const Network& net, const LabeledDataset& data,
                                const PowerMethodConfig& cfg);

}  // namespace gmeasure
