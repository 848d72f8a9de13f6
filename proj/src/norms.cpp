#include "gmeasure/norms.hpp"

#include <algorithm>
#include <cmath>

#include "gmeasure/rng.hpp"

namespace gmeasure {

SpectralNormResult spectral_norm(const LinearOperatorHandle& op, const PowerMethodConfig& cfg) {
    SpectralNormResult res;
    Rng rng(cfg.seed);
    std::vector<float> v;
    // A zero start (or a start in the null space) gets up to 3 reseeds before
    // the operator is declared zero.
    double prev_sigma = 0.0;
    for (int attempt = 0; attempt < 4; ++attempt) {
        v = rng.normal_vector(static_cast<std::size_t>(op.in_dim));
        double n = l2_norm(v);
        if (n == 0.0) continue;
        for (auto& x : v) x = static_cast<float>(x / n);
        std::vector<float> av = op.apply(v);
        prev_sigma = l2_norm(av);
        if (prev_sigma > 0.0) break;
        if (attempt == 3) return res;  // zero operator
    }
    for (int it = 1; it <= cfg.max_iters; ++it) {
        std::vector<float> av = op.apply(v);
        double av_norm = l2_norm(av);
        res.iterations = it;
        if (av_norm == 0.0) {
            res.value = 0.0;
            res.converged = true;
            return res;
        }
        // unit v: Rayleigh quotient of A^T A is ||Av||^2
        double sigma = av_norm;
        if (it > 1 && std::abs(sigma - prev_sigma) < cfg.rel_tolerance * sigma) {
            res.value = sigma;
            res.converged = true;
            return res;
        }
        prev_sigma = sigma;
        std::vector<float> u = op.adjoint(av);
        double u_norm = l2_norm(u);
        if (u_norm == 0.0) {
            res.value = sigma;
            res.converged = true;
            return res;
        }
        for (std::size_t k = 0; k < u.size(); ++k) v[k] = static_cast<float>(u[k] / u_norm);
    }
    res.value = prev_sigma;
    res.converged = false;
    return res;
}

LinearOperatorHandle dense_operator(const DenseLayer& layer) {
    LinearOperatorHandle op;
    op.in_dim = layer.in_dim;
    op.out_dim = layer.out_dim;
    DenseLayer bias_free = layer;
    std::fill(bias_free.bias.begin(), bias_free.bias.end(), 0.0f);
    op.apply = [bias_free](const std::vector<float>& v) {
        return apply_layer(Layer{bias_free}, v, {bias_free.in_dim});
    };
    DenseLayer transposed;
    transposed.in_dim = layer.out_dim;
    transposed.out_dim = layer.in_dim;
    transposed.bias.assign(static_cast<std::size_t>(layer.in_dim), 0.0f);
    transposed.weight.resize(layer.weight.size());
    for (int r = 0; r < layer.out_dim; ++r)
        for (int c = 0; c < layer.in_dim; ++c)
            transposed.weight[static_cast<std::size_t>(c) * layer.out_dim + r] =
                layer.weight[static_cast<std::size_t>(r) * layer.in_dim + c];
    op.adjoint = [transposed](const std::vector<float>& v) {
        return apply_layer(Layer{transposed}, v, {transposed.in_dim});
    };
    return op;
}

LinearOperatorHandle conv_operator(const Conv2dLayer& layer, const Shape& input_shape) {
    if (input_shape.size() != 3 || input_shape[0] != layer.in_channels)
        throw ShapeError("conv_operator: input shape " + shape_to_string(input_shape) +
                         " incompatible with " + std::to_string(layer.in_channels) +
                         "-channel kernel");
    Conv2dLayer bias_free = layer;
    std::fill(bias_free.bias.begin(), bias_free.bias.end(), 0.0f);
    const int oh = (input_shape[1] + 2 * layer.padding - layer.kernel_h) / layer.stride + 1;
    const int ow = (input_shape[2] + 2 * layer.padding - layer.kernel_w) / layer.stride + 1;
    if (oh <= 0 || ow <= 0)
        throw ShapeError("conv_operator: kernel larger than padded input");
    Shape in_shape = input_shape;
    LinearOperatorHandle op;
    op.in_dim = static_cast<int>(shape_size(in_shape));
    op.out_dim = layer.out_channels * oh * ow;
    op.apply = [bias_free, in_shape](const std::vector<float>& v) {
        return apply_layer(Layer{bias_free}, v, in_shape);
    };
    op.adjoint = [bias_free, in_shape](const std::vector<float>& v) {
        // transposed convolution = gradient of the conv w.r.t. its input
        return layer_backward(Layer{bias_free}, in_shape, {}, {}, v);
    };
    return op;
}

LinearOperatorHandle layer_operator(const Layer& layer, const Shape& input_shape) {
    if (const auto* d = std::get_if<DenseLayer>(&layer)) return dense_operator(*d);
    if (const auto* c = std::get_if<Conv2dLayer>(&layer)) return conv_operator(*c, input_shape);
    throw ValidationError("layer_operator: layer has no linear map");
}

FastLogSpecResult fast_log_spec(const Network& net, const LabeledDataset& data,
                                const PowerMethodConfig& cfg) {
    data.validate();
    const double gamma = aggregate_output_margin(net, data);
    FastLogSpecResult res;
    double sum_logs = 0.0;
    for (int j = 0; j < net.depth(); ++j) {
        int idx = net.affine_layers()[static_cast<std::size_t>(j)];
        LinearOperatorHandle op = layer_operator(net.layers()[static_cast<std::size_t>(idx)],
                                                 net.layer_shapes()[static_cast<std::size_t>(idx)]);
        SpectralNormResult sn = spectral_norm(op, cfg);
        if (!sn.converged) res.all_converged = false;
        if (sn.value <= 0.0)
            throw ValidationError("affine layer " + std::to_string(j) +
                                  " has zero spectral norm");
        res.layer_norms.push_back(sn.value);
        sum_logs += std::log(sn.value * sn.value);
    }
    const double l = static_cast<double>(net.depth());
    res.value = (1.0 - 1.0 / l) * sum_logs - std::log(gamma * gamma);
    return res;
}

}  // namespace gmeasure
