#pragma once

#include <cmath>
#include <vector>

#include "gmeasure/network.hpp"
#include "gmeasure/rng.hpp"

namespace gmtest {

using gmeasure::Conv2dLayer;
using gmeasure::DenseLayer;
using gmeasure::LabeledDataset;
using gmeasure::Layer;
using gmeasure::Network;
using gmeasure::ReluLayer;
using gmeasure::Rng;
using gmeasure::Shape;

inline DenseLayer make_dense(int out_dim, int in_dim, const std::vector<float>& weight,
                             const std::vector<float>& bias) {
    DenseLayer d;
    d.out_dim = out_dim;
    d.in_dim = in_dim;
    d.weight = weight;
    d.bias = bias;
    return d;
}

inline DenseLayer random_dense(int out_dim, int in_dim, Rng& rng, bool zero_bias = false) {
    DenseLayer d;
    d.out_dim = out_dim;
    d.in_dim = in_dim;
    double scale = 1.0 / std::sqrt(static_cast<double>(in_dim));
    d.weight.resize(static_cast<std::size_t>(out_dim) * in_dim);
    for (auto& w : d.weight) w = static_cast<float>(scale * rng.normal());
    d.bias.assign(static_cast<std::size_t>(out_dim), 0.0f);
    if (!zero_bias)
        for (auto& b : d.bias) b = static_cast<float>(0.1 * rng.normal());
    return d;
}

inline Conv2dLayer random_conv(int out_c, int in_c, int k, int stride, int padding, Rng& rng) {
    Conv2dLayer c;
    c.out_channels = out_c;
    c.in_channels = in_c;
    c.kernel_h = k;
    c.kernel_w = k;
    c.stride = stride;
    c.padding = padding;
    double scale = 1.0 / std::sqrt(static_cast<double>(in_c * k * k));
    c.kernel.resize(static_cast<std::size_t>(out_c) * in_c * k * k);
    for (auto& w : c.kernel) w = static_cast<float>(scale * rng.normal());
    c.bias.resize(static_cast<std::size_t>(out_c));
    for (auto& b : c.bias) b = static_cast<float>(0.1 * rng.normal());
    return c;
}

// Random dense ReLU net with the given affine widths (first entry = input
// dim, last = class count).
inline Network random_mlp(const std::vector<int>& widths, Rng& rng, bool zero_bias = false) {
    std::vector<Layer> layers;
    for (std::size_t j = 0; j + 1 < widths.size(); ++j) {
        layers.emplace_back(random_dense(widths[j + 1], widths[j], rng, zero_bias));
        if (j + 2 < widths.size()) layers.emplace_back(ReluLayer{});
    }
    return Network({widths.front()}, std::move(layers), widths.back());
}

inline std::vector<float> random_input(std::size_t n, Rng& rng) {
    std::vector<float> x(n);
    for (auto& v : x) v = static_cast<float>(rng.normal());
    return x;
}

// Independent convolution oracle: straight quintuple loop over an explicitly
// padded copy of the input, no shared code with the library kernels.
inline std::vector<float> naive_conv(const Conv2dLayer& c, const std::vector<float>& in, int ih,
                                     int iw, bool with_bias = true) {
    const int ph = ih + 2 * c.padding, pw = iw + 2 * c.padding;
    std::vector<double> padded(static_cast<std::size_t>(c.in_channels) * ph * pw, 0.0);
    for (int cc = 0; cc < c.in_channels; ++cc)
        for (int y = 0; y < ih; ++y)
            for (int x = 0; x < iw; ++x)
                padded[(static_cast<std::size_t>(cc) * ph + y + c.padding) * pw + x + c.padding] =
                    in[(static_cast<std::size_t>(cc) * ih + y) * iw + x];
    const int oh = (ph - c.kernel_h) / c.stride + 1;
    const int ow = (pw - c.kernel_w) / c.stride + 1;
    std::vector<float> out(static_cast<std::size_t>(c.out_channels) * oh * ow);
    for (int oc = 0; oc < c.out_channels; ++oc)
        for (int y = 0; y < oh; ++y)
            for (int x = 0; x < ow; ++x) {
                double acc = with_bias ? c.bias[static_cast<std::size_t>(oc)] : 0.0;
                for (int cc = 0; cc < c.in_channels; ++cc)
                    for (int ky = 0; ky < c.kernel_h; ++ky)
                        for (int kx = 0; kx < c.kernel_w; ++kx)
                            acc += static_cast<double>(
                                       c.kernel[((static_cast<std::size_t>(oc) * c.in_channels +
                                                  cc) * c.kernel_h + ky) * c.kernel_w + kx]) *
                                   padded[(static_cast<std::size_t>(cc) * ph + y * c.stride + ky) *
                                              pw + x * c.stride + kx];
                out[(static_cast<std::size_t>(oc) * oh + y) * ow + x] = static_cast<float>(acc);
            }
    return out;
}

// Independent double-precision forward for dense ReLU nets; keeps the
// finite-difference oracle free of float32 storage noise.
inline std::vector<double> double_forward(const Network& net, const std::vector<double>& x) {
    std::vector<double> v = x;
    for (const Layer& layer : net.layers()) {
        if (const auto* d = std::get_if<DenseLayer>(&layer)) {
            std::vector<double> out(static_cast<std::size_t>(d->out_dim));
            for (int r = 0; r < d->out_dim; ++r) {
                double acc = d->bias[static_cast<std::size_t>(r)];
                for (int c = 0; c < d->in_dim; ++c)
                    acc += static_cast<double>(d->weight[static_cast<std::size_t>(r) * d->in_dim + c]) *
                           v[static_cast<std::size_t>(c)];
                out[static_cast<std::size_t>(r)] = acc;
            }
            v = std::move(out);
        } else if (std::holds_alternative<ReluLayer>(layer)) {
            for (auto& t : v) t = t > 0.0 ? t : 0.0;
        } else {
            throw std::logic_error("double_forward supports dense/relu nets only");
        }
    }
    return v;
}

// Central finite difference of cotangent^T f(x) w.r.t. every input coordinate,
// evaluated through the double-precision oracle.
inline std::vector<double> fd_input_grad(const Network& net, const std::vector<float>& x,
                                         const std::vector<float>& cotangent, double h = 1e-4) {
    auto scalar = [&](const std::vector<double>& xin) {
        std::vector<double> out = double_forward(net, xin);
        double s = 0.0;
        for (std::size_t k = 0; k < out.size(); ++k) s += out[k] * cotangent[k];
        return s;
    };
    std::vector<double> xd(x.begin(), x.end());
    std::vector<double> grad(x.size());
    for (std::size_t d = 0; d < x.size(); ++d) {
        double orig = xd[d];
        xd[d] = orig + h;
        double plus = scalar(xd);
        xd[d] = orig - h;
        double minus = scalar(xd);
        xd[d] = orig;
        grad[d] = (plus - minus) / (2.0 * h);
    }
    return grad;
}

// Rejects inputs whose pre-activations sit within `margin` of a ReLU kink.
inline bool near_relu_kink(const Network& net, const std::vector<float>& x,
                           double margin = 1e-2) {
    gmeasure::ActivationTrace trace = gmeasure::forward(net, x);
    for (std::size_t k = 0; k < net.layers().size(); ++k) {
        if (!std::holds_alternative<ReluLayer>(net.layers()[k])) continue;
        for (float z : trace.values[k])
            if (std::abs(z) <= margin) return true;
    }
    return false;
}

}  // namespace gmtest
