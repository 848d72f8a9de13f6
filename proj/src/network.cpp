#include "gmeasure/network.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace gmeasure {

std::string shape_to_string(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << "x";
        os << s[i];
    }
    os << ")";
    return os.str();
}

const char* layer_type_name(const Layer& l) {
    switch (l.index()) {
        case 0: return "dense";
        case 1: return "conv2d";
        case 2: return "relu";
        case 3: return "flatten";
        case 4: return "avgpool";
    }
    return "?";
}

namespace {

int conv_out_extent(int in, int kernel, int stride, int padding) {
    return (in + 2 * padding - kernel) / stride + 1;
}

Shape output_shape_of(const Layer& layer, const Shape& in_shape, int layer_index) {
    auto fail = [&](const std::string& what) -> Shape {
        throw ShapeError("layer " + std::to_string(layer_index) + " (" +
                         layer_type_name(layer) + "): " + what + ", input shape " +
                         shape_to_string(in_shape));
    };
    if (const auto* d = std::get_if<DenseLayer>(&layer)) {
        if (static_cast<int>(shape_size(in_shape)) != d->in_dim)
            return fail("expects " + std::to_string(d->in_dim) + " inputs");
        if (d->weight.size() != static_cast<std::size_t>(d->in_dim) * d->out_dim ||
            d->bias.size() != static_cast<std::size_t>(d->out_dim))
            return fail("weight/bias size inconsistent with declared dims");
        return {d->out_dim};
    }
    if (const auto* c = std::get_if<Conv2dLayer>(&layer)) {
        if (in_shape.size() != 3) return fail("expects a (c,h,w) input");
        if (in_shape[0] != c->in_channels)
            return fail("expects " + std::to_string(c->in_channels) + " channels");
        int oh = conv_out_extent(in_shape[1], c->kernel_h, c->stride, c->padding);
        int ow = conv_out_extent(in_shape[2], c->kernel_w, c->stride, c->padding);
        if (oh <= 0 || ow <= 0) return fail("kernel larger than padded input");
        if (c->kernel.size() != static_cast<std::size_t>(c->out_channels) * c->in_channels *
                                    c->kernel_h * c->kernel_w ||
            c->bias.size() != static_cast<std::size_t>(c->out_channels))
            return fail("kernel/bias size inconsistent with declared dims");
        return {c->out_channels, oh, ow};
    }
    if (std::holds_alternative<ReluLayer>(layer)) return in_shape;
    if (std::holds_alternative<FlattenLayer>(layer))
        return {static_cast<int>(shape_size(in_shape))};
    const auto& p = std::get<AvgPoolLayer>(layer);
    if (in_shape.size() != 3) return fail("expects a (c,h,w) input");
    int oh = conv_out_extent(in_shape[1], p.window, p.stride, 0);
    int ow = conv_out_extent(in_shape[2], p.window, p.stride, 0);
    if (oh <= 0 || ow <= 0) return fail("pool window larger than input");
    return {in_shape[0], oh, ow};
}

bool all_finite(const std::vector<float>& v) {
    return std::all_of(v.begin(), v.end(), [](float x) { return std::isfinite(x); });
}

}  // namespace

Network::Network(Shape input_shape, std::vector<Layer> layers, int num_classes)
    : input_shape_(std::move(input_shape)),
      layers_(std::move(layers)),
      num_classes_(num_classes) {
    validate();
}

void Network::validate() {
    if (input_shape_.empty() || shape_size(input_shape_) == 0)
        throw ValidationError("empty input shape");
    if (num_classes_ < 1) throw ValidationError("num_classes must be positive");
    layer_shapes_.clear();
    layer_shapes_.push_back(input_shape_);
    for (std::size_t k = 0; k < layers_.size(); ++k) {
        const Layer& l = layers_[k];
        if (const auto* d = std::get_if<DenseLayer>(&l)) {
            if (!all_finite(d->weight) || !all_finite(d->bias))
                throw ValidationError("non-finite weights in layer " + std::to_string(k));
        } else if (const auto* c = std::get_if<Conv2dLayer>(&l)) {
            if (!all_finite(c->kernel) || !all_finite(c->bias))
                throw ValidationError("non-finite weights in layer " + std::to_string(k));
        }
        layer_shapes_.push_back(output_shape_of(l, layer_shapes_.back(), static_cast<int>(k)));
        if (is_affine(l)) affine_indices_.push_back(static_cast<int>(k));
    }
    if (affine_indices_.empty()) throw ValidationError("network has no affine layer");
    if (static_cast<int>(shape_size(layer_shapes_.back())) != num_classes_)
        throw ValidationError("final layer emits " +
                              std::to_string(shape_size(layer_shapes_.back())) +
                              " values, expected num_classes = " + std::to_string(num_classes_));
}

int Network::activation_site(int affine_ordinal) const {
    int idx = affine_indices_.at(static_cast<std::size_t>(affine_ordinal));
    if (idx + 1 < static_cast<int>(layers_.size()) &&
        std::holds_alternative<ReluLayer>(layers_[idx + 1]))
        return idx + 1;
    return idx;
}

int Network::affine_out_dim(int affine_ordinal) const {
    int idx = affine_indices_.at(static_cast<std::size_t>(affine_ordinal));
    return static_cast<int>(shape_size(layer_shapes_[idx + 1]));
}

void LabeledDataset::validate() const {
    if (inputs.empty()) throw ValidationError("dataset is empty");
    if (inputs.size() != labels.size())
        throw ValidationError("inputs/labels count mismatch");
    std::size_t want = shape_size(input_shape);
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        if (inputs[i].size() != want)
            throw ValidationError("input " + std::to_string(i) + " has wrong size");
        if (labels[i] < 0 || labels[i] >= num_classes)
            throw ValidationError("label " + std::to_string(labels[i]) + " at index " +
                                  std::to_string(i) + " out of range");
    }
}

namespace {

std::vector<float> dense_forward(const DenseLayer& d, const std::vector<float>& in) {
    std::vector<float> out(static_cast<std::size_t>(d.out_dim));
    for (int r = 0; r < d.out_dim; ++r) {
        double acc = d.bias[static_cast<std::size_t>(r)];
        const float* row = d.weight.data() + static_cast<std::size_t>(r) * d.in_dim;
        for (int c = 0; c < d.in_dim; ++c) acc += static_cast<double>(row[c]) * in[static_cast<std::size_t>(c)];
        out[static_cast<std::size_t>(r)] = static_cast<float>(acc);
    }
    return out;
}

std::vector<float> dense_backward(const DenseLayer& d, const std::vector<float>& grad_out) {
    std::vector<float> grad_in(static_cast<std::size_t>(d.in_dim));
    for (int c = 0; c < d.in_dim; ++c) {
        double acc = 0.0;
        for (int r = 0; r < d.out_dim; ++r)
            acc += static_cast<double>(d.weight[static_cast<std::size_t>(r) * d.in_dim + c]) *
                   grad_out[static_cast<std::size_t>(r)];
        grad_in[static_cast<std::size_t>(c)] = static_cast<float>(acc);
    }
    return grad_in;
}

std::vector<float> conv_forward(const Conv2dLayer& c, const std::vector<float>& in,
                                const Shape& in_shape, bool with_bias) {
    const int ic = in_shape[0], ih = in_shape[1], iw = in_shape[2];
    const int oh = conv_out_extent(ih, c.kernel_h, c.stride, c.padding);
    const int ow = conv_out_extent(iw, c.kernel_w, c.stride, c.padding);
    std::vector<float> out(static_cast<std::size_t>(c.out_channels) * oh * ow);
    for (int oc = 0; oc < c.out_channels; ++oc) {
        for (int y = 0; y < oh; ++y) {
            for (int x = 0; x < ow; ++x) {
                double acc = with_bias ? c.bias[static_cast<std::size_t>(oc)] : 0.0;
                for (int cc = 0; cc < ic; ++cc) {
                    for (int ky = 0; ky < c.kernel_h; ++ky) {
                        int sy = y * c.stride + ky - c.padding;
                        if (sy < 0 || sy >= ih) continue;
                        for (int kx = 0; kx < c.kernel_w; ++kx) {
                            int sx = x * c.stride + kx - c.padding;
                            if (sx < 0 || sx >= iw) continue;
                            double w = c.kernel[((static_cast<std::size_t>(oc) * ic + cc) *
                                                     c.kernel_h + ky) * c.kernel_w + kx];
                            double v = in[(static_cast<std::size_t>(cc) * ih + sy) * iw + sx];
                            acc += w * v;
                        }
                    }
                }
                out[(static_cast<std::size_t>(oc) * oh + y) * ow + x] = static_cast<float>(acc);
            }
        }
    }
    return out;
}

// Gradient of conv_forward w.r.t. its input (transposed convolution).
std::vector<float> conv_backward_input(const Conv2dLayer& c, const Shape& in_shape,
                                       const std::vector<float>& grad_out) {
    const int ic = in_shape[0], ih = in_shape[1], iw = in_shape[2];
    const int oh = conv_out_extent(ih, c.kernel_h, c.stride, c.padding);
    const int ow = conv_out_extent(iw, c.kernel_w, c.stride, c.padding);
    std::vector<double> grad_in(static_cast<std::size_t>(ic) * ih * iw, 0.0);
    for (int oc = 0; oc < c.out_channels; ++oc) {
        for (int y = 0; y < oh; ++y) {
            for (int x = 0; x < ow; ++x) {
                double g = grad_out[(static_cast<std::size_t>(oc) * oh + y) * ow + x];
                if (g == 0.0) continue;
                for (int cc = 0; cc < ic; ++cc) {
                    for (int ky = 0; ky < c.kernel_h; ++ky) {
                        int sy = y * c.stride + ky - c.padding;
                        if (sy < 0 || sy >= ih) continue;
                        for (int kx = 0; kx < c.kernel_w; ++kx) {
                            int sx = x * c.stride + kx - c.padding;
                            if (sx < 0 || sx >= iw) continue;
                            double w = c.kernel[((static_cast<std::size_t>(oc) * ic + cc) *
                                                     c.kernel_h + ky) * c.kernel_w + kx];
                            grad_in[(static_cast<std::size_t>(cc) * ih + sy) * iw + sx] += w * g;
                        }
                    }
                }
            }
        }
    }
    std::vector<float> res(grad_in.size());
    for (std::size_t i = 0; i < grad_in.size(); ++i) res[i] = static_cast<float>(grad_in[i]);
    return res;
}

std::vector<float> avgpool_forward(const AvgPoolLayer& p, const std::vector<float>& in,
                                   const Shape& in_shape) {
    const int ch = in_shape[0], ih = in_shape[1], iw = in_shape[2];
    const int oh = conv_out_extent(ih, p.window, p.stride, 0);
    const int ow = conv_out_extent(iw, p.window, p.stride, 0);
    const double inv = 1.0 / (static_cast<double>(p.window) * p.window);
    std::vector<float> out(static_cast<std::size_t>(ch) * oh * ow);
    for (int c = 0; c < ch; ++c)
        for (int y = 0; y < oh; ++y)
            for (int x = 0; x < ow; ++x) {
                double acc = 0.0;
                for (int ky = 0; ky < p.window; ++ky)
                    for (int kx = 0; kx < p.window; ++kx)
                        acc += in[(static_cast<std::size_t>(c) * ih + y * p.stride + ky) * iw +
                                  x * p.stride + kx];
                out[(static_cast<std::size_t>(c) * oh + y) * ow + x] =
                    static_cast<float>(acc * inv);
            }
    return out;
}

std::vector<float> avgpool_backward(const AvgPoolLayer& p, const Shape& in_shape,
                                    const std::vector<float>& grad_out) {
    const int ch = in_shape[0], ih = in_shape[1], iw = in_shape[2];
    const int oh = conv_out_extent(ih, p.window, p.stride, 0);
    const int ow = conv_out_extent(iw, p.window, p.stride, 0);
    const double inv = 1.0 / (static_cast<double>(p.window) * p.window);
    std::vector<float> grad_in(static_cast<std::size_t>(ch) * ih * iw, 0.0f);
    for (int c = 0; c < ch; ++c)
        for (int y = 0; y < oh; ++y)
            for (int x = 0; x < ow; ++x) {
                double g = grad_out[(static_cast<std::size_t>(c) * oh + y) * ow + x] * inv;
                for (int ky = 0; ky < p.window; ++ky)
                    for (int kx = 0; kx < p.window; ++kx)
                        grad_in[(static_cast<std::size_t>(c) * ih + y * p.stride + ky) * iw +
                                x * p.stride + kx] += static_cast<float>(g);
            }
    return grad_in;
}

}  // namespace

std::vector<float> apply_layer(const Layer& layer, const std::vector<float>& in,
                               const Shape& in_shape) {
    if (const auto* d = std::get_if<DenseLayer>(&layer)) return dense_forward(*d, in);
    if (const auto* c = std::get_if<Conv2dLayer>(&layer))
        return conv_forward(*c, in, in_shape, /*with_bias=*/true);
    if (std::holds_alternative<ReluLayer>(layer)) {
        std::vector<float> out(in.size());
        for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > 0.0f ? in[i] : 0.0f;
        return out;
    }
    if (std::holds_alternative<FlattenLayer>(layer)) return in;
    return avgpool_forward(std::get<AvgPoolLayer>(layer), in, in_shape);
}

std::vector<float> layer_backward(const Layer& layer, const Shape& in_shape,
                                  const std::vector<float>& in, const std::vector<float>& /*out*/,
                                  const std::vector<float>& grad_out) {
    if (const auto* d = std::get_if<DenseLayer>(&layer)) return dense_backward(*d, grad_out);
    if (const auto* c = std::get_if<Conv2dLayer>(&layer))
        return conv_backward_input(*c, in_shape, grad_out);
    if (std::holds_alternative<ReluLayer>(layer)) {
        // subgradient 0 at exactly 0
        std::vector<float> g(in.size());
        for (std::size_t i = 0; i < in.size(); ++i) g[i] = in[i] > 0.0f ? grad_out[i] : 0.0f;
        return g;
    }
    if (std::holds_alternative<FlattenLayer>(layer)) return grad_out;
    return avgpool_backward(std::get<AvgPoolLayer>(layer), in_shape, grad_out);
}

ActivationTrace forward(const Network& net, const std::vector<float>& x) {
    if (x.size() != net.input_size())
        throw ShapeError("input has " + std::to_string(x.size()) + " values, expected " +
                         std::to_string(net.input_size()));
    for (float v : x)
        if (!std::isfinite(v)) throw ValidationError("non-finite input");
    ActivationTrace trace;
    trace.values.reserve(net.layers().size() + 1);
    trace.values.push_back(x);
    for (std::size_t k = 0; k < net.layers().size(); ++k)
        trace.values.push_back(
            apply_layer(net.layers()[k], trace.values.back(), net.layer_shapes()[k]));
    return trace;
}

std::vector<float> vjp(const Network& net, const ActivationTrace& trace,
                       const std::vector<float>& cotangent, int wrt) {
    const int num_layers = static_cast<int>(net.layers().size());
    if (wrt < kWrtInput || wrt >= num_layers)
        throw ValidationError("vjp: invalid layer index " + std::to_string(wrt));
    if (cotangent.size() != trace.output().size())
        throw ShapeError("vjp: cotangent size mismatch");
    std::vector<float> grad = cotangent;
    for (int k = num_layers - 1; k > wrt; --k)
        grad = layer_backward(net.layers()[static_cast<std::size_t>(k)],
                              net.layer_shapes()[static_cast<std::size_t>(k)],
                              trace.values[static_cast<std::size_t>(k)],
                              trace.values[static_cast<std::size_t>(k) + 1], grad);
    return grad;
}

double jacobian_frobenius_sq(const Network& net, const ActivationTrace& trace, int wrt) {
    const std::size_t out_dim = trace.output().size();
    double total = 0.0;
    std::vector<float> cotangent(out_dim, 0.0f);
    for (std::size_t k = 0; k < out_dim; ++k) {
        cotangent[k] = 1.0f;
        total += l2_norm_sq(vjp(net, trace, cotangent, wrt));
        cotangent[k] = 0.0f;
    }
    return total;
}

int argmax(const std::vector<float>& v) {
    return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

double output_margin_from_logits(const std::vector<float>& logits, int y) {
    double best_other = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < logits.size(); ++k)
        if (static_cast<int>(k) != y) best_other = std::max(best_other, static_cast<double>(logits[k]));
    return static_cast<double>(logits[static_cast<std::size_t>(y)]) - best_other;
}

double output_margin(const Network& net, const std::vector<float>& x, int y) {
    return output_margin_from_logits(forward(net, x).output(), y);
}

double aggregate_output_margin(const Network& net, const LabeledDataset& data) {
    std::vector<double> margins;
    margins.reserve(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        double m = output_margin(net, data.inputs[i], data.labels[i]);
        if (m > 0.0) margins.push_back(m);
    }
    if (margins.empty())
        throw NonPositiveMargin("no correctly classified point; output margin undefined");
    std::sort(margins.begin(), margins.end());
    std::size_t n = margins.size();
    return n % 2 ? margins[n / 2] : 0.5 * (margins[n / 2 - 1] + margins[n / 2]);
}

double l2_norm_sq(const std::vector<float>& v) {
    double acc = 0.0;
    for (float x : v) acc += static_cast<double>(x) * x;
    return acc;
}

double l2_norm(const std::vector<float>& v) { return std::sqrt(l2_norm_sq(v)); }

double dot(const std::vector<float>& a, const std::vector<float>& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += static_cast<double>(a[i]) * b[i];
    return acc;
}

}  // namespace gmeasure
