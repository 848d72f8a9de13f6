#pragma once

#include <cstddef>
#include <string>
#include <variant>
#include <vector>

#include "gmeasure/errors.hpp"

namespace gmeasure {

using Shape = std::vector<int>;  // {d} for vectors, {c, h, w} for feature maps

inline std::size_t shape_size(const Shape& s) {
    std::size_t n = 1;
    for (int d : s) n *= static_cast<std::size_t>(d);
    return n;
}

std::string shape_to_string(const Shape& s);

struct DenseLayer {
    int out_dim = 0;
    int in_dim = 0;
    std::vector<float> weight;  // row-major, out_dim x in_dim
    std::vector<float> bias;    // out_dim
};

struct Conv2dLayer {
    int out_channels = 0;
    int in_channels = 0;
    int kernel_h = 0;
    int kernel_w = 0;
    int stride = 1;
    int padding = 0;
    std::vector<float> kernel;  // out_c x in_c x kh x kw
    std::vector<float> bias;    // out_c
};

struct ReluLayer {};

struct FlattenLayer {};

struct AvgPoolLayer {
    int window = 2;
    int stride = 2;
};

using Layer = std::variant<DenseLayer, Conv2dLayer, ReluLayer, FlattenLayer, AvgPoolLayer>;

inline bool is_affine(const Layer& l) {
    return std::holds_alternative<DenseLayer>(l) || std::holds_alternative<Conv2dLayer>(l);
}

const char* layer_type_name(const Layer& l);

// Feed-forward network: an ordered layer list plus its input shape.
// Immutable after validation; forward/vjp are pure.
class Network {
public:
    Network() = default;
    Network(Shape input_shape, std::vector<Layer> layers, int num_classes);

    const Shape& input_shape() const { return input_shape_; }
    const std::vector<Layer>& layers() const { return layers_; }
    int num_classes() const { return num_classes_; }
    std::size_t input_size() const { return shape_size(input_shape_); }

    // layer_shapes()[k] is the input shape of layer k; back() is the output shape.
    const std::vector<Shape>& layer_shapes() const { return layer_shapes_; }

    // Indices (into layers()) of the affine layers, in order.
    const std::vector<int>& affine_layers() const { return affine_indices_; }
    int depth() const { return static_cast<int>(affine_indices_.size()); }

    // Layer index whose output is the activation a_j of the j-th affine layer
    // (0-based j): the ReLU directly following it when present, else the
    // affine layer itself.
    int activation_site(int affine_ordinal) const;

    // Output width of the j-th affine layer (0-based).
    int affine_out_dim(int affine_ordinal) const;

private:
    void validate();

    Shape input_shape_;
    std::vector<Layer> layers_;
    int num_classes_ = 0;
    std::vector<Shape> layer_shapes_;
    std::vector<int> affine_indices_;
};

// Forward-pass record: values[0] is the input, values[k+1] the output of
// layer k. Pre-activations z_j live at the affine layer outputs, activations
// a_j at the activation sites.
struct ActivationTrace {
    std::vector<std::vector<float>> values;

    const std::vector<float>& input() const { return values.front(); }
    const std::vector<float>& output() const { return values.back(); }
    const std::vector<float>& layer_output(int layer_index) const {
        return values[static_cast<std::size_t>(layer_index) + 1];
    }
};

struct LabeledDataset {
    std::vector<std::vector<float>> inputs;
    std::vector<int> labels;
    Shape input_shape;
    int num_classes = 0;

    std::size_t size() const { return inputs.size(); }
    void validate() const;
};

// Layer index denoting "with respect to the network input" in vjp calls.
inline constexpr int kWrtInput = -1;

ActivationTrace forward(const Network& net, const std::vector<float>& x);

// Applies a single layer to an input; used by forward and by the perturbed
// composition of the all-layer margin.
std::vector<float> apply_layer(const Layer& layer, const std::vector<float>& in,
                               const Shape& in_shape);

// Pulls a cotangent at layer k's output back to layer k's input. Needs the
// layer's forward input (and output for ReLU masking).
std::vector<float> layer_backward(const Layer& layer, const Shape& in_shape,
                                  const std::vector<float>& in, const std::vector<float>& out,
                                  const std::vector<float>& grad_out);

// cotangent^T * (d f / d a), where a is the output of layer `wrt`
// (kWrtInput for the network input).
std::vector<float> vjp(const Network& net, const ActivationTrace& trace,
                       const std::vector<float>& cotangent, int wrt);

// ||d f(x) / d a||_F^2 via one vjp per output coordinate.
double jacobian_frobenius_sq(const Network& net, const ActivationTrace& trace, int wrt);

// f(x)_y - max_{y' != y} f(x)_{y'}; negative for misclassified points.
double output_margin(const Network& net, const std::vector<float>& x, int y);
double output_margin_from_logits(const std::vector<float>& logits, int y);

int argmax(const std::vector<float>& v);

// Dataset aggregate of the output margin: median over correctly classified
// points. Throws NonPositiveMargin if no point is correctly classified.
double aggregate_output_margin(const Network& net, const LabeledDataset& data);

double l2_norm(const std::vector<float>& v);
double l2_norm_sq(const std::vector<float>& v);
double dot(const std::vector<float>& a, const std::vector<float>& b);

}  // namespace gmeasure
