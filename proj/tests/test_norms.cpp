#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "gmeasure/norms.hpp"
#include "test_support.hpp"

using namespace gmeasure;
using namespace gmtest;

namespace {

double svd_largest(const Eigen::MatrixXd& m) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
    return svd.singularValues()(0);
}

Eigen::MatrixXd dense_to_eigen(const DenseLayer& d) {
    Eigen::MatrixXd m(d.out_dim, d.in_dim);
    for (int r = 0; r < d.out_dim; ++r)
        for (int c = 0; c < d.in_dim; ++c)
            m(r, c) = d.weight[static_cast<std::size_t>(r) * d.in_dim + c];
    return m;
}

// Materialize the conv operator column by column through the independent
// nested-loop oracle.
Eigen::MatrixXd conv_to_eigen(const Conv2dLayer& c, int ih, int iw) {
    const std::size_t in_dim = static_cast<std::size_t>(c.in_channels) * ih * iw;
    std::vector<float> basis(in_dim, 0.0f);
    basis[0] = 1.0f;
    std::size_t out_dim = naive_conv(c, basis, ih, iw, false).size();
    basis[0] = 0.0f;
    Eigen::MatrixXd m(out_dim, in_dim);
    for (std::size_t col = 0; col < in_dim; ++col) {
        basis[col] = 1.0f;
        std::vector<float> column = naive_conv(c, basis, ih, iw, false);
        basis[col] = 0.0f;
        for (std::size_t row = 0; row < out_dim; ++row) m(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(col)) = column[row];
    }
    return m;
}

}  // namespace

TEST_CASE("spectral_norm: diagonal matrix") {
    Network dummy({2}, {Layer{make_dense(2, 2, {3, 0, 0, 1}, {0, 0})}}, 2);
    const auto& d = std::get<DenseLayer>(dummy.layers()[0]);
    PowerMethodConfig cfg;
    cfg.seed = 3;
    SpectralNormResult res = spectral_norm(dense_operator(d), cfg);
    CHECK(res.converged);
    CHECK(res.value == doctest::Approx(3.0).epsilon(1e-6));
}

TEST_CASE("spectral_norm: bias is excluded") {
    DenseLayer d = make_dense(2, 2, {2, 0, 0, 2}, {100, -100});
    PowerMethodConfig cfg;
    cfg.seed = 5;
    CHECK(spectral_norm(dense_operator(d), cfg).value == doctest::Approx(2.0).epsilon(1e-6));
}

TEST_CASE("spectral_norm: zero operator returns 0 after reseeding") {
    DenseLayer d = make_dense(3, 3, std::vector<float>(9, 0.0f), {0, 0, 0});
    PowerMethodConfig cfg;
    cfg.seed = 7;
    SpectralNormResult res = spectral_norm(dense_operator(d), cfg);
    CHECK(res.value == 0.0);
}

TEST_CASE("spectral_norm: dense matches Eigen SVD on random matrices") {
    Rng rng(151);
    for (int trial = 0; trial < 30; ++trial) {
        int out = 2 + static_cast<int>(rng.uniform_index(63));
        int in = 2 + static_cast<int>(rng.uniform_index(63));
        DenseLayer d = random_dense(out, in, rng);
        PowerMethodConfig cfg;
        cfg.seed = 11 + static_cast<std::uint64_t>(trial);
        cfg.max_iters = 2000;
        cfg.rel_tolerance = 1e-9;
        double got = spectral_norm(dense_operator(d), cfg).value;
        double expect = svd_largest(dense_to_eigen(d));
        CHECK(got == doctest::Approx(expect).epsilon(1e-4));
    }
}

TEST_CASE("spectral_norm: 1x1 conv kernel equals |c|") {
    Conv2dLayer c;
    c.out_channels = 1;
    c.in_channels = 1;
    c.kernel_h = c.kernel_w = 1;
    c.stride = 1;
    c.padding = 0;
    c.kernel = {-2.5f};
    c.bias = {0.0f};
    PowerMethodConfig cfg;
    cfg.seed = 13;
    CHECK(spectral_norm(conv_operator(c, {1, 4, 4}), cfg).value ==
          doctest::Approx(2.5).epsilon(1e-6));
}

TEST_CASE("spectral_norm: conv matches SVD of the materialized matrix") {
    Rng rng(157);
    for (int trial = 0; trial < 8; ++trial) {
        int in_c = 1 + static_cast<int>(rng.uniform_index(3));
        int out_c = 1 + static_cast<int>(rng.uniform_index(3));
        int k = 1 + 2 * static_cast<int>(rng.uniform_index(2));  // 1 or 3
        int pad = static_cast<int>(rng.uniform_index(2));
        Conv2dLayer c = random_conv(out_c, in_c, k, 1, pad, rng);
        PowerMethodConfig cfg;
        cfg.seed = 17 + static_cast<std::uint64_t>(trial);
        cfg.max_iters = 2000;
        cfg.rel_tolerance = 1e-9;
        double got = spectral_norm(conv_operator(c, {in_c, 8, 8}), cfg).value;
        double expect = svd_largest(conv_to_eigen(c, 8, 8));
        CHECK(got == doctest::Approx(expect).epsilon(1e-4));
    }
}

TEST_CASE("operators: adjoint identity <Av, w> == <v, A^T w>") {
    Rng rng(163);
    SUBCASE("dense") {
        for (int trial = 0; trial < 50; ++trial) {
            DenseLayer d = random_dense(2 + static_cast<int>(rng.uniform_index(15)),
                                        2 + static_cast<int>(rng.uniform_index(15)), rng);
            LinearOperatorHandle op = dense_operator(d);
            std::vector<float> v = random_input(static_cast<std::size_t>(op.in_dim), rng);
            std::vector<float> w = random_input(static_cast<std::size_t>(op.out_dim), rng);
            double lhs = dot(op.apply(v), w);
            double rhs = dot(v, op.adjoint(w));
            CHECK(lhs == doctest::Approx(rhs).epsilon(1e-5).scale(std::abs(lhs) + 1.0));
        }
    }
    SUBCASE("conv") {
        for (int trial = 0; trial < 50; ++trial) {
            int in_c = 1 + static_cast<int>(rng.uniform_index(3));
            Conv2dLayer c = random_conv(1 + static_cast<int>(rng.uniform_index(3)), in_c, 3, 1,
                                        static_cast<int>(rng.uniform_index(2)), rng);
            LinearOperatorHandle op = conv_operator(c, {in_c, 6, 6});
            std::vector<float> v = random_input(static_cast<std::size_t>(op.in_dim), rng);
            std::vector<float> w = random_input(static_cast<std::size_t>(op.out_dim), rng);
            double lhs = dot(op.apply(v), w);
            double rhs = dot(v, op.adjoint(w));
            CHECK(lhs == doctest::Approx(rhs).epsilon(1e-5).scale(std::abs(lhs) + 1.0));
        }
    }
}

TEST_CASE("spectral_norm: bounded by Frobenius norm, at least max column norm") {
    Rng rng(167);
    for (int trial = 0; trial < 10; ++trial) {
        DenseLayer d = random_dense(6, 9, rng);
        PowerMethodConfig cfg;
        cfg.seed = 19 + static_cast<std::uint64_t>(trial);
        cfg.max_iters = 2000;
        cfg.rel_tolerance = 1e-9;
        double sigma = spectral_norm(dense_operator(d), cfg).value;
        double fro_sq = 0.0;
        for (float w : d.weight) fro_sq += static_cast<double>(w) * w;
        CHECK(sigma <= std::sqrt(fro_sq) + 1e-6);
        for (int col = 0; col < d.in_dim; ++col) {
            double col_sq = 0.0;
            for (int row = 0; row < d.out_dim; ++row) {
                double w = d.weight[static_cast<std::size_t>(row) * d.in_dim + col];
                col_sq += w * w;
            }
            CHECK(sigma >= std::sqrt(col_sq) - 1e-5);
        }
    }
}

TEST_CASE("fast_log_spec: hand value log 4") {
    // two layers with spectral norm 2, gamma_out = 1:
    // (1 - 1/2)(log 4 + log 4) - log 1 = log 4
    Network net({2},
                {Layer{make_dense(2, 2, {2, 0, 0, 2}, {0, 0})}, Layer{ReluLayer{}},
                 Layer{make_dense(2, 2, {2, 0, 0, 2}, {0, 0})}},
                2);
    LabeledDataset data;
    // logits at (0.25, 0): (1, 0) -> margin 1
    data.inputs = {{0.25f, 0.0f}};
    data.labels = {0};
    data.input_shape = {2};
    data.num_classes = 2;
    PowerMethodConfig cfg;
    cfg.seed = 23;
    FastLogSpecResult res = fast_log_spec(net, data, cfg);
    CHECK(res.all_converged);
    REQUIRE(res.layer_norms.size() == 2);
    CHECK(res.layer_norms[0] == doctest::Approx(2.0).epsilon(1e-6));
    CHECK(res.value == doctest::Approx(std::log(4.0)).epsilon(1e-6));
}

TEST_CASE("fast_log_spec: single layer reduces to -log(gamma^2)") {
    Network net({2}, {Layer{make_dense(2, 2, {3, 0, 0, 1}, {0, 0})}}, 2);
    LabeledDataset data;
    data.inputs = {{1.0f, 0.0f}};  // logits (3, 0), margin 3
    data.labels = {0};
    data.input_shape = {2};
    data.num_classes = 2;
    PowerMethodConfig cfg;
    cfg.seed = 29;
    CHECK(fast_log_spec(net, data, cfg).value == doctest::Approx(-std::log(9.0)).epsilon(1e-6));
}

TEST_CASE("fast_log_spec: doubling all weights shifts by a computable amount") {
    Rng rng(173);
    Network net = random_mlp({4, 8, 3}, rng, /*zero_bias=*/true);
    std::vector<Layer> doubled_layers;
    for (const Layer& layer : net.layers()) {
        Layer copy = layer;
        if (auto* d = std::get_if<DenseLayer>(&copy))
            for (auto& w : d->weight) w *= 2.0f;
        doubled_layers.push_back(std::move(copy));
    }
    Network doubled({4}, std::move(doubled_layers), 3);

    LabeledDataset data;
    data.input_shape = {4};
    data.num_classes = 3;
    for (int i = 0; i < 6; ++i) {
        std::vector<float> x = random_input(4, rng);
        data.labels.push_back(argmax(forward(net, x).output()));
        data.inputs.push_back(std::move(x));
    }
    PowerMethodConfig cfg;
    cfg.seed = 31;
    cfg.max_iters = 2000;
    cfg.rel_tolerance = 1e-9;
    // l = 2: norms term gains (1 - 1/2) * 2 * log 4 = log 4; margins scale by
    // 4 so -log(gamma^2) drops by log 16; net shift = -log 4
    double base = fast_log_spec(net, data, cfg).value;
    double shifted = fast_log_spec(doubled, data, cfg).value;
    CHECK(shifted - base == doctest::Approx(-std::log(4.0)).epsilon(1e-4));
}

TEST_CASE("fast_log_spec: zero spectral norm raises") {
    Network net({2},
                {Layer{make_dense(2, 2, {0, 0, 0, 0}, {1, 0})}, Layer{ReluLayer{}},
                 Layer{make_dense(2, 2, {1, 0, 0, 1}, {0, 0})}},
                2);
    LabeledDataset data;
    data.inputs = {{1.0f, 0.0f}};  // logits (1, 0) via the bias path
    data.labels = {0};
    data.input_shape = {2};
    data.num_classes = 2;
    PowerMethodConfig cfg;
    CHECK_THROWS_AS(fast_log_spec(net, data, cfg), ValidationError);
}
