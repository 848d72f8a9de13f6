#include "gmeasure/noise.hpp"

#include <cmath>
#include <utility>

#include "gmeasure/hash.hpp"
#include "gmeasure/parallel.hpp"
#include "gmeasure/rng.hpp"

namespace gmeasure {

namespace {

// One noise draw applied to the activation feeding affine layer `layer_idx`:
// z' = W(a + sqrt(nu/h) * ||a|| * Y) + b.
double beta_one_draw(const Network& net, int layer_idx, const std::vector<float>& act_in,
                     const std::vector<float>& z, double z_norm_sq, double nu, Rng& rng) {
    const double a_norm = l2_norm(act_in);
    if (a_norm == 0.0) return 0.0;  // perturbation vanishes
    const double scale = std::sqrt(nu / static_cast<double>(act_in.size())) * a_norm;
    std::vector<float> perturbed(act_in.size());
    for (std::size_t k = 0; k < act_in.size(); ++k)
        perturbed[k] = static_cast<float>(act_in[k] + scale * rng.normal());
    std::vector<float> z_pert = apply_layer(net.layers()[static_cast<std::size_t>(layer_idx)],
                                            perturbed,
                                            net.layer_shapes()[static_cast<std::size_t>(layer_idx)]);
    double diff_sq = 0.0;
    for (std::size_t k = 0; k < z.size(); ++k) {
        double d = static_cast<double>(z_pert[k]) - z[k];
        diff_sq += d * d;
    }
    return diff_sq / (nu * z_norm_sq);
}

}  // namespace

double beta_layer(const Network& net, const ActivationTrace& trace, int affine_ordinal,
                  const NoiseConfig& cfg, std::uint64_t example_index) {
    const int layer_idx = net.affine_layers().at(static_cast<std::size_t>(affine_ordinal));
    const std::vector<float>& act_in = trace.values[static_cast<std::size_t>(layer_idx)];
    const std::vector<float>& z = trace.layer_output(layer_idx);
    const double z_norm_sq = l2_norm_sq(z);
    if (z_norm_sq == 0.0)
        throw ZeroPreActivation("affine layer " + std::to_string(affine_ordinal) +
                                " has zero pre-activation norm");
    Rng rng = Rng::keyed(cfg.seed, example_index, static_cast<std::uint64_t>(affine_ordinal));
    double acc = 0.0;
    for (int s = 0; s < cfg.num_noise_samples; ++s)
        acc += beta_one_draw(net, layer_idx, act_in, z, z_norm_sq, cfg.nu, rng);
    return acc / cfg.num_noise_samples;
}

double beta_output(const Network& net, const ActivationTrace& trace, const NoiseConfig& cfg,
                   std::uint64_t example_index) {
    const std::vector<float>& x = trace.input();
    const std::vector<float>& logits = trace.output();
    const double out_norm_sq = l2_norm_sq(logits);
    if (out_norm_sq == 0.0) throw ZeroLogits("zero logits; output noise stability undefined");
    const double x_norm = l2_norm(x);
    if (x_norm == 0.0) return 0.0;
    // same stream as the first affine layer: both perturb a_0 = x, so a
    // single-dense-layer network gets identical draws either way
    Rng rng = Rng::keyed(cfg.seed, example_index, 0);
    const double scale = std::sqrt(cfg.nu / static_cast<double>(x.size())) * x_norm;
    double acc = 0.0;
    std::vector<float> perturbed(x.size());
    for (int s = 0; s < cfg.num_noise_samples; ++s) {
        for (std::size_t k = 0; k < x.size(); ++k)
            perturbed[k] = static_cast<float>(x[k] + scale * rng.normal());
        const std::vector<float> out = forward(net, perturbed).output();
        double diff_sq = 0.0;
        for (std::size_t k = 0; k < out.size(); ++k) {
            double d = static_cast<double>(out[k]) - logits[k];
            diff_sq += d * d;
        }
        acc += diff_sq / (cfg.nu * out_norm_sq);
    }
    return acc / cfg.num_noise_samples;
}

namespace {

// Fills per_layer with per-(example, affine layer) betas; reduction happens
// afterwards in canonical order so worker count cannot change results.
std::vector<std::vector<double>> beta_table(const Network& net, const LabeledDataset& data,
                                            const NoiseConfig& cfg) {
    data.validate();
    const int depth = net.depth();
    std::vector<std::vector<double>> table(data.size(),
                                           std::vector<double>(static_cast<std::size_t>(depth)));
    parallel_for(data.size(), cfg.workers, [&](std::size_t i) {
        ActivationTrace trace = forward(net, data.inputs[i]);
        const std::uint64_t key = example_key(data.inputs[i]);
        for (int j = 0; j < depth; ++j)
            table[i][static_cast<std::size_t>(j)] = beta_layer(net, trace, j, cfg, key);
    });
    return table;
}

std::vector<std::vector<double>> beta_output_table(const Network& net, const LabeledDataset& data,
                                                   const NoiseConfig& cfg) {
    data.validate();
    std::vector<std::vector<double>> table(data.size(), std::vector<double>(1));
    parallel_for(data.size(), cfg.workers, [&](std::size_t i) {
        ActivationTrace trace = forward(net, data.inputs[i]);
        table[i][0] = beta_output(net, trace, cfg, example_key(data.inputs[i]));
    });
    return table;
}

double mean_of(const std::vector<std::vector<double>>& table) {
    double acc = 0.0;
    std::size_t count = 0;
    for (const auto& row : table)
        for (double b : row) {
            acc += b;
            ++count;
        }
    return acc / static_cast<double>(count);
}

double mean_log_of(const std::vector<std::vector<double>>& table) {
    double acc = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < table.size(); ++i)
        for (std::size_t j = 0; j < table[i].size(); ++j) {
            if (table[i][j] <= 0.0)
                throw NonPositiveBeta("beta <= 0 at example " + std::to_string(i) +
                                      ", layer " + std::to_string(j));
            acc += std::log(table[i][j]);
            ++count;
        }
    return acc / static_cast<double>(count);
}

}  // namespace

NoiseStabilityResult mean_noise_stability(const Network& net, const LabeledDataset& data,
                                          const NoiseConfig& cfg) {
    NoiseStabilityResult res;
    res.per_layer = beta_table(net, data, cfg);
    res.aggregate = mean_of(res.per_layer);
    res.measure_name = "mean-noise-stability";
    return res;
}

NoiseStabilityResult geometric_mean_noise_stability(const Network& net,
                                                    const LabeledDataset& data,
                                                    const NoiseConfig& cfg) {
    NoiseStabilityResult res;
    res.per_layer = beta_table(net, data, cfg);
    // mean of logs, no closing exponentiation
    res.aggregate = mean_log_of(res.per_layer);
    res.measure_name = "geometric-mean-noise-stability";
    return res;
}

std::pair<NoiseStabilityResult, NoiseStabilityResult> noise_stability_output_measures(
    const Network& net, const LabeledDataset& data, const NoiseConfig& cfg) {
    std::vector<std::vector<double>> table = beta_output_table(net, data, cfg);
    NoiseStabilityResult mean_res;
    mean_res.per_layer = table;
    mean_res.aggregate = mean_of(table);
    mean_res.measure_name = "mean-noise-stability-output";
    NoiseStabilityResult geo_res;
    geo_res.per_layer = table;
    geo_res.aggregate = mean_log_of(table);
    geo_res.measure_name = "geometric-mean-noise-stability-output";
    return {std::move(mean_res), std::move(geo_res)};
}

}  // namespace gmeasure
