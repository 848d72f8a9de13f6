#include "gmeasure/margin.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "gmeasure/hash.hpp"
#include "gmeasure/parallel.hpp"
#include "gmeasure/rng.hpp"

namespace gmeasure {

double PerturbationVector::norm() const {
    double acc = 0.0;
    for (const auto& d : deltas) acc += l2_norm_sq(d);
    return std::sqrt(acc);
}

bool PerturbationVector::is_zero() const {
    for (const auto& d : deltas)
        for (float v : d)
            if (v != 0.0f) return false;
    return true;
}

double input_layer_margin(const Network& net, const std::vector<float>& x, int y) {
    ActivationTrace trace = forward(net, x);
    const std::vector<float>& logits = trace.output();
    if (argmax(logits) != y) return 0.0;
    const int classes = static_cast<int>(logits.size());
    double best = std::numeric_limits<double>::infinity();
    bool any_usable = false;
    std::vector<float> cotangent(logits.size(), 0.0f);
    for (int other = 0; other < classes; ++other) {
        if (other == y) continue;
        cotangent[static_cast<std::size_t>(y)] = 1.0f;
        cotangent[static_cast<std::size_t>(other)] = -1.0f;
        std::vector<float> grad = vjp(net, trace, cotangent, kWrtInput);
        cotangent[static_cast<std::size_t>(y)] = 0.0f;
        cotangent[static_cast<std::size_t>(other)] = 0.0f;
        double grad_norm = l2_norm(grad);
        if (grad_norm < 1e-12) continue;
        any_usable = true;
        double gap = static_cast<double>(logits[static_cast<std::size_t>(y)]) -
                     logits[static_cast<std::size_t>(other)];
        best = std::min(best, std::max(0.0, gap / grad_norm));
    }
    if (!any_usable)
        throw DegenerateGradient("all class-pair gradients vanish; Taylor margin undefined");
    return best;
}

namespace {

struct PerturbedRecord {
    std::vector<std::vector<float>> values;  // values[k+1] = perturbed output of layer k
    std::vector<double> point_norms;         // ||g_{j-1}|| per affine ordinal j
    std::vector<int> prev_point;             // values index of g_{j-1} per ordinal
};

PerturbedRecord perturbed_forward_record(const Network& net, const std::vector<float>& x,
                                         const PerturbationVector& delta) {
    PerturbedRecord rec;
    rec.values.reserve(net.layers().size() + 1);
    rec.values.push_back(x);
    int prev_point = 0;  // values index of the previous perturbation point
    int ordinal = 0;
    for (std::size_t k = 0; k < net.layers().size(); ++k) {
        std::vector<float> out =
            apply_layer(net.layers()[k], rec.values.back(), net.layer_shapes()[k]);
        if (is_affine(net.layers()[k])) {
            double norm = l2_norm(rec.values[static_cast<std::size_t>(prev_point)]);
            const auto& d = delta.deltas.at(static_cast<std::size_t>(ordinal));
            if (d.size() != out.size())
                throw ShapeError("perturbation " + std::to_string(ordinal) + " has " +
                                 std::to_string(d.size()) + " values, layer output has " +
                                 std::to_string(out.size()));
            for (std::size_t t = 0; t < out.size(); ++t)
                out[t] = static_cast<float>(out[t] + norm * d[t]);
            rec.point_norms.push_back(norm);
            rec.prev_point.push_back(prev_point);
            prev_point = static_cast<int>(k) + 1;
            ++ordinal;
        }
        rec.values.push_back(std::move(out));
    }
    return rec;
}

// Gradient of <cotangent, F(x, delta)> with respect to every delta_j,
// accounting for the ||g_{j-1}|| scale factors.
std::vector<std::vector<float>> perturbed_backward(const Network& net,
                                                   const PerturbationVector& delta,
                                                   const PerturbedRecord& rec,
                                                   const std::vector<float>& cotangent) {
    const int num_layers = static_cast<int>(net.layers().size());
    std::vector<std::vector<float>> grad_delta(delta.deltas.size());
    std::map<int, std::vector<float>> pending;  // position -> extra cotangent
    std::vector<float> grad = cotangent;
    int ordinal = net.depth() - 1;
    for (int k = num_layers - 1; k >= 0; --k) {
        int pos = k + 1;
        if (auto it = pending.find(pos); it != pending.end()) {
            for (std::size_t t = 0; t < grad.size(); ++t) grad[t] += it->second[t];
            pending.erase(it);
        }
        if (is_affine(net.layers()[static_cast<std::size_t>(k)])) {
            double norm = rec.point_norms[static_cast<std::size_t>(ordinal)];
            const auto& d = delta.deltas[static_cast<std::size_t>(ordinal)];
            auto& gd = grad_delta[static_cast<std::size_t>(ordinal)];
            gd.resize(d.size());
            for (std::size_t t = 0; t < d.size(); ++t)
                gd[t] = static_cast<float>(grad[t] * norm);
            if (norm > 0.0) {
                // d||g_{j-1}||/dg_{j-1} routed to the previous perturbation point
                int prev = rec.prev_point[static_cast<std::size_t>(ordinal)];
                const auto& gprev = rec.values[static_cast<std::size_t>(prev)];
                double coeff = dot(d, grad) / norm;
                auto& slot = pending[prev];
                if (slot.empty()) slot.assign(gprev.size(), 0.0f);
                for (std::size_t t = 0; t < gprev.size(); ++t)
                    slot[t] += static_cast<float>(coeff * gprev[t]);
            }
            --ordinal;
        }
        grad = layer_backward(net.layers()[static_cast<std::size_t>(k)], net.layer_shapes()[static_cast<std::size_t>(k)],
                              rec.values[static_cast<std::size_t>(k)],
                              rec.values[static_cast<std::size_t>(k) + 1], grad);
    }
    return grad_delta;
}

std::vector<float> softmax_minus_onehot(const std::vector<float>& logits, int y) {
    double max_logit = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    std::vector<double> e(logits.size());
    for (std::size_t k = 0; k < logits.size(); ++k) {
        e[k] = std::exp(static_cast<double>(logits[k]) - max_logit);
        z += e[k];
    }
    std::vector<float> g(logits.size());
    for (std::size_t k = 0; k < logits.size(); ++k)
        g[k] = static_cast<float>(e[k] / z - (static_cast<int>(k) == y ? 1.0 : 0.0));
    return g;
}

PerturbationVector zero_perturbation(const Network& net) {
    PerturbationVector p;
    p.deltas.resize(static_cast<std::size_t>(net.depth()));
    for (int j = 0; j < net.depth(); ++j)
        p.deltas[static_cast<std::size_t>(j)]
            .assign(static_cast<std::size_t>(net.affine_out_dim(j)), 0.0f);
    return p;
}

void scale_perturbation(PerturbationVector& p, double factor) {
    for (auto& d : p.deltas)
        for (auto& v : d) v = static_cast<float>(v * factor);
}

bool flips(const Network& net, const std::vector<float>& x, int y,
           const PerturbationVector& delta, int& evals) {
    ++evals;
    return argmax(perturbed_forward(net, x, delta)) != y;
}

// Shrinks a feasible perturbation along its ray to the smallest multiple that
// still flips the prediction; the returned perturbation is always verified.
void shrink_and_update_best(const Network& net, const std::vector<float>& x, int y,
                            PerturbationVector delta, AllLayerMarginResult& best, int& evals) {
    double lo = 0.0, hi = 1.0;  // hi stays feasible throughout
    for (int it = 0; it < 40; ++it) {
        double mid = 0.5 * (lo + hi);
        PerturbationVector trial = delta;
        scale_perturbation(trial, mid);
        if (flips(net, x, y, trial, evals))
            hi = mid;
        else
            lo = mid;
    }
    scale_perturbation(delta, hi);
    double norm = delta.norm();
    if (!best.solved || norm < best.margin) {
        best.solved = true;
        best.margin = norm;
        best.perturbation = std::move(delta);
    }
}

}  // namespace

std::vector<float> perturbed_forward(const Network& net, const std::vector<float>& x,
                                     const PerturbationVector& delta) {
    return perturbed_forward_record(net, x, delta).values.back();
}

AllLayerMarginResult all_layer_margin(const Network& net, const std::vector<float>& x, int y,
                                      const MarginSolverConfig& cfg,
                                      std::uint64_t example_index) {
    AllLayerMarginResult best;
    best.margin = std::numeric_limits<double>::infinity();
    best.perturbation = zero_perturbation(net);

    ActivationTrace clean = forward(net, x);
    if (argmax(clean.output()) != y) {
        best.margin = 0.0;
        best.solved = true;
        return best;
    }

    const int depth = net.depth();
    // Outcome-independent radius schedule: ascent runs at every radius and the
    // smallest verified perturbation wins, so more steps or restarts can only
    // improve the result.
    constexpr int kNumRadii = 12;
    for (int ri = 0; ri < kNumRadii; ++ri) {
        const double radius = 10.0 / static_cast<double>(1 << ri);
        for (int restart = 0; restart < cfg.num_restarts; ++restart) {
            PerturbationVector delta = zero_perturbation(net);
            if (restart == 0) {
                // warm start: push the true logit down and the runner-up logit
                // up at the last affine layer
                const std::vector<float>& logits = clean.output();
                int runner_up = -1;
                double runner_val = -std::numeric_limits<double>::infinity();
                for (std::size_t k = 0; k < logits.size(); ++k)
                    if (static_cast<int>(k) != y && logits[k] > runner_val) {
                        runner_val = logits[k];
                        runner_up = static_cast<int>(k);
                    }
                auto& last = delta.deltas[static_cast<std::size_t>(depth - 1)];
                const double c = radius / std::sqrt(2.0);
                last[static_cast<std::size_t>(runner_up)] = static_cast<float>(c);
                last[static_cast<std::size_t>(y)] = static_cast<float>(-c);
            } else {
                Rng rng = Rng::keyed(cfg.seed, example_index,
                                     mix_key(static_cast<std::uint64_t>(ri),
                                             static_cast<std::uint64_t>(restart)));
                for (auto& d : delta.deltas)
                    for (auto& v : d) v = static_cast<float>(rng.normal());
                double n = delta.norm();
                if (n > 0.0) scale_perturbation(delta, radius / n);
            }
            for (int step = 0; step < cfg.max_steps; ++step) {
                PerturbedRecord rec = perturbed_forward_record(net, x, delta);
                ++best.ascent_evals;
                if (argmax(rec.values.back()) != y) {
                    shrink_and_update_best(net, x, y, delta, best, best.ascent_evals);
                    break;
                }
                std::vector<float> cot = softmax_minus_onehot(rec.values.back(), y);
                std::vector<std::vector<float>> grad = perturbed_backward(net, delta, rec, cot);
                double gnorm_sq = 0.0;
                for (const auto& g : grad) gnorm_sq += l2_norm_sq(g);
                double gnorm = std::sqrt(gnorm_sq);
                if (gnorm < 1e-30) break;
                double lr = cfg.step_size * radius / gnorm;
                for (std::size_t j = 0; j < delta.deltas.size(); ++j)
                    for (std::size_t t = 0; t < delta.deltas[j].size(); ++t)
                        delta.deltas[j][t] =
                            static_cast<float>(delta.deltas[j][t] + lr * grad[j][t]);
                double dn = delta.norm();
                if (dn > radius) scale_perturbation(delta, radius / dn);
            }
        }
    }
    if (!best.solved) best.margin = std::numeric_limits<double>::infinity();
    return best;
}

double margin_jacobian(const Network& net, const LabeledDataset& data, int workers) {
    data.validate();
    const double gamma = aggregate_output_margin(net, data);
    const int depth = net.depth();
    const double d_out = static_cast<double>(net.num_classes());
    const std::size_t n = data.size();
    std::vector<double> per_example(n, 0.0);
    parallel_for(n, workers, [&](std::size_t i) {
        ActivationTrace trace = forward(net, data.inputs[i]);
        double acc = 0.0;
        for (int j = 0; j < depth; ++j) {
            double fro_sq = jacobian_frobenius_sq(net, trace, net.activation_site(j));
            acc += fro_sq / (d_out * static_cast<double>(net.affine_out_dim(j)));
        }
        per_example[i] = acc;
    });
    double total = 0.0;
    for (double v : per_example) total += v;
    const double l = static_cast<double>(depth);
    double term1 = std::pow(l / (gamma * gamma), 1.0 / l);
    double term2 = total / (static_cast<double>(n) * l * l * gamma);
    return term1 + term2;
}

namespace {

std::vector<std::size_t> subsample_indices(std::size_t n, int subsample, std::uint64_t seed) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    if (subsample > 0 && static_cast<std::size_t>(subsample) < n) {
        Rng rng = Rng::keyed(seed, 0x5ab5a401eULL);
        rng.shuffle(idx);
        idx.resize(static_cast<std::size_t>(subsample));
        std::sort(idx.begin(), idx.end());
    }
    return idx;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

double input_layer_margin_measure(const Network& net, const LabeledDataset& data,
                                  const MarginAggregateConfig& agg) {
    data.validate();
    auto idx = subsample_indices(data.size(), agg.subsample, agg.seed);
    std::vector<double> margins(idx.size());
    parallel_for(idx.size(), agg.workers, [&](std::size_t t) {
        try {
            margins[t] = input_layer_margin(net, data.inputs[idx[t]], data.labels[idx[t]]);
        } catch (const DegenerateGradient&) {
            // locally flat examples carry no first-order signal; drop them
            margins[t] = std::numeric_limits<double>::quiet_NaN();
        }
    });
    std::vector<double> usable;
    for (double m : margins)
        if (!std::isnan(m)) usable.push_back(m);
    if (usable.empty())
        throw DegenerateGradient("every subsampled example has vanishing class-pair gradients");
    return median(std::move(usable));
}

double all_layer_margin_measure(const Network& net, const LabeledDataset& data,
                                const MarginSolverConfig& cfg,
                                const MarginAggregateConfig& agg) {
    data.validate();
    auto idx = subsample_indices(data.size(), agg.subsample, agg.seed);
    std::vector<double> margins(idx.size());
    parallel_for(idx.size(), agg.workers, [&](std::size_t t) {
        margins[t] = all_layer_margin(net, data.inputs[idx[t]], data.labels[idx[t]], cfg,
                                      example_key(data.inputs[idx[t]])).margin;
    });
    return median(std::move(margins));
}

}  // namespace gmeasure
