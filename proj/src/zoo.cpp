#include "gmeasure/zoo.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "gmeasure/parallel.hpp"
#include "gmeasure/rng.hpp"

namespace gmeasure {

TaskGenerator parse_generator(const std::string& name) {
    if (name == "gaussian-blobs") return TaskGenerator::GaussianBlobs;
    if (name == "two-spirals") return TaskGenerator::TwoSpirals;
    if (name == "random-label-fraction") return TaskGenerator::RandomLabelFraction;
    throw ValidationError("unknown task generator '" + name + "'");
}

std::string generator_name(TaskGenerator g) {
    switch (g) {
        case TaskGenerator::GaussianBlobs: return "gaussian-blobs";
        case TaskGenerator::TwoSpirals: return "two-spirals";
        case TaskGenerator::RandomLabelFraction: return "random-label-fraction";
    }
    return "?";
}

namespace {

// Class means on a scaled simplex-like arrangement: class 0 at +3 on every
// coordinate, class 1 at -3, further classes on alternating axes.
std::vector<std::vector<double>> blob_means(int num_classes, int dim, Rng& rng) {
    std::vector<std::vector<double>> means(static_cast<std::size_t>(num_classes),
                                           std::vector<double>(static_cast<std::size_t>(dim)));
    if (num_classes == 2) {
        for (int d = 0; d < dim; ++d) {
            means[0][static_cast<std::size_t>(d)] = 3.0;
            means[1][static_cast<std::size_t>(d)] = -3.0;
        }
        return means;
    }
    for (int c = 0; c < num_classes; ++c) {
        double norm_sq = 0.0;
        for (int d = 0; d < dim; ++d) {
            means[static_cast<std::size_t>(c)][static_cast<std::size_t>(d)] = rng.normal();
            norm_sq += means[static_cast<std::size_t>(c)][static_cast<std::size_t>(d)] *
                       means[static_cast<std::size_t>(c)][static_cast<std::size_t>(d)];
        }
        double scale = 3.0 * std::sqrt(static_cast<double>(dim)) / std::sqrt(norm_sq);
        for (auto& v : means[static_cast<std::size_t>(c)]) v *= scale;
    }
    return means;
}

void fill_blobs(const SyntheticTaskSpec& spec, int n, Rng& rng, Rng& mean_rng,
                LabeledDataset& out) {
    static_cast<void>(mean_rng);
    Rng means_stream = Rng::keyed(spec.seed, 0xb10b5ULL);
    auto means = blob_means(spec.num_classes, spec.input_dim, means_stream);
    for (int i = 0; i < n; ++i) {
        int label = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(spec.num_classes)));
        std::vector<float> x(static_cast<std::size_t>(spec.input_dim));
        for (int d = 0; d < spec.input_dim; ++d)
            x[static_cast<std::size_t>(d)] = static_cast<float>(
                means[static_cast<std::size_t>(label)][static_cast<std::size_t>(d)] + rng.normal());
        out.inputs.push_back(std::move(x));
        out.labels.push_back(label);
    }
}

void fill_spirals(const SyntheticTaskSpec& spec, int n, Rng& rng, LabeledDataset& out) {
    // two interleaved spirals in the first two coordinates, the rest is noise
    for (int i = 0; i < n; ++i) {
        int label = static_cast<int>(rng.uniform_index(2));
        double t = 0.5 + 3.0 * rng.uniform();  // radians along the arm
        double r = t;
        double phase = label == 0 ? 0.0 : M_PI;
        std::vector<float> x(static_cast<std::size_t>(spec.input_dim), 0.0f);
        x[0] = static_cast<float>(r * std::cos(t + phase) + 0.1 * rng.normal());
        if (spec.input_dim > 1)
            x[1] = static_cast<float>(r * std::sin(t + phase) + 0.1 * rng.normal());
        for (int d = 2; d < spec.input_dim; ++d)
            x[static_cast<std::size_t>(d)] = static_cast<float>(0.1 * rng.normal());
        out.inputs.push_back(std::move(x));
        out.labels.push_back(label);
    }
}

void fill_random_rule(const SyntheticTaskSpec& spec, int n, Rng& rng, LabeledDataset& out) {
    // isotropic inputs labeled by a fixed random linear rule; the label-noise
    // fraction then decides how much of the train split gets re-rolled
    Rng rule_stream = Rng::keyed(spec.seed, 0x401eULL);
    std::vector<std::vector<double>> w(static_cast<std::size_t>(spec.num_classes),
                                       std::vector<double>(static_cast<std::size_t>(spec.input_dim)));
    for (auto& row : w)
        for (auto& v : row) v = rule_stream.normal();
    for (int i = 0; i < n; ++i) {
        std::vector<float> x(static_cast<std::size_t>(spec.input_dim));
        for (auto& v : x) v = static_cast<float>(rng.normal());
        int label = 0;
        double best = -1e300;
        for (int c = 0; c < spec.num_classes; ++c) {
            double s = 0.0;
            for (int d = 0; d < spec.input_dim; ++d)
                s += w[static_cast<std::size_t>(c)][static_cast<std::size_t>(d)] *
                     x[static_cast<std::size_t>(d)];
            if (s > best) {
                best = s;
                label = c;
            }
        }
        out.inputs.push_back(std::move(x));
        out.labels.push_back(label);
    }
}

void apply_label_noise(LabeledDataset& data, double fraction, int num_classes, Rng& rng) {
    if (fraction <= 0.0) return;
    for (std::size_t i = 0; i < data.labels.size(); ++i)
        if (rng.uniform() < fraction)
            data.labels[i] = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(num_classes)));
}

}  // namespace

std::pair<LabeledDataset, LabeledDataset> generate_task(const SyntheticTaskSpec& spec) {
    if (spec.n_train < spec.num_classes || spec.n_test < spec.num_classes)
        throw ValidationError("n_train/n_test must be >= num_classes");
    if (spec.label_noise_fraction < 0.0 || spec.label_noise_fraction > 1.0)
        throw ValidationError("label_noise_fraction must lie in [0, 1]");
    LabeledDataset train, test;
    for (LabeledDataset* d : {&train, &test}) {
        d->input_shape = {spec.input_dim};
        d->num_classes = spec.num_classes;
    }
    Rng train_rng = Rng::keyed(spec.seed, 1);
    Rng test_rng = Rng::keyed(spec.seed, 2);
    switch (spec.generator) {
        case TaskGenerator::GaussianBlobs: {
            Rng unused(0);
            fill_blobs(spec, spec.n_train, train_rng, unused, train);
            fill_blobs(spec, spec.n_test, test_rng, unused, test);
            break;
        }
        case TaskGenerator::TwoSpirals:
            if (spec.num_classes != 2)
                throw ValidationError("two-spirals requires num_classes = 2");
            fill_spirals(spec, spec.n_train, train_rng, train);
            fill_spirals(spec, spec.n_test, test_rng, test);
            break;
        case TaskGenerator::RandomLabelFraction:
            fill_random_rule(spec, spec.n_train, train_rng, train);
            fill_random_rule(spec, spec.n_test, test_rng, test);
            break;
    }
    Rng noise_rng = Rng::keyed(spec.seed, 3);
    apply_label_noise(train, spec.label_noise_fraction, spec.num_classes, noise_rng);
    train.validate();
    test.validate();
    return {std::move(train), std::move(test)};
}

namespace {

// Plain MLP trainer: forward caches per-layer activations, backward produces
// weight/bias gradients. Separate from nn-core's vjp, which differentiates
// w.r.t. activations only.
struct Mlp {
    std::vector<DenseLayer> layers;

    static Mlp init(int input_dim, int width, int depth, int num_classes, Rng& rng) {
        Mlp mlp;
        for (int j = 0; j < depth; ++j) {
            DenseLayer d;
            d.in_dim = j == 0 ? input_dim : width;
            d.out_dim = j == depth - 1 ? num_classes : width;
            d.weight.resize(static_cast<std::size_t>(d.in_dim) * d.out_dim);
            double std_dev = std::sqrt(2.0 / d.in_dim);
            for (auto& w : d.weight) w = static_cast<float>(std_dev * rng.normal());
            d.bias.assign(static_cast<std::size_t>(d.out_dim), 0.0f);
            mlp.layers.push_back(std::move(d));
        }
        return mlp;
    }

    Network to_network(int input_dim, int num_classes) const {
        std::vector<Layer> net_layers;
        for (std::size_t j = 0; j < layers.size(); ++j) {
            net_layers.emplace_back(layers[j]);
            if (j + 1 < layers.size()) net_layers.emplace_back(ReluLayer{});
        }
        return Network({input_dim}, std::move(net_layers), num_classes);
    }
};

void sgd_step(Mlp& mlp, const LabeledDataset& data, const std::vector<std::size_t>& batch,
              double lr) {
    const std::size_t depth = mlp.layers.size();
    std::vector<std::vector<double>> grad_w(depth), grad_b(depth);
    for (std::size_t j = 0; j < depth; ++j) {
        grad_w[j].assign(mlp.layers[j].weight.size(), 0.0);
        grad_b[j].assign(mlp.layers[j].bias.size(), 0.0);
    }
    for (std::size_t bi : batch) {
        // forward
        std::vector<std::vector<float>> acts;  // post-nonlinearity inputs per layer
        acts.push_back(data.inputs[bi]);
        std::vector<std::vector<float>> zs;
        for (std::size_t j = 0; j < depth; ++j) {
            zs.push_back(apply_layer(Layer{mlp.layers[j]}, acts.back(),
                                     {mlp.layers[j].in_dim}));
            if (j + 1 < depth) {
                std::vector<float> a(zs.back().size());
                for (std::size_t t = 0; t < a.size(); ++t)
                    a[t] = zs.back()[t] > 0.0f ? zs.back()[t] : 0.0f;
                acts.push_back(std::move(a));
            }
        }
        // softmax cross-entropy gradient at the logits
        const std::vector<float>& logits = zs.back();
        double mx = *std::max_element(logits.begin(), logits.end());
        double z = 0.0;
        std::vector<double> p(logits.size());
        for (std::size_t k = 0; k < logits.size(); ++k) {
            p[k] = std::exp(static_cast<double>(logits[k]) - mx);
            z += p[k];
        }
        std::vector<float> delta(logits.size());
        for (std::size_t k = 0; k < logits.size(); ++k)
            delta[k] = static_cast<float>(p[k] / z -
                                          (static_cast<int>(k) == data.labels[bi] ? 1.0 : 0.0));
        // backward
        for (std::size_t j = depth; j-- > 0;) {
            const DenseLayer& d = mlp.layers[j];
            const std::vector<float>& a_in = acts[j];
            for (int r = 0; r < d.out_dim; ++r) {
                grad_b[j][static_cast<std::size_t>(r)] += delta[static_cast<std::size_t>(r)];
                for (int c = 0; c < d.in_dim; ++c)
                    grad_w[j][static_cast<std::size_t>(r) * d.in_dim + c] +=
                        static_cast<double>(delta[static_cast<std::size_t>(r)]) *
                        a_in[static_cast<std::size_t>(c)];
            }
            if (j == 0) break;
            std::vector<float> prev(static_cast<std::size_t>(d.in_dim), 0.0f);
            for (int c = 0; c < d.in_dim; ++c) {
                double acc = 0.0;
                for (int r = 0; r < d.out_dim; ++r)
                    acc += static_cast<double>(d.weight[static_cast<std::size_t>(r) * d.in_dim + c]) *
                           delta[static_cast<std::size_t>(r)];
                // ReLU mask from the cached pre-activation
                prev[static_cast<std::size_t>(c)] =
                    zs[j - 1][static_cast<std::size_t>(c)] > 0.0f ? static_cast<float>(acc) : 0.0f;
            }
            delta = std::move(prev);
        }
    }
    const double scale = lr / static_cast<double>(batch.size());
    for (std::size_t j = 0; j < depth; ++j) {
        for (std::size_t t = 0; t < mlp.layers[j].weight.size(); ++t)
            mlp.layers[j].weight[t] = static_cast<float>(mlp.layers[j].weight[t] - scale * grad_w[j][t]);
        for (std::size_t t = 0; t < mlp.layers[j].bias.size(); ++t)
            mlp.layers[j].bias[t] = static_cast<float>(mlp.layers[j].bias[t] - scale * grad_b[j][t]);
    }
}

}  // namespace

double classification_error(const Network& net, const LabeledDataset& data) {
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < data.size(); ++i)
        if (argmax(forward(net, data.inputs[i]).output()) != data.labels[i]) ++wrong;
    return static_cast<double>(wrong) / static_cast<double>(data.size());
}

TrainResult train_model(const std::pair<LabeledDataset, LabeledDataset>& task,
                        const TrainConfig& cfg) {
    const LabeledDataset& train = task.first;
    const LabeledDataset& test = task.second;
    train.validate();
    test.validate();
    if (cfg.depth < 1 || cfg.width < 1 || cfg.epochs < 1 || cfg.batch_size < 1 ||
        cfg.learning_rate <= 0.0)
        throw ValidationError("invalid TrainConfig");
    Rng init_rng = Rng::keyed(cfg.seed, 0x1417ULL);
    Mlp mlp = Mlp::init(train.input_shape[0], cfg.width, cfg.depth, train.num_classes, init_rng);

    std::vector<std::size_t> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    TrainResult result{mlp.to_network(train.input_shape[0], train.num_classes)};
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng shuffle_rng = Rng::keyed(cfg.seed, 0xe90cULL, static_cast<std::uint64_t>(epoch));
        shuffle_rng.shuffle(order);
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                           order.begin() + static_cast<std::ptrdiff_t>(end));
            sgd_step(mlp, train, batch, cfg.learning_rate);
        }
        result.epochs_run = epoch + 1;
        Network net = mlp.to_network(train.input_shape[0], train.num_classes);
        double err = classification_error(net, train);
        if (err <= 1.0 - cfg.target_train_accuracy) {
            result.net = std::move(net);
            result.train_error = err;
            result.test_error = classification_error(result.net, test);
            result.did_fit = true;
            return result;
        }
    }
    result.net = mlp.to_network(train.input_shape[0], train.num_classes);
    result.train_error = classification_error(result.net, train);
    result.test_error = classification_error(result.net, test);
    result.did_fit = result.train_error <= 1.0 - cfg.target_train_accuracy;
    return result;
}

BuiltZoo build_zoo(const std::pair<LabeledDataset, LabeledDataset>& task,
                   const std::vector<TrainConfig>& sweep, int workers,
                   const std::string& noise_tag) {
    if (sweep.size() < 2) throw ValidationError("sweep needs at least 2 configs");
    BuiltZoo zoo;
    zoo.entries.resize(sweep.size());
    zoo.networks.resize(sweep.size());
    parallel_for(sweep.size(), workers, [&](std::size_t i) {
        const TrainConfig& cfg = sweep[i];
        TrainResult tr = train_model(task, cfg);
        ZooEntry e;
        std::ostringstream id;
        id << "d" << cfg.depth << "_w" << cfg.width << "_lr" << cfg.learning_rate << "_n"
           << noise_tag << "_s" << cfg.seed;
        e.model_id = id.str();
        e.hyperparams["depth"] = std::to_string(cfg.depth);
        e.hyperparams["width"] = std::to_string(cfg.width);
        e.hyperparams["lr"] = std::to_string(cfg.learning_rate);
        e.hyperparams["label_noise"] = noise_tag;
        e.train_error = tr.train_error;
        e.test_error = tr.test_error;
        e.did_fit = tr.did_fit;
        zoo.entries[i] = std::move(e);
        zoo.networks[i] = std::move(tr.net);
    });
    return zoo;
}

}  // namespace gmeasure
