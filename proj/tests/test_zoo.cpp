#include <doctest.h>

#include <set>

#include "gmeasure/zoo.hpp"
#include "test_support.hpp"

using namespace gmeasure;

TEST_CASE("parse_generator round trips") {
    for (TaskGenerator g : {TaskGenerator::GaussianBlobs, TaskGenerator::TwoSpirals,
                            TaskGenerator::RandomLabelFraction})
        CHECK(parse_generator(generator_name(g)) == g);
    CHECK_THROWS_AS(parse_generator("no-such-task"), ValidationError);
}

TEST_CASE("generate_task: shapes, determinism and label noise") {
    SyntheticTaskSpec spec;
    spec.input_dim = 6;
    spec.n_train = 64;
    spec.n_test = 96;
    spec.seed = 3;
    auto [train, test] = generate_task(spec);
    CHECK(train.size() == 64);
    CHECK(test.size() == 96);
    CHECK(train.input_shape == Shape{6});
    train.validate();
    test.validate();

    SUBCASE("bit-identical regeneration") {
        auto [train2, test2] = generate_task(spec);
        CHECK(train.inputs == train2.inputs);
        CHECK(train.labels == train2.labels);
        CHECK(test.inputs == test2.inputs);
        CHECK(test.labels == test2.labels);
    }
    SUBCASE("label noise flips train labels only") {
        SyntheticTaskSpec noisy = spec;
        noisy.label_noise_fraction = 0.5;
        auto [ntrain, ntest] = generate_task(noisy);
        CHECK(ntrain.inputs == train.inputs);
        CHECK(ntest.labels == test.labels);
        int flipped = 0;
        for (std::size_t i = 0; i < train.size(); ++i)
            if (ntrain.labels[i] != train.labels[i]) ++flipped;
        CHECK(flipped > 10);
        CHECK(flipped < 64);
    }
    SUBCASE("different seeds differ") {
        SyntheticTaskSpec other = spec;
        other.seed = 4;
        auto [otrain, _] = generate_task(other);
        CHECK(otrain.inputs != train.inputs);
    }
}

TEST_CASE("generate_task: blobs are learnable by a small network") {
    SyntheticTaskSpec spec;
    spec.input_dim = 8;
    spec.n_train = 256;
    spec.n_test = 256;
    spec.seed = 7;
    auto task = generate_task(spec);
    TrainConfig tc;
    tc.depth = 1;
    tc.width = 8;
    tc.epochs = 100;
    tc.seed = 7;
    TrainResult res = train_model(task, tc);
    CHECK(res.train_error < 0.02);
    CHECK(res.test_error < 0.05);
    CHECK(res.did_fit);
}

TEST_CASE("generate_task: spirals and random-rule tasks validate") {
    SyntheticTaskSpec spec;
    spec.generator = TaskGenerator::TwoSpirals;
    spec.input_dim = 5;
    spec.n_train = 40;
    spec.n_test = 40;
    spec.seed = 9;
    auto [strain, stest] = generate_task(spec);
    strain.validate();
    CHECK(strain.num_classes == 2);

    spec.generator = TaskGenerator::RandomLabelFraction;
    auto [rtrain, rtest] = generate_task(spec);
    rtrain.validate();
    std::set<int> labels(rtrain.labels.begin(), rtrain.labels.end());
    CHECK(labels.size() == 2);
}

TEST_CASE("train_model: determinism and hyperparameter effect") {
    SyntheticTaskSpec spec;
    spec.input_dim = 6;
    spec.n_train = 128;
    spec.n_test = 128;
    spec.seed = 11;
    auto task = generate_task(spec);
    TrainConfig tc;
    tc.epochs = 30;
    tc.seed = 13;

    TrainResult a = train_model(task, tc);
    TrainResult b = train_model(task, tc);
    CHECK(a.train_error == b.train_error);
    CHECK(a.test_error == b.test_error);
    const auto& wa = std::get<DenseLayer>(a.net.layers()[0]).weight;
    const auto& wb = std::get<DenseLayer>(b.net.layers()[0]).weight;
    CHECK(wa == wb);  // bit-identical retrain

    TrainConfig other = tc;
    other.seed = 14;
    CHECK(std::get<DenseLayer>(train_model(task, other).net.layers()[0]).weight != wa);
}

TEST_CASE("train_model: network has the requested architecture") {
    SyntheticTaskSpec spec;
    spec.input_dim = 5;
    spec.n_train = 32;
    spec.n_test = 32;
    spec.seed = 15;
    auto task = generate_task(spec);
    TrainConfig tc;
    tc.depth = 3;
    tc.width = 12;
    tc.epochs = 2;
    TrainResult res = train_model(task, tc);
    CHECK(res.net.depth() == 3);
    CHECK(std::get<DenseLayer>(res.net.layers()[0]).out_dim == 12);
    CHECK(res.net.num_classes() == 2);
    CHECK(res.epochs_run <= 2);
}

TEST_CASE("noisy labels widen the generalization gap") {
    SyntheticTaskSpec clean_spec;
    clean_spec.input_dim = 8;
    clean_spec.n_train = 192;
    clean_spec.n_test = 256;
    clean_spec.seed = 17;
    SyntheticTaskSpec noisy_spec = clean_spec;
    noisy_spec.label_noise_fraction = 0.4;

    TrainConfig tc;
    tc.depth = 2;
    tc.width = 64;
    tc.epochs = 1000;
    tc.learning_rate = 0.1;
    tc.seed = 19;

    TrainResult clean = train_model(generate_task(clean_spec), tc);
    TrainResult noisy = train_model(generate_task(noisy_spec), tc);
    double clean_gap = clean.test_error - clean.train_error;
    double noisy_gap = noisy.test_error - noisy.train_error;
    CHECK(noisy.train_error < 0.05);  // memorizes the noise
    CHECK(noisy_gap > clean_gap + 0.1);
}

TEST_CASE("build_zoo: entries carry errors, tags and distinct ids") {
    SyntheticTaskSpec spec;
    spec.input_dim = 6;
    spec.n_train = 64;
    spec.n_test = 64;
    spec.seed = 21;
    auto task = generate_task(spec);

    std::vector<TrainConfig> sweep;
    for (int depth : {1, 2})
        for (int width : {4, 8}) {
            TrainConfig tc;
            tc.depth = depth;
            tc.width = width;
            tc.epochs = 10;
            tc.seed = 23;
            sweep.push_back(tc);
        }
    BuiltZoo zoo = build_zoo(task, sweep, 2, "0.25");
    REQUIRE(zoo.entries.size() == 4);
    REQUIRE(zoo.networks.size() == 4);
    std::set<std::string> ids;
    for (std::size_t i = 0; i < zoo.entries.size(); ++i) {
        const ZooEntry& e = zoo.entries[i];
        ids.insert(e.model_id);
        CHECK(e.hyperparams.at("label_noise") == "0.25");
        CHECK(e.hyperparams.count("depth") == 1);
        CHECK(e.hyperparams.count("width") == 1);
        CHECK(e.hyperparams.count("lr") == 1);
        CHECK(e.train_error >= 0.0);
        CHECK(e.test_error >= 0.0);
        CHECK(e.measure_values.empty());
        CHECK(classification_error(zoo.networks[i], task.first) ==
              doctest::Approx(e.train_error));
    }
    CHECK(ids.size() == 4);

    BuiltZoo serial = build_zoo(task, sweep, 1, "0.25");
    for (std::size_t i = 0; i < zoo.entries.size(); ++i) {
        CHECK(serial.entries[i].train_error == zoo.entries[i].train_error);
        CHECK(serial.entries[i].test_error == zoo.entries[i].test_error);
    }
}
