#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "gmeasure/eval.hpp"
#include "gmeasure/network.hpp"

namespace gmeasure {

enum class TaskGenerator { GaussianBlobs, TwoSpirals, RandomLabelFraction };

TaskGenerator parse_generator(const std::string& name);
std::string generator_name(TaskGenerator g);

struct SyntheticTaskSpec {
    TaskGenerator generator = TaskGenerator::GaussianBlobs;
    int input_dim = 10;
    int num_classes = 2;
    int n_train = 256;
    int n_test = 512;
    double label_noise_fraction = 0.0;
    std::uint64_t seed = 0;
};

struct TrainConfig {
    int epochs = 200;
    int batch_size = 32;
    double learning_rate = 0.05;
    int depth = 2;  // number of affine layers
    int width = 16;
    std::uint64_t seed = 0;
    double target_train_accuracy = 0.99;
};

struct TrainResult {
    Network net;
    double train_error = 0.0;
    double test_error = 0.0;
    bool did_fit = true;
    int epochs_run = 0;
};

// Deterministic train/test pair; label noise touches the train split only.
std::pair<LabeledDataset, LabeledDataset> generate_task(const SyntheticTaskSpec& spec);

TrainResult train_model(const std::pair<LabeledDataset, LabeledDataset>& task,
                        const TrainConfig& cfg);

struct BuiltZoo {
    std::vector<ZooEntry> entries;
    std::vector<Network> networks;  // parallel to entries
};

// Trains every config; hyperparams tagged with depth, width, lr and the
// task's label-noise bucket. measure_values left empty.
BuiltZoo build_zoo(const std::pair<LabeledDataset, LabeledDataset>& task,
                   const std::vector<TrainConfig>& sweep, int workers = 1,
                   const std::string& noise_tag = "0");

double classification_error(const Network& net, const LabeledDataset& data);

}  // namespace gmeasure
