#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "instspec/problems.hpp"

namespace instspec {

// Two-layer feedforward net: 5 inputs -> hidden (rectifier) -> C classes
// (softmax), one class per distinct heuristic id.
struct ClassifierModel {
    static constexpr int kSchemaVersion = 1;

    int input_dim = 5;
    int hidden_dim = 128;
    std::vector<std::string> ids;  // output column -> heuristic id

    // Row-major: w1[h * input_dim + i], w2[c * hidden_dim + h].
    std::vector<double> w1, b1, w2, b2;

    int class_count() const { return static_cast<int>(ids.size()); }
};

// Overflow-safe softmax probabilities for standardized features.
std::vector<double> classifier_forward(const ClassifierModel& model,
                                       const FeatureVector& standardized);

struct TrainSample {
    FeatureVector features{};  // standardized
    std::string label;         // heuristic id
};

struct TrainConfig {
    int epochs = 200;
    int batch_size = 32;
    double learning_rate = 0.05;
    std::uint64_t seed = 0;
};

struct TrainResult {
    ClassifierModel model;
    std::vector<double> loss_per_epoch;  // full-dataset cross-entropy
};

// Mini-batch gradient descent on softmax cross-entropy with Glorot-uniform
// initialization from the config seed. Labels must appear in id_table.
TrainResult train_classifier(std::span<const TrainSample> dataset,
                             const TrainConfig& config,
                             const std::vector<std::string>& id_table);

// Exposed for gradient verification: full-batch loss and analytic gradients.
struct ClassifierGradients {
    std::vector<double> w1, b1, w2, b2;
};
double classifier_loss(const ClassifierModel& model, std::span<const TrainSample> batch,
                       const std::vector<int>& label_columns);
ClassifierGradients classifier_backward(const ClassifierModel& model,
                                        std::span<const TrainSample> batch,
                                        const std::vector<int>& label_columns);

void save_classifier(const ClassifierModel& model, const std::string& path);
ClassifierModel load_classifier(const std::string& path);

}  // namespace instspec
