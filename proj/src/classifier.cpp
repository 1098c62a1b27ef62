#include "instspec/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "json.hpp"

#include "instspec/rng.hpp"

namespace instspec {

namespace {

std::vector<double> hidden_activations(const ClassifierModel& model,
                                       const FeatureVector& x) {
    std::vector<double> h(static_cast<std::size_t>(model.hidden_dim));
    for (int j = 0; j < model.hidden_dim; ++j) {
        double sum = model.b1[static_cast<std::size_t>(j)];
        for (int i = 0; i < model.input_dim; ++i) {
            sum += model.w1[static_cast<std::size_t>(j * model.input_dim + i)] *
                   x[static_cast<std::size_t>(i)];
        }
        h[static_cast<std::size_t>(j)] = sum > 0.0 ? sum : 0.0;
    }
    return h;
}

std::vector<double> logits_of(const ClassifierModel& model, const std::vector<double>& h) {
    const int c_count = model.class_count();
    std::vector<double> logits(static_cast<std::size_t>(c_count));
    for (int c = 0; c < c_count; ++c) {
        double sum = model.b2[static_cast<std::size_t>(c)];
        for (int j = 0; j < model.hidden_dim; ++j) {
            sum += model.w2[static_cast<std::size_t>(c * model.hidden_dim + j)] *
                   h[static_cast<std::size_t>(j)];
        }
        logits[static_cast<std::size_t>(c)] = sum;
    }
    return logits;
}

std::vector<double> softmax(std::vector<double> logits) {
    const double peak = *std::max_element(logits.begin(), logits.end());
    double total = 0.0;
    for (double& v : logits) {
        v = std::exp(v - peak);
        total += v;
    }
    for (double& v : logits) v /= total;
    return logits;
}

int column_of(const std::vector<std::string>& ids, const std::string& label) {
    for (std::size_t c = 0; c < ids.size(); ++c) {
        if (ids[c] == label) return static_cast<int>(c);
    }
    return -1;
}

}  // namespace

std::vector<double> classifier_forward(const ClassifierModel& model,
                                       const FeatureVector& standardized) {
    if (model.input_dim != 5) {
        throw std::invalid_argument("classifier_forward: input dimension must be 5");
    }
    return softmax(logits_of(model, hidden_activations(model, standardized)));
}

double classifier_loss(const ClassifierModel& model, std::span<const TrainSample> batch,
                       const std::vector<int>& label_columns) {
    double loss = 0.0;
    for (std::size_t s = 0; s < batch.size(); ++s) {
        const std::vector<double> probs = classifier_forward(model, batch[s].features);
        loss -= std::log(std::max(probs[static_cast<std::size_t>(label_columns[s])], 1e-300));
    }
    return loss / static_cast<double>(batch.size());
}

ClassifierGradients classifier_backward(const ClassifierModel& model,
                                        std::span<const TrainSample> batch,
                                        const std::vector<int>& label_columns) {
    const int in = model.input_dim;
    const int hid = model.hidden_dim;
    const int classes = model.class_count();

    ClassifierGradients g;
    g.w1.assign(model.w1.size(), 0.0);
    g.b1.assign(model.b1.size(), 0.0);
    g.w2.assign(model.w2.size(), 0.0);
    g.b2.assign(model.b2.size(), 0.0);

    const double scale = 1.0 / static_cast<double>(batch.size());
    for (std::size_t s = 0; s < batch.size(); ++s) {
        const FeatureVector& x = batch[s].features;
        const std::vector<double> h = hidden_activations(model, x);
        std::vector<double> probs = softmax(logits_of(model, h));

        // dL/dlogit_c = p_c - 1{c == label}
        probs[static_cast<std::size_t>(label_columns[s])] -= 1.0;

        std::vector<double> dh(static_cast<std::size_t>(hid), 0.0);
        for (int c = 0; c < classes; ++c) {
            const double dz = probs[static_cast<std::size_t>(c)] * scale;
            g.b2[static_cast<std::size_t>(c)] += dz;
            for (int j = 0; j < hid; ++j) {
                g.w2[static_cast<std::size_t>(c * hid + j)] += dz * h[static_cast<std::size_t>(j)];
                dh[static_cast<std::size_t>(j)] +=
                    probs[static_cast<std::size_t>(c)] *
                    model.w2[static_cast<std::size_t>(c * hid + j)];
            }
        }
        for (int j = 0; j < hid; ++j) {
            if (h[static_cast<std::size_t>(j)] <= 0.0) continue;  // rectifier gate
            const double dj = dh[static_cast<std::size_t>(j)] * scale;
            g.b1[static_cast<std::size_t>(j)] += dj;
            for (int i = 0; i < in; ++i) {
                g.w1[static_cast<std::size_t>(j * in + i)] += dj * x[static_cast<std::size_t>(i)];
            }
        }
    }
    return g;
}

TrainResult train_classifier(std::span<const TrainSample> dataset,
                             const TrainConfig& config,
                             const std::vector<std::string>& id_table) {
    if (dataset.empty()) {
        throw std::invalid_argument("train_classifier: empty dataset");
    }
    if (id_table.empty()) {
        throw std::invalid_argument("train_classifier: empty id table");
    }

    std::vector<int> labels(dataset.size());
    for (std::size_t s = 0; s < dataset.size(); ++s) {
        labels[s] = column_of(id_table, dataset[s].label);
        if (labels[s] < 0) {
            throw std::invalid_argument("train_classifier: unknown label " +
                                        dataset[s].label);
        }
    }

    ClassifierModel model;
    model.ids = id_table;
    const int in = model.input_dim;
    const int hid = model.hidden_dim;
    const int classes = model.class_count();
    model.w1.resize(static_cast<std::size_t>(hid * in));
    model.b1.assign(static_cast<std::size_t>(hid), 0.0);
    model.w2.resize(static_cast<std::size_t>(classes * hid));
    model.b2.assign(static_cast<std::size_t>(classes), 0.0);

    Rng rng(config.seed);
    const auto glorot = [&](std::vector<double>& w, int fan_in, int fan_out) {
        const double limit = std::sqrt(6.0 / (fan_in + fan_out));
        for (double& v : w) v = (2.0 * rng.uniform01() - 1.0) * limit;
    };
    glorot(model.w1, in, hid);
    glorot(model.w2, hid, classes);

    TrainResult result;
    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);

    std::vector<TrainSample> batch;
    std::vector<int> batch_labels;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::vector<std::size_t> shuffled = order;
        rng.shuffle(shuffled);
        for (std::size_t start = 0; start < shuffled.size();
             start += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t end =
                std::min(shuffled.size(), start + static_cast<std::size_t>(config.batch_size));
            batch.clear();
            batch_labels.clear();
            for (std::size_t s = start; s < end; ++s) {
                batch.push_back(dataset[shuffled[s]]);
                batch_labels.push_back(labels[shuffled[s]]);
            }
            const ClassifierGradients g = classifier_backward(model, batch, batch_labels);
            const double lr = config.learning_rate;
            for (std::size_t i = 0; i < model.w1.size(); ++i) model.w1[i] -= lr * g.w1[i];
            for (std::size_t i = 0; i < model.b1.size(); ++i) model.b1[i] -= lr * g.b1[i];
            for (std::size_t i = 0; i < model.w2.size(); ++i) model.w2[i] -= lr * g.w2[i];
            for (std::size_t i = 0; i < model.b2.size(); ++i) model.b2[i] -= lr * g.b2[i];
        }
        result.loss_per_epoch.push_back(classifier_loss(model, dataset, labels));
    }
    result.model = std::move(model);
    return result;
}

void save_classifier(const ClassifierModel& model, const std::string& path) {
    nlohmann::json j;
    j["schema_version"] = ClassifierModel::kSchemaVersion;
    j["input_dim"] = model.input_dim;
    j["hidden_dim"] = model.hidden_dim;
    j["ids"] = model.ids;
    j["w1"] = model.w1;
    j["b1"] = model.b1;
    j["w2"] = model.w2;
    j["b2"] = model.b2;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << j.dump(2) << "\n";
}

ClassifierModel load_classifier(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open classifier file: " + path);
    nlohmann::json j;
    in >> j;
    if (j.at("schema_version").get<int>() != ClassifierModel::kSchemaVersion) {
        throw std::runtime_error("unsupported classifier schema version");
    }
    ClassifierModel model;
    model.input_dim = j.at("input_dim").get<int>();
    model.hidden_dim = j.at("hidden_dim").get<int>();
    model.ids = j.at("ids").get<std::vector<std::string>>();
    model.w1 = j.at("w1").get<std::vector<double>>();
    model.b1 = j.at("b1").get<std::vector<double>>();
    model.w2 = j.at("w2").get<std::vector<double>>();
    model.b2 = j.at("b2").get<std::vector<double>>();
    const auto expect = [](std::size_t got, std::size_t want, const char* what) {
        if (got != want) {
            throw std::runtime_error(std::string("classifier file: bad shape for ") + what);
        }
    };
    expect(model.w1.size(),
           static_cast<std::size_t>(model.hidden_dim * model.input_dim), "w1");
    expect(model.b1.size(), static_cast<std::size_t>(model.hidden_dim), "b1");
    expect(model.w2.size(),
           static_cast<std::size_t>(model.ids.size()) *
               static_cast<std::size_t>(model.hidden_dim), "w2");
    expect(model.b2.size(), model.ids.size(), "b2");
    return model;
}

}  // namespace instspec
