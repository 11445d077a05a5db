#include "mld/nnmodel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mld/rng.hpp"

namespace mld {

const char* activation_name(Activation a) {
    return a == Activation::sigmoid ? "sigmoid" : "tanh_rescaled";
}

Activation parse_activation(const std::string& name) {
    if (name == "sigmoid") return Activation::sigmoid;
    if (name == "tanh_rescaled" || name == "tanh") return Activation::tanh_rescaled;
    throw ConfigError("unknown activation '" + name + "' (expected sigmoid or tanh_rescaled)");
}

double activate(Activation a, double z) {
    if (a == Activation::sigmoid) return 1.0 / (1.0 + std::exp(-z));
    return 0.5 * (std::tanh(z) + 1.0);
}

namespace {

// Derivative expressed through the activation value.
double activation_slope(Activation a, double value) {
    const double s = value * (1.0 - value);
    return a == Activation::sigmoid ? s : 2.0 * s;
}

void softmax_inplace(std::vector<double>& z) {
    const double top = *std::max_element(z.begin(), z.end());
    double total = 0.0;
    for (double& v : z) {
        v = std::exp(v - top);
        total += v;
    }
    for (double& v : z) v /= total;
}

void check_input(const MLPModel& model, std::size_t length) {
    if (length != model.input_dim()) {
        throw ShapeError("input has " + std::to_string(length) + " features, model expects " +
                         std::to_string(model.input_dim()));
    }
}

std::size_t argmax(std::span<const double> values) {
    return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
}

} // namespace

void MLPModel::validate() const {
    if (layer_sizes.size() < 2) throw ShapeError("model needs at least 2 layers");
    for (std::size_t s : layer_sizes) {
        if (s == 0) throw ShapeError("layer sizes must be positive");
    }
    if (weights.size() != layer_sizes.size() - 1 || biases.size() != layer_sizes.size() - 1) {
        throw ShapeError("model has " + std::to_string(weights.size()) + " weight matrices for " +
                         std::to_string(layer_sizes.size()) + " layers");
    }
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
        if (weights[l].rows() != layer_sizes[l + 1] || weights[l].cols() != layer_sizes[l]) {
            throw ShapeError("weights[" + std::to_string(l) + "] is " +
                             std::to_string(weights[l].rows()) + "x" +
                             std::to_string(weights[l].cols()) + ", expected " +
                             std::to_string(layer_sizes[l + 1]) + "x" +
                             std::to_string(layer_sizes[l]));
        }
        if (biases[l].size() != layer_sizes[l + 1]) {
            throw ShapeError("biases[" + std::to_string(l) + "] has wrong length");
        }
    }
}

MLPModel zero_model(std::vector<std::size_t> layer_sizes, Activation activation) {
    MLPModel model;
    model.layer_sizes = std::move(layer_sizes);
    model.activation = activation;
    for (std::size_t l = 0; l + 1 < model.layer_sizes.size(); ++l) {
        model.weights.emplace_back(model.layer_sizes[l + 1], model.layer_sizes[l], 0.0);
        model.biases.emplace_back(model.layer_sizes[l + 1], 0.0);
    }
    model.validate();
    return model;
}

MLPModel random_model(std::vector<std::size_t> layer_sizes, Activation activation,
                      std::uint64_t seed, double stddev) {
    MLPModel model = zero_model(std::move(layer_sizes), activation);
    Rng rng(seed);
    for (auto& w : model.weights) {
        for (double& v : w.data()) v = rng.truncated_normal(stddev);
    }
    return model;
}

void Dataset::validate() const {
    if (features.rows() == 0) throw EmptyInputError("dataset '" + name + "' has no samples");
    if (labels.size() != features.rows()) {
        throw ShapeError("dataset '" + name + "' has " + std::to_string(labels.size()) +
                         " labels for " + std::to_string(features.rows()) + " rows");
    }
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes) {
            throw RangeError("label " + std::to_string(labels[i]) + " at row " +
                             std::to_string(i) + " is outside [0, " +
                             std::to_string(num_classes) + ")");
        }
    }
    for (double v : features.data()) {
        if (!std::isfinite(v)) throw RangeError("dataset '" + name + "' has a non-finite feature");
    }
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
    Dataset out;
    out.features = features.select_rows(rows);
    out.labels.reserve(rows.size());
    for (std::size_t r : rows) out.labels.push_back(labels[r]);
    out.num_classes = num_classes;
    out.name = name;
    out.label_names = label_names;
    return out;
}

ForwardResult forward(const MLPModel& model, std::span<const double> input) {
    check_input(model, input.size());
    ForwardResult result;
    result.activations.reserve(model.num_layers());
    result.activations.emplace_back(input.begin(), input.end());
    const std::size_t last = model.num_layers() - 2;
    for (std::size_t l = 0; l <= last; ++l) {
        const auto& prev = result.activations.back();
        const RealMatrix& w = model.weights[l];
        std::vector<double> z(w.rows());
        for (std::size_t k = 0; k < w.rows(); ++k) {
            auto row = w.row(k);
            double acc = model.biases[l][k];
            for (std::size_t j = 0; j < row.size(); ++j) acc += row[j] * prev[j];
            z[k] = acc;
        }
        if (l == last) {
            softmax_inplace(z);
        } else {
            for (double& v : z) v = activate(model.activation, v);
        }
        result.activations.push_back(std::move(z));
    }
    result.probabilities = result.activations.back();
    return result;
}

ActivationRecord collect_activations(const MLPModel& model, const RealMatrix& features) {
    check_input(model, features.cols());
    ActivationRecord record;
    for (std::size_t size : model.layer_sizes) record.layers.emplace_back(features.rows(), size);
    for (std::size_t i = 0; i < features.rows(); ++i) {
        const ForwardResult fr = forward(model, features.row(i));
        for (std::size_t l = 0; l < fr.activations.size(); ++l) {
            std::copy(fr.activations[l].begin(), fr.activations[l].end(),
                      record.layers[l].row(i).begin());
        }
    }
    return record;
}

int predict_label(const MLPModel& model, std::span<const double> input) {
    return static_cast<int>(argmax(forward(model, input).probabilities));
}

std::vector<int> predict_labels(const MLPModel& model, const RealMatrix& features) {
    check_input(model, features.cols());
    std::vector<int> out(features.rows());
    for (std::size_t i = 0; i < features.rows(); ++i) out[i] = predict_label(model, features.row(i));
    return out;
}

double accuracy(const MLPModel& model, const Dataset& data) {
    const auto predicted = predict_labels(model, data.features);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i) hits += predicted[i] == data.labels[i];
    return predicted.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(predicted.size());
}

namespace {

Gradients zero_gradients(const MLPModel& model) {
    Gradients g;
    for (std::size_t l = 0; l < model.weights.size(); ++l) {
        g.weights.emplace_back(model.weights[l].rows(), model.weights[l].cols(), 0.0);
        g.biases.emplace_back(model.biases[l].size(), 0.0);
    }
    return g;
}

void clear(Gradients& g) {
    for (auto& w : g.weights) std::fill(w.data().begin(), w.data().end(), 0.0);
    for (auto& b : g.biases) std::fill(b.begin(), b.end(), 0.0);
}

// Forward + backward for one sample, accumulating into grads. When `masks`
// is non-null it holds inverted-dropout multipliers per hidden layer.
double accumulate_sample(const MLPModel& model, std::span<const double> input, int label,
                         const std::vector<std::vector<double>>* masks, Gradients& grads,
                         std::vector<std::vector<double>>& acts,
                         std::vector<std::vector<double>>& deltas) {
    const std::size_t n_weights = model.weights.size();
    acts.resize(model.num_layers());
    deltas.resize(n_weights);
    acts[0].assign(input.begin(), input.end());
    for (std::size_t l = 0; l < n_weights; ++l) {
        const RealMatrix& w = model.weights[l];
        auto& out = acts[l + 1];
        out.resize(w.rows());
        const auto& prev = acts[l];
        for (std::size_t k = 0; k < w.rows(); ++k) {
            auto row = w.row(k);
            double acc = model.biases[l][k];
            for (std::size_t j = 0; j < row.size(); ++j) acc += row[j] * prev[j];
            out[k] = acc;
        }
        if (l + 1 == n_weights) {
            softmax_inplace(out);
        } else {
            for (double& v : out) v = activate(model.activation, v);
            if (masks) {
                const auto& m = (*masks)[l];
                for (std::size_t k = 0; k < out.size(); ++k) out[k] *= m[k];
            }
        }
    }
    const auto& probs = acts.back();
    const double loss = -std::log(std::max(probs[static_cast<std::size_t>(label)], 1e-300));

    deltas.back() = probs;
    deltas.back()[static_cast<std::size_t>(label)] -= 1.0;
    for (std::size_t l = n_weights; l-- > 0;) {
        const auto& delta = deltas[l];
        const auto& prev = acts[l];
        RealMatrix& gw = grads.weights[l];
        for (std::size_t k = 0; k < delta.size(); ++k) {
            const double d = delta[k];
            if (d == 0.0) continue;
            auto grow = gw.row(k);
            for (std::size_t j = 0; j < prev.size(); ++j) grow[j] += d * prev[j];
            grads.biases[l][k] += d;
        }
        if (l == 0) break;
        // Propagate to hidden layer l (activation values in acts[l]).
        auto& below = deltas[l - 1];
        below.assign(prev.size(), 0.0);
        const RealMatrix& w = model.weights[l];
        for (std::size_t k = 0; k < delta.size(); ++k) {
            const double d = delta[k];
            if (d == 0.0) continue;
            auto row = w.row(k);
            for (std::size_t j = 0; j < row.size(); ++j) below[j] += d * row[j];
        }
        for (std::size_t j = 0; j < below.size(); ++j) {
            double value = prev[j];
            double scale = 1.0;
            if (masks) {
                scale = (*masks)[l - 1][j];
                if (scale == 0.0) {
                    below[j] = 0.0;
                    continue;
                }
                value /= scale;
            }
            below[j] *= activation_slope(model.activation, value) * scale;
        }
    }
    return loss;
}

} // namespace

double loss_and_gradients(const MLPModel& model, const RealMatrix& features,
                          std::span<const int> labels, Gradients& grads) {
    check_input(model, features.cols());
    if (features.rows() == 0 || labels.size() != features.rows()) {
        throw ShapeError("loss_and_gradients needs one label per row");
    }
    grads = zero_gradients(model);
    std::vector<std::vector<double>> acts, deltas;
    double loss = 0.0;
    for (std::size_t i = 0; i < features.rows(); ++i) {
        loss += accumulate_sample(model, features.row(i), labels[i], nullptr, grads, acts, deltas);
    }
    const double scale = 1.0 / static_cast<double>(features.rows());
    for (auto& w : grads.weights) {
        for (double& v : w.data()) v *= scale;
    }
    for (auto& b : grads.biases) {
        for (double& v : b) v *= scale;
    }
    return loss * scale;
}

namespace {

struct AdamState {
    Gradients m, v;
    std::size_t step = 0;
};

template <class Update>
void for_each_param(MLPModel& model, Gradients& grads, Update&& update) {
    for (std::size_t l = 0; l < model.weights.size(); ++l) {
        auto& w = model.weights[l].data();
        auto& gw = grads.weights[l].data();
        for (std::size_t i = 0; i < w.size(); ++i) update(l, false, i, w[i], gw[i]);
        auto& b = model.biases[l];
        auto& gb = grads.biases[l];
        for (std::size_t i = 0; i < b.size(); ++i) update(l, true, i, b[i], gb[i]);
    }
}

} // namespace

TrainResult train_mlp(const Dataset& train, const Dataset* test,
                      const std::vector<std::size_t>& layer_sizes, Activation activation,
                      const TrainConfig& config) {
    train.validate();
    if (layer_sizes.size() < 2) throw ConfigError("layer_sizes needs at least input and output");
    if (layer_sizes.front() != train.dim()) {
        throw ShapeError("layer_sizes[0]=" + std::to_string(layer_sizes.front()) +
                         " but dataset has " + std::to_string(train.dim()) + " features");
    }
    if (layer_sizes.back() < train.num_classes) {
        throw ShapeError("output layer smaller than the number of classes");
    }
    if (config.batch_size == 0) throw ConfigError("batch_size must be positive");
    if (!(config.dropout >= 0.0 && config.dropout < 1.0)) {
        throw ConfigError("dropout must lie in [0, 1)");
    }
    if (!(config.learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");

    Rng rng(config.seed);
    MLPModel model = random_model(layer_sizes, activation, rng.next(), config.init_stddev);
    Gradients grads = zero_gradients(model);
    AdamState adam{zero_gradients(model), zero_gradients(model), 0};

    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<std::vector<double>> acts, deltas;
    std::vector<std::vector<double>> masks;
    for (std::size_t l = 1; l + 1 < layer_sizes.size(); ++l) masks.emplace_back(layer_sizes[l], 1.0);
    const bool use_dropout = config.dropout > 0.0 && !masks.empty();
    const double keep = 1.0 - config.dropout;

    double epoch_loss = 0.0;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        rng.shuffle(std::span<std::size_t>(order));
        epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            clear(grads);
            for (std::size_t b = start; b < end; ++b) {
                const std::size_t row = order[b];
                if (use_dropout) {
                    for (auto& m : masks) {
                        for (double& v : m) v = rng.uniform() < keep ? 1.0 / keep : 0.0;
                    }
                }
                epoch_loss += accumulate_sample(model, train.features.row(row), train.labels[row],
                                                use_dropout ? &masks : nullptr, grads, acts, deltas);
            }
            const double scale = 1.0 / static_cast<double>(end - start);
            if (config.optimizer == Optimizer::sgd) {
                for_each_param(model, grads, [&](std::size_t, bool, std::size_t, double& p, double g) {
                    p -= config.learning_rate * g * scale;
                });
            } else {
                constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
                ++adam.step;
                const double c1 = 1.0 - std::pow(beta1, static_cast<double>(adam.step));
                const double c2 = 1.0 - std::pow(beta2, static_cast<double>(adam.step));
                for_each_param(model, grads, [&](std::size_t l, bool bias, std::size_t i, double& p, double g) {
                    g *= scale;
                    double& m = bias ? adam.m.biases[l][i] : adam.m.weights[l].data()[i];
                    double& v = bias ? adam.v.biases[l][i] : adam.v.weights[l].data()[i];
                    m = beta1 * m + (1.0 - beta1) * g;
                    v = beta2 * v + (1.0 - beta2) * g * g;
                    p -= config.learning_rate * (m / c1) / (std::sqrt(v / c2) + eps);
                });
            }
        }
        epoch_loss /= static_cast<double>(order.size());
        if (!std::isfinite(epoch_loss)) {
            throw DivergenceError("training diverged: non-finite loss at epoch " +
                                  std::to_string(epoch + 1), epoch + 1);
        }
    }

    TrainResult result{std::move(model), {}};
    result.report.epochs = config.epochs;
    result.report.seed = config.seed;
    result.report.final_loss = epoch_loss;
    result.report.final_train_acc = accuracy(result.model, train);
    if (test) result.report.final_test_acc = accuracy(result.model, *test);
    return result;
}

json model_to_json(const MLPModel& model) {
    model.validate();
    json doc = make_envelope("mlp_model");
    doc["layer_sizes"] = model.layer_sizes;
    doc["activation"] = activation_name(model.activation);
    json weights = json::array();
    for (const auto& w : model.weights) {
        json rows = json::array();
        for (std::size_t r = 0; r < w.rows(); ++r) {
            auto row = w.row(r);
            rows.push_back(std::vector<double>(row.begin(), row.end()));
        }
        weights.push_back(std::move(rows));
    }
    doc["weights"] = std::move(weights);
    doc["biases"] = model.biases;
    return doc;
}

MLPModel model_from_json(const json& doc) {
    check_envelope(doc, "mlp_model");
    MLPModel model;
    model.layer_sizes = require_as<std::vector<std::size_t>>(doc, "layer_sizes", "$");
    model.activation = parse_activation(require_as<std::string>(doc, "activation", "$"));
    const json& weights = require_field(doc, "weights", "$");
    if (!weights.is_array()) throw ParseError("$.weights: expected an array");
    for (std::size_t l = 0; l < weights.size(); ++l) {
        const std::string path = "$.weights[" + std::to_string(l) + "]";
        const json& rows = weights[l];
        if (!rows.is_array() || rows.empty()) throw ParseError(path + ": expected a non-empty array");
        const std::size_t cols = rows[0].is_array() ? rows[0].size() : 0;
        RealMatrix w(rows.size(), cols);
        for (std::size_t r = 0; r < rows.size(); ++r) {
            if (!rows[r].is_array() || rows[r].size() != cols) {
                throw ParseError(path + "[" + std::to_string(r) + "]: ragged row");
            }
            for (std::size_t c = 0; c < cols; ++c) {
                if (!rows[r][c].is_number()) {
                    throw ParseError(path + "[" + std::to_string(r) + "][" + std::to_string(c) +
                                     "]: expected a number");
                }
                w(r, c) = rows[r][c].get<double>();
            }
        }
        model.weights.push_back(std::move(w));
    }
    model.biases = require_as<std::vector<std::vector<double>>>(doc, "biases", "$");
    model.validate();
    return model;
}

void save_model(const MLPModel& model, const std::filesystem::path& path) {
    write_json_file(path, model_to_json(model));
}

MLPModel load_model(const std::filesystem::path& path) { return model_from_json(read_json_file(path)); }

std::string model_hash(const MLPModel& model) { return fnv1a_hex(model_to_json(model).dump()); }

json train_report_to_json(const TrainReport& report) {
    json doc = make_envelope("train_report");
    doc["epochs"] = report.epochs;
    doc["final_train_acc"] = report.final_train_acc;
    doc["final_test_acc"] = report.final_test_acc ? json(*report.final_test_acc) : json(nullptr);
    doc["final_loss"] = report.final_loss;
    doc["seed"] = report.seed;
    return doc;
}

TrainReport train_report_from_json(const json& doc) {
    check_envelope(doc, "train_report");
    TrainReport r;
    r.epochs = require_as<std::size_t>(doc, "epochs", "$");
    r.final_train_acc = require_as<double>(doc, "final_train_acc", "$");
    const json& test = require_field(doc, "final_test_acc", "$");
    if (!test.is_null()) r.final_test_acc = test.get<double>();
    r.final_loss = require_as<double>(doc, "final_loss", "$");
    r.seed = require_as<std::uint64_t>(doc, "seed", "$");
    return r;
}

} // namespace mld
