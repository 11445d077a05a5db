#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mld/json_util.hpp"
#include "mld/matrix.hpp"

namespace mld {

/// Hidden-layer activation. Both are bounded in [0, 1]; tanh is rescaled as
/// (tanh(z) + 1) / 2 so a single 0.5 threshold discretizes either kind.
enum class Activation { sigmoid, tanh_rescaled };

const char* activation_name(Activation a);
Activation parse_activation(const std::string& name);

double activate(Activation a, double z);

/// Fully connected classifier: hidden layers use `activation`, the output
/// layer uses softmax. weights[l] maps layer l to layer l+1 and has shape
/// layer_sizes[l+1] x layer_sizes[l]. Zero biases give the bias-free form.
struct MLPModel {
    std::vector<std::size_t> layer_sizes;
    std::vector<RealMatrix> weights;
    std::vector<std::vector<double>> biases;
    Activation activation = Activation::sigmoid;

    std::size_t num_layers() const { return layer_sizes.size(); }
    std::size_t input_dim() const { return layer_sizes.front(); }
    std::size_t num_classes() const { return layer_sizes.back(); }

    /// Throws ShapeError when any weight or bias disagrees with layer_sizes.
    void validate() const;

    bool operator==(const MLPModel&) const = default;
};

/// All-zero weights and biases.
MLPModel zero_model(std::vector<std::size_t> layer_sizes, Activation activation);
/// Truncated-normal(0, stddev) weights clipped at 2 stddev, zero biases.
MLPModel random_model(std::vector<std::size_t> layer_sizes, Activation activation,
                      std::uint64_t seed, double stddev = 0.1);

struct Dataset {
    RealMatrix features;
    std::vector<int> labels;
    std::size_t num_classes = 0;
    std::string name;
    /// Original label strings for CSV data, indexed by class id.
    std::vector<std::string> label_names;

    std::size_t size() const { return features.rows(); }
    std::size_t dim() const { return features.cols(); }

    void validate() const;
    Dataset subset(std::span<const std::size_t> rows) const;
};

/// X^(1)..X^(L) for every sample; layers[0] is the raw input.
struct ActivationRecord {
    std::vector<RealMatrix> layers;
};

struct ForwardResult {
    std::vector<double> probabilities;
    /// activations[0] is the input; activations.back() equals probabilities.
    std::vector<std::vector<double>> activations;
};

ForwardResult forward(const MLPModel& model, std::span<const double> input);
ActivationRecord collect_activations(const MLPModel& model, const RealMatrix& features);
int predict_label(const MLPModel& model, std::span<const double> input);
std::vector<int> predict_labels(const MLPModel& model, const RealMatrix& features);
double accuracy(const MLPModel& model, const Dataset& data);

/// Same shape as the model's parameters.
struct Gradients {
    std::vector<RealMatrix> weights;
    std::vector<std::vector<double>> biases;
};

/// Mean cross-entropy over the rows and its exact gradient (no dropout).
double loss_and_gradients(const MLPModel& model, const RealMatrix& features,
                          std::span<const int> labels, Gradients& grads);

enum class Optimizer { sgd, adam };

struct TrainConfig {
    double learning_rate = 1e-3;
    std::size_t epochs = 10;
    std::size_t batch_size = 32;
    Optimizer optimizer = Optimizer::adam;
    double dropout = 0.0;
    std::uint64_t seed = 1;
    double init_stddev = 0.1;
};

struct TrainReport {
    std::size_t epochs = 0;
    double final_train_acc = 0.0;
    std::optional<double> final_test_acc;
    double final_loss = 0.0;
    std::uint64_t seed = 0;
};

struct TrainResult {
    MLPModel model;
    TrainReport report;
};

/// Mini-batch training with cross-entropy loss. Deterministic for a seed.
/// Throws DivergenceError naming the epoch when the loss becomes non-finite.
TrainResult train_mlp(const Dataset& train, const Dataset* test,
                      const std::vector<std::size_t>& layer_sizes, Activation activation,
                      const TrainConfig& config);

json model_to_json(const MLPModel& model);
MLPModel model_from_json(const json& doc);
void save_model(const MLPModel& model, const std::filesystem::path& path);
MLPModel load_model(const std::filesystem::path& path);
/// Hash of the serialized model, used as MLD provenance.
std::string model_hash(const MLPModel& model);

json train_report_to_json(const TrainReport& report);
TrainReport train_report_from_json(const json& doc);

} // namespace mld
