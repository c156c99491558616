#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "picepr/errors.hpp"

namespace picepr {

/// Classifier head layout: tanh hidden layers, sigmoid output, one output
/// unit per personality dimension. input_dim is the embedding length, plus
/// 77 when facet features are concatenated.
struct MlpConfig {
    std::size_t input_dim = 0;
    std::vector<std::size_t> hidden = {64};
    std::size_t output_dim = 0;
    std::uint64_t seed = 42;

    std::vector<std::size_t> layer_sizes() const;
};

struct MlpParams {
    MlpConfig config;
    std::vector<std::vector<double>> weights;  // per layer, row-major [out][in]
    std::vector<std::vector<double>> biases;

    static MlpParams init(const MlpConfig& config);

    void save(const std::filesystem::path& path) const;
    static MlpParams load(const std::filesystem::path& path);
};

struct ForwardResult {
    std::vector<double> probs;   // sigmoid outputs, in (0,1)
    std::vector<double> logits;  // pre-activation outputs
};

ForwardResult mlp_forward(const MlpParams& params, const std::vector<double>& input);

/// Sum over dimensions of -[y log p + (1-y) log(1-p)]. Probabilities are
/// clamped to [1e-12, 1-1e-12] before the logs; that clamp is a numerical
/// guard only.
double mbce_loss(const std::vector<int>& y, const std::vector<double>& probs);

/// alpha * (1 - e^{-L_MBCE})^gamma * L_MBCE, the modulation applied to the
/// aggregate MBCE value. gamma = 0 reduces to alpha * L_MBCE exactly.
double focal_loss(const std::vector<int>& y, const std::vector<double>& probs, double alpha,
                  double gamma);

enum class LossKind { Mbce, Focal };

struct LossSpec {
    LossKind kind = LossKind::Mbce;
    double alpha = 1.0;
    double gamma = 2.0;
};

double loss_value(const LossSpec& spec, const std::vector<int>& y,
                  const std::vector<double>& probs);

struct Gradients {
    std::vector<std::vector<double>> weights;
    std::vector<std::vector<double>> biases;
};

/// Analytic backpropagation gradient of the configured loss for one sample.
Gradients loss_gradients(const MlpParams& params, const std::vector<double>& input,
                         const std::vector<int>& y, const LossSpec& spec);

struct TrainConfig {
    LossSpec loss;
    double learning_rate = 0.05;
    int epochs = 100;
    int batch_size = 16;
    std::uint64_t seed = 42;
};

struct LabeledVector {
    std::vector<double> input;
    std::vector<int> bits;
};

struct TrainHistory {
    std::vector<double> train_loss;  // per-epoch mean
    std::vector<double> val_ba;      // per-epoch mean over dimensions
    int best_epoch = -1;
};

struct TrainOutcome {
    MlpParams params;  // snapshot at the best validation BA
    TrainHistory history;
};

/// Mini-batch gradient descent with in-epoch deterministic shuffling. Given
/// the same data, config and seed the history is bit-identical run to run.
/// With a non-empty validation set the returned parameters are the snapshot
/// from the epoch with the best mean balanced accuracy.
TrainOutcome train_head(const std::vector<LabeledVector>& train,
                        const std::vector<LabeledVector>& val, const MlpConfig& mlp_config,
                        const TrainConfig& train_config);

/// Mean balanced accuracy of thresholded predictions (prob >= 0.5) against
/// the bit labels, averaged over output dimensions.
double mean_balanced_accuracy(const MlpParams& params, const std::vector<LabeledVector>& data);

}  // namespace picepr
