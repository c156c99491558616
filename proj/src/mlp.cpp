#include "picepr/mlp.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

#include "picepr/metrics.hpp"
#include "picepr/util.hpp"

namespace picepr {

namespace {

constexpr double kProbClamp = 1e-12;

double clamp_prob(double p) {
    if (p < kProbClamp) return kProbClamp;
    if (p > 1.0 - kProbClamp) return 1.0 - kProbClamp;
    return p;
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// 53-bit uniform in [0,1) from raw engine output; avoids the
// implementation-defined behavior of std::uniform_real_distribution.
double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0);
}

// d(focal)/d(mbce): alpha * [gamma * e^{-L} * u^{gamma-1} * L + u^gamma]
// with u = 1 - e^{-L}. Branches keep the gamma = 0 and L = 0 edges exact.
double focal_outer_derivative(double mbce, double alpha, double gamma) {
    if (gamma == 0.0) return alpha;
    double e = std::exp(-mbce);
    double u = 1.0 - e;
    if (u <= 0.0) return 0.0;
    return alpha * (gamma * e * std::pow(u, gamma - 1.0) * mbce + std::pow(u, gamma));
}

void check_dims(const MlpParams& params, const std::vector<double>& input) {
    if (input.size() != params.config.input_dim) {
        throw DimensionMismatch("input length " + std::to_string(input.size()) +
                                " != configured input_dim " +
                                std::to_string(params.config.input_dim));
    }
}

}  // namespace

std::vector<std::size_t> MlpConfig::layer_sizes() const {
    std::vector<std::size_t> sizes;
    sizes.push_back(input_dim);
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(output_dim);
    return sizes;
}

MlpParams MlpParams::init(const MlpConfig& config) {
    if (config.input_dim == 0 || config.output_dim == 0) {
        throw DimensionMismatch("input_dim and output_dim must be positive");
    }
    MlpParams params;
    params.config = config;
    std::mt19937_64 rng(config.seed);
    auto sizes = config.layer_sizes();
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        std::size_t fan_in = sizes[l];
        std::size_t fan_out = sizes[l + 1];
        double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
        std::vector<double> w(fan_out * fan_in);
        for (double& v : w) v = (2.0 * uniform01(rng) - 1.0) * scale;
        params.weights.push_back(std::move(w));
        params.biases.emplace_back(fan_out, 0.0);
    }
    return params;
}

ForwardResult mlp_forward(const MlpParams& params, const std::vector<double>& input) {
    check_dims(params, input);
    std::vector<double> activation = input;
    std::vector<double> z;
    const std::size_t layers = params.weights.size();
    for (std::size_t l = 0; l < layers; ++l) {
        const auto& w = params.weights[l];
        const auto& b = params.biases[l];
        const std::size_t out_dim = b.size();
        const std::size_t in_dim = activation.size();
        z.assign(out_dim, 0.0);
        for (std::size_t o = 0; o < out_dim; ++o) {
            double acc = b[o];
            const double* row = w.data() + o * in_dim;
            for (std::size_t i = 0; i < in_dim; ++i) acc += row[i] * activation[i];
            z[o] = acc;
        }
        if (l + 1 < layers) {
            activation.resize(out_dim);
            for (std::size_t o = 0; o < out_dim; ++o) activation[o] = std::tanh(z[o]);
        }
    }
    ForwardResult result;
    result.logits = z;
    result.probs.resize(z.size());
    for (std::size_t c = 0; c < z.size(); ++c) result.probs[c] = sigmoid(z[c]);
    return result;
}

double mbce_loss(const std::vector<int>& y, const std::vector<double>& probs) {
    if (y.size() != probs.size()) {
        throw DimensionMismatch("label and probability lengths differ");
    }
    double loss = 0.0;
    for (std::size_t c = 0; c < y.size(); ++c) {
        double p = clamp_prob(probs[c]);
        loss -= y[c] ? std::log(p) : std::log(1.0 - p);
    }
    return loss;
}

double focal_loss(const std::vector<int>& y, const std::vector<double>& probs, double alpha,
                  double gamma) {
    if (alpha <= 0.0) throw Error("InvalidValue", "focal alpha must be > 0");
    if (gamma < 0.0) throw Error("InvalidValue", "focal gamma must be >= 0");
    double l = mbce_loss(y, probs);
    return alpha * std::pow(1.0 - std::exp(-l), gamma) * l;
}

double loss_value(const LossSpec& spec, const std::vector<int>& y,
                  const std::vector<double>& probs) {
    return spec.kind == LossKind::Mbce ? mbce_loss(y, probs)
                                       : focal_loss(y, probs, spec.alpha, spec.gamma);
}

Gradients loss_gradients(const MlpParams& params, const std::vector<double>& input,
                         const std::vector<int>& y, const LossSpec& spec) {
    check_dims(params, input);
    if (y.size() != params.config.output_dim) {
        throw DimensionMismatch("label length does not match output_dim");
    }

    // Forward pass, keeping per-layer activations.
    const std::size_t layers = params.weights.size();
    std::vector<std::vector<double>> activations;  // activations[0] = input
    activations.push_back(input);
    for (std::size_t l = 0; l < layers; ++l) {
        const auto& w = params.weights[l];
        const auto& b = params.biases[l];
        const auto& prev = activations.back();
        std::vector<double> z(b.size());
        for (std::size_t o = 0; o < b.size(); ++o) {
            double acc = b[o];
            const double* row = w.data() + o * prev.size();
            for (std::size_t i = 0; i < prev.size(); ++i) acc += row[i] * prev[i];
            z[o] = acc;
        }
        if (l + 1 < layers) {
            for (double& v : z) v = std::tanh(v);
        } else {
            for (double& v : z) v = sigmoid(v);
        }
        activations.push_back(std::move(z));
    }
    const std::vector<double>& probs = activations.back();

    // d(loss)/d(output logit): (p - y), scaled by the focal outer factor.
    double outer = 1.0;
    if (spec.kind == LossKind::Focal) {
        outer = focal_outer_derivative(mbce_loss(y, probs), spec.alpha, spec.gamma);
    }
    std::vector<double> delta(probs.size());
    for (std::size_t c = 0; c < probs.size(); ++c) {
        delta[c] = outer * (probs[c] - static_cast<double>(y[c]));
    }

    Gradients grads;
    grads.weights.resize(layers);
    grads.biases.resize(layers);
    for (std::size_t li = layers; li-- > 0;) {
        const auto& prev = activations[li];
        grads.weights[li].assign(params.weights[li].size(), 0.0);
        grads.biases[li].assign(params.biases[li].size(), 0.0);
        for (std::size_t o = 0; o < delta.size(); ++o) {
            grads.biases[li][o] = delta[o];
            double* row = grads.weights[li].data() + o * prev.size();
            for (std::size_t i = 0; i < prev.size(); ++i) row[i] = delta[o] * prev[i];
        }
        if (li == 0) break;
        // Propagate through the tanh layer below.
        std::vector<double> next_delta(prev.size(), 0.0);
        for (std::size_t i = 0; i < prev.size(); ++i) {
            double acc = 0.0;
            for (std::size_t o = 0; o < delta.size(); ++o) {
                acc += params.weights[li][o * prev.size() + i] * delta[o];
            }
            next_delta[i] = acc * (1.0 - prev[i] * prev[i]);
        }
        delta = std::move(next_delta);
    }
    return grads;
}

double mean_balanced_accuracy(const MlpParams& params, const std::vector<LabeledVector>& data) {
    const std::size_t dims = params.config.output_dim;
    std::vector<ConfusionCounts> counts(dims);
    for (const auto& sample : data) {
        auto fwd = mlp_forward(params, sample.input);
        for (std::size_t d = 0; d < dims; ++d) {
            int pred = fwd.probs[d] >= 0.5 ? 1 : 0;
            int truth = sample.bits.at(d);
            if (truth == 1 && pred == 1) ++counts[d].tp;
            else if (truth == 0 && pred == 1) ++counts[d].fp;
            else if (truth == 0 && pred == 0) ++counts[d].tn;
            else ++counts[d].fn;
        }
    }
    double total = 0.0;
    for (const auto& cc : counts) total += metrics(cc).ba;
    return total / static_cast<double>(dims);
}

TrainOutcome train_head(const std::vector<LabeledVector>& train,
                        const std::vector<LabeledVector>& val, const MlpConfig& mlp_config,
                        const TrainConfig& train_config) {
    if (train.empty()) throw Error("EmptyDataset", "training set is empty");
    if (train_config.learning_rate < 0.0) throw Error("InvalidValue", "learning_rate must be >= 0");
    for (const auto& s : train) {
        if (s.input.size() != mlp_config.input_dim || s.bits.size() != mlp_config.output_dim) {
            throw DimensionMismatch("training sample does not match MLP configuration");
        }
    }

    MlpParams params = MlpParams::init(mlp_config);
    MlpParams best = params;
    TrainHistory history;
    double best_ba = -1.0;

    const std::size_t n = train.size();
    const std::size_t batch =
        std::max<std::size_t>(1, static_cast<std::size_t>(train_config.batch_size));

    for (int epoch = 0; epoch < train_config.epochs; ++epoch) {
        auto order = shuffled_indices(n, train_config.seed + static_cast<std::uint64_t>(epoch));
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < n; start += batch) {
            std::size_t end = std::min(start + batch, n);
            Gradients acc;
            for (std::size_t k = start; k < end; ++k) {
                const LabeledVector& sample = train[order[k]];
                auto fwd = mlp_forward(params, sample.input);
                epoch_loss += loss_value(train_config.loss, sample.bits, fwd.probs);
                Gradients g = loss_gradients(params, sample.input, sample.bits, train_config.loss);
                if (acc.weights.empty()) {
                    acc = std::move(g);
                } else {
                    for (std::size_t l = 0; l < g.weights.size(); ++l) {
                        for (std::size_t i = 0; i < g.weights[l].size(); ++i)
                            acc.weights[l][i] += g.weights[l][i];
                        for (std::size_t i = 0; i < g.biases[l].size(); ++i)
                            acc.biases[l][i] += g.biases[l][i];
                    }
                }
            }
            double scale = train_config.learning_rate / static_cast<double>(end - start);
            for (std::size_t l = 0; l < params.weights.size(); ++l) {
                for (std::size_t i = 0; i < params.weights[l].size(); ++i)
                    params.weights[l][i] -= scale * acc.weights[l][i];
                for (std::size_t i = 0; i < params.biases[l].size(); ++i)
                    params.biases[l][i] -= scale * acc.biases[l][i];
            }
        }
        history.train_loss.push_back(epoch_loss / static_cast<double>(n));

        if (!val.empty()) {
            double ba = mean_balanced_accuracy(params, val);
            history.val_ba.push_back(ba);
            if (ba > best_ba) {
                best_ba = ba;
                best = params;
                history.best_epoch = epoch;
            }
        }
    }

    TrainOutcome outcome;
    if (val.empty()) {
        outcome.params = std::move(params);
        history.best_epoch = train_config.epochs - 1;
    } else {
        outcome.params = std::move(best);
    }
    outcome.history = std::move(history);
    return outcome;
}

void MlpParams::save(const std::filesystem::path& path) const {
    nlohmann::ordered_json j;
    j["format"] = "picepr-mlp-v1";
    j["config"] = {{"input_dim", config.input_dim},
                   {"hidden", config.hidden},
                   {"output_dim", config.output_dim},
                   {"seed", config.seed}};
    j["weights"] = weights;
    j["biases"] = biases;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("IoError", "cannot open for writing: " + path.string());
    out << j.dump(2) << "\n";
}

MlpParams MlpParams::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("IoError", "cannot open: " + path.string());
    nlohmann::json j = nlohmann::json::parse(in);
    if (j.value("format", "") != "picepr-mlp-v1") {
        throw Error("IoError", "unrecognized head format in " + path.string());
    }
    MlpParams params;
    params.config.input_dim = j.at("config").at("input_dim").get<std::size_t>();
    params.config.hidden = j.at("config").at("hidden").get<std::vector<std::size_t>>();
    params.config.output_dim = j.at("config").at("output_dim").get<std::size_t>();
    params.config.seed = j.at("config").at("seed").get<std::uint64_t>();
    params.weights = j.at("weights").get<std::vector<std::vector<double>>>();
    params.biases = j.at("biases").get<std::vector<std::vector<double>>>();
    return params;
}

}  // namespace picepr
