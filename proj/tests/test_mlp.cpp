#include <doctest.h>

#include <cmath>
#include <random>

#include "picepr/mlp.hpp"
#include "test_support.hpp"

using namespace picepr;
using picepr::testing::TempDir;

namespace {

// Central finite differences over every parameter coordinate.
double fd_relative_error(const MlpParams& params, const std::vector<double>& input,
                         const std::vector<int>& y, const LossSpec& spec) {
    const double h = 1e-5;
    Gradients analytic = loss_gradients(params, input, y, spec);
    double worst = 0.0;
    MlpParams probe = params;
    auto eval = [&] { return loss_value(spec, y, mlp_forward(probe, input).probs); };
    for (std::size_t l = 0; l < params.weights.size(); ++l) {
        for (auto which : {0, 1}) {
            auto& vec = which == 0 ? probe.weights[l] : probe.biases[l];
            const auto& grad = which == 0 ? analytic.weights[l] : analytic.biases[l];
            for (std::size_t i = 0; i < vec.size(); ++i) {
                double original = vec[i];
                vec[i] = original + h;
                double up = eval();
                vec[i] = original - h;
                double down = eval();
                vec[i] = original;
                double fd = (up - down) / (2.0 * h);
                double denom = std::max(1e-4, std::abs(fd) + std::abs(grad[i]));
                worst = std::max(worst, std::abs(fd - grad[i]) / denom);
            }
        }
    }
    return worst;
}

std::vector<double> random_input(std::mt19937_64& rng, std::size_t n) {
    std::vector<double> v(n);
    for (auto& x : v) x = (static_cast<double>(rng() % 2000) / 1000.0) - 1.0;
    return v;
}

std::vector<int> random_bits(std::mt19937_64& rng, std::size_t n) {
    std::vector<int> v(n);
    for (auto& b : v) b = static_cast<int>(rng() & 1);
    return v;
}

}  // namespace

TEST_CASE("zero-initialized network outputs probability one half") {
    MlpConfig config{4, {3}, 2, 1};
    MlpParams params = MlpParams::init(config);
    for (auto& w : params.weights) std::fill(w.begin(), w.end(), 0.0);
    for (auto& b : params.biases) std::fill(b.begin(), b.end(), 0.0);
    auto fwd = mlp_forward(params, {0.3, -0.2, 0.9, 0.0});
    for (double z : fwd.logits) CHECK(z == 0.0);
    for (double p : fwd.probs) CHECK(p == doctest::Approx(0.5));
}

TEST_CASE("probabilities stay inside the open unit interval") {
    std::mt19937_64 rng(2);
    MlpConfig config{6, {5, 4}, 3, 9};
    MlpParams params = MlpParams::init(config);
    for (int round = 0; round < 50; ++round) {
        auto fwd = mlp_forward(params, random_input(rng, 6));
        for (double p : fwd.probs) {
            CHECK(p > 0.0);
            CHECK(p < 1.0);
        }
    }
}

TEST_CASE("single-layer unit weight on a basis vector gives sigmoid(1)") {
    MlpConfig config{3, {}, 1, 1};
    MlpParams params = MlpParams::init(config);
    std::fill(params.weights[0].begin(), params.weights[0].end(), 0.0);
    params.weights[0][1] = 1.0;  // weight on input coordinate 1
    params.biases[0][0] = 0.0;
    auto fwd = mlp_forward(params, {0.0, 1.0, 0.0});
    CHECK(fwd.logits[0] == doctest::Approx(1.0));
    CHECK(fwd.probs[0] == doctest::Approx(0.7310585786300049).epsilon(1e-12));
}

TEST_CASE("mbce matches hand values and the per-term oracle") {
    CHECK(mbce_loss({1, 0}, {0.5, 0.5}) == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));

    // probs approaching the labels drive the loss to zero
    CHECK(mbce_loss({1, 0, 1}, {1.0 - 1e-9, 1e-9, 1.0 - 1e-9}) < 1e-7);

    std::mt19937_64 rng(4);
    for (int round = 0; round < 100; ++round) {
        std::size_t n = 1 + rng() % 6;
        auto y = random_bits(rng, n);
        std::vector<double> probs(n);
        for (auto& p : probs) p = 0.05 + 0.9 * (static_cast<double>(rng() % 1000) / 1000.0);
        double oracle = 0.0;
        for (std::size_t c = 0; c < n; ++c) {
            oracle += -(y[c] * std::log(probs[c]) + (1 - y[c]) * std::log(1.0 - probs[c]));
        }
        CHECK(std::abs(mbce_loss(y, probs) - oracle) < 1e-12);
    }

    CHECK_THROWS_AS(mbce_loss({1, 0}, {0.5}), DimensionMismatch);
}

TEST_CASE("focal loss follows the aggregate modulation formula") {
    std::vector<int> y = {1, 0};
    std::vector<double> probs = {0.5, 0.5};
    double l = 2.0 * std::log(2.0);  // 1.386294...

    SUBCASE("gamma = 0 reduces to alpha * MBCE bit-exactly") {
        CHECK(focal_loss(y, probs, 1.0, 0.0) == mbce_loss(y, probs));
        CHECK(focal_loss(y, probs, 2.5, 0.0) == 2.5 * mbce_loss(y, probs));
    }
    SUBCASE("hand evaluation at gamma = 2: e^{-2 ln 2} = 1/4") {
        double expected = (0.75) * (0.75) * l;
        CHECK(focal_loss(y, probs, 1.0, 2.0) == doctest::Approx(expected).epsilon(1e-12));
        CHECK(focal_loss(y, probs, 1.0, 2.0) == doctest::Approx(0.779790).epsilon(1e-6));
    }
    SUBCASE("zero MBCE gives zero focal for any alpha, gamma") {
        std::vector<double> perfect = {1.0 - 1e-12, 1e-12};
        CHECK(focal_loss(y, perfect, 3.0, 2.0) == doctest::Approx(0.0).epsilon(1e-9));
    }
    CHECK_THROWS_AS(focal_loss(y, probs, 0.0, 1.0), Error);
    CHECK_THROWS_AS(focal_loss(y, probs, 1.0, -0.5), Error);
}

TEST_CASE("analytic gradients match finite differences for both losses") {
    std::mt19937_64 rng(6);
    for (int round = 0; round < 12; ++round) {
        MlpConfig config;
        config.input_dim = 2 + rng() % 5;
        if (rng() & 1) config.hidden = {2 + rng() % 4};
        else config.hidden = {};
        config.output_dim = 2 + rng() % 3;
        config.seed = rng();
        MlpParams params = MlpParams::init(config);
        auto input = random_input(rng, config.input_dim);
        auto y = random_bits(rng, config.output_dim);

        for (double gamma : {0.0, 1.0, 2.0}) {
            LossSpec spec{gamma < 0.5 ? LossKind::Mbce : LossKind::Focal, 1.0, gamma};
            CAPTURE(round);
            CAPTURE(gamma);
            CHECK(fd_relative_error(params, input, y, spec) <= 1e-4);
        }
    }
}

TEST_CASE("training is deterministic and zero learning rate is inert") {
    std::mt19937_64 rng(8);
    std::vector<LabeledVector> train;
    for (int i = 0; i < 24; ++i) {
        train.push_back({random_input(rng, 4), random_bits(rng, 2)});
    }
    std::vector<LabeledVector> val(train.begin(), train.begin() + 8);
    MlpConfig mc{4, {6}, 2, 42};
    TrainConfig tc{{LossKind::Mbce, 1.0, 0.0}, 0.1, 15, 4, 42};

    SUBCASE("same seed twice gives bit-identical history") {
        TrainOutcome a = train_head(train, val, mc, tc);
        TrainOutcome b = train_head(train, val, mc, tc);
        REQUIRE(a.history.train_loss.size() == b.history.train_loss.size());
        for (std::size_t i = 0; i < a.history.train_loss.size(); ++i) {
            CHECK(a.history.train_loss[i] == b.history.train_loss[i]);
            CHECK(a.history.val_ba[i] == b.history.val_ba[i]);
        }
        CHECK(a.params.weights == b.params.weights);
    }
    SUBCASE("learning rate zero leaves the initialization untouched") {
        TrainConfig frozen = tc;
        frozen.learning_rate = 0.0;
        TrainOutcome out = train_head(train, {}, mc, frozen);
        MlpParams init = MlpParams::init(mc);
        CHECK(out.params.weights == init.weights);
        CHECK(out.params.biases == init.biases);
    }
    SUBCASE("empty training set is rejected") {
        CHECK_THROWS_WITH_AS(train_head({}, val, mc, tc), doctest::Contains("EmptyDataset"),
                             Error);
    }
}

TEST_CASE("train_head separates a linearly separable synthetic set") {
    // Labels are the sign pattern of the designated leading coordinates.
    std::mt19937_64 rng(10);
    auto make_set = [&](int n) {
        std::vector<LabeledVector> set;
        for (int i = 0; i < n; ++i) {
            std::vector<int> bits = random_bits(rng, 3);
            std::vector<double> input(6);
            for (int d = 0; d < 3; ++d) {
                input[d] = (bits[d] ? 1.0 : -1.0) + 0.1 * ((rng() % 100) / 100.0 - 0.5);
            }
            for (int d = 3; d < 6; ++d) input[d] = (rng() % 100) / 100.0 - 0.5;
            set.push_back({input, bits});
        }
        return set;
    };
    auto train = make_set(80);
    auto val = make_set(30);
    auto held_out = make_set(40);

    MlpConfig mc{6, {8}, 3, 42};
    TrainConfig tc{{LossKind::Focal, 1.0, 2.0}, 0.5, 120, 8, 42};
    TrainOutcome out = train_head(train, val, mc, tc);

    // Per-dimension accuracy on held-out data must clear 0.95.
    std::vector<int> correct(3, 0);
    for (const auto& sample : held_out) {
        auto fwd = mlp_forward(out.params, sample.input);
        for (int d = 0; d < 3; ++d) {
            correct[d] += (fwd.probs[d] >= 0.5 ? 1 : 0) == sample.bits[d];
        }
    }
    for (int d = 0; d < 3; ++d) {
        CHECK(static_cast<double>(correct[d]) / held_out.size() >= 0.95);
    }
}

TEST_CASE("head parameters survive a save/load round trip") {
    MlpConfig mc{5, {4}, 2, 77};
    MlpParams params = MlpParams::init(mc);
    TempDir dir("head");
    auto path = dir.path / "head.json";
    params.save(path);
    MlpParams loaded = MlpParams::load(path);
    CHECK(loaded.weights == params.weights);
    CHECK(loaded.biases == params.biases);
    CHECK(loaded.config.input_dim == mc.input_dim);
    CHECK(loaded.config.hidden == mc.hidden);
}
