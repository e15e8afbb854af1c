#include "votecal/network.hpp"

#include "oracles.hpp"
#include "votecal/common.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace votecal;

namespace {

NetworkSpec small_spec(int input = 3, std::vector<int> hidden = {4}, int classes = 2,
                       double dropout = 0.0) {
    NetworkSpec spec;
    spec.input_dim = input;
    spec.hidden_dims = std::move(hidden);
    spec.class_count = classes;
    spec.dropout_rate = dropout;
    return spec;
}

NetworkParams zero_params(const NetworkSpec& spec) {
    NetworkParams params = init_params(spec, 1);
    for (Layer& layer : params.layers) {
        std::fill(layer.weights.begin(), layer.weights.end(), 0.0);
        std::fill(layer.bias.begin(), layer.bias.end(), 0.0);
    }
    return params;
}

std::vector<TrainSample> random_batch(const NetworkSpec& spec, int n, std::uint64_t seed) {
    std::vector<TrainSample> batch;
    for (int i = 0; i < n; ++i) {
        TrainSample sample;
        for (int d = 0; d < spec.input_dim; ++d) {
            sample.features.push_back(
                rng::normal(seed, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(d)));
        }
        sample.target = oracle::random_simplex(spec.class_count, seed ^ 0xabcd,
                                               static_cast<std::uint64_t>(i));
        batch.push_back(std::move(sample));
    }
    return batch;
}

} // namespace

TEST_CASE("forward is linear in the parameters and deterministic") {
    NetworkSpec spec = small_spec();
    NetworkParams zeros = zero_params(spec);
    LogitVector logits = forward(zeros, std::vector<double>{0.5, -1.0, 2.0});
    for (double z : logits) CHECK(z == 0.0);

    NetworkParams params = init_params(spec, 9);
    std::vector<double> x{0.1, 0.2, 0.3};
    CHECK(forward(params, x) == forward(params, x));

    CHECK_THROWS_AS(forward(params, std::vector<double>{1.0}), Error);
}

TEST_CASE("dropout-sampled forward is reproducible from the seed") {
    NetworkSpec spec = small_spec(3, {16}, 2, 0.5);
    NetworkParams params = init_params(spec, 21);
    std::vector<double> x{0.4, -0.2, 1.1};
    CHECK(forward(params, x, 77u) == forward(params, x, 77u));
    // different seeds give a different mask with overwhelming probability
    CHECK(forward(params, x, 77u) != forward(params, x, 78u));
}

TEST_CASE("softmax matches hand values and is shift invariant") {
    ClassDistribution even = softmax({0.0, 0.0});
    CHECK(even.probs[0] == 0.5);
    CHECK(even.probs[1] == 0.5);

    ClassDistribution skew = softmax({2.0, 0.0});
    CHECK(skew.probs[0] == doctest::Approx(0.8807970779778824).epsilon(1e-12));
    CHECK(skew.probs[1] == doctest::Approx(0.11920292202211755).epsilon(1e-12));

    LogitVector z{3.0, -1.0, 0.0, 7.0};
    LogitVector shifted = z;
    for (double& v : shifted) v += 7.0;
    ClassDistribution a = softmax(z);
    ClassDistribution b = softmax(shifted);
    for (std::size_t k = 0; k < a.size(); ++k) {
        CHECK(a.probs[k] == doctest::Approx(b.probs[k]).epsilon(1e-12));
    }

    CHECK_THROWS_AS(softmax({1.0, std::numeric_limits<double>::quiet_NaN()}), Error);
}

TEST_CASE("loss_ce hand values, perfect prediction and infinity sentinel") {
    CHECK(loss_ce(ClassDistribution::one_hot(1, 2), ClassDistribution{{0.5, 0.5}}) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-15));
    ClassDistribution y{{0.3, 0.7}};
    CHECK(loss_ce(y, y) == doctest::Approx(0.6108643020548935).epsilon(1e-12));
    CHECK(loss_ce(ClassDistribution::one_hot(1, 2), ClassDistribution{{1.0, 0.0}}) == 0.0);
    CHECK(std::isinf(loss_ce(ClassDistribution::one_hot(2, 2), ClassDistribution{{1.0, 0.0}})));
    CHECK_THROWS_AS(loss_ce(y, ClassDistribution{{1.0, 0.0, 0.0}}), Error);
}

TEST_CASE("loss_kl hand values, zero convention and non-negativity") {
    ClassDistribution half{{0.5, 0.5}};
    CHECK(loss_kl(half, half) == 0.0);
    CHECK(loss_kl(ClassDistribution{{1.0, 0.0}}, half) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK(loss_kl(ClassDistribution{{0.3, 0.7}}, half) ==
          doctest::Approx(0.08228287850505178).epsilon(1e-12));

    for (std::uint64_t i = 0; i < 500; ++i) {
        ClassDistribution target = oracle::random_simplex(5, 31, i);
        ClassDistribution pred = oracle::random_simplex(5, 37, i);
        const double kl = loss_kl(target, pred);
        CHECK(kl >= 0.0);
        CHECK(loss_kl(target, target) == 0.0);
        // CE(y,p) = H(y) + KL(y||p)
        const double ce = loss_ce(target, pred);
        const double h = vote_entropy(target);
        CHECK(std::fabs(ce - (h + kl)) <= 1e-9);
    }
}

TEST_CASE("batch_loss is the mean of per-sample losses") {
    NetworkSpec spec = small_spec(2, {3}, 2);
    NetworkParams params = init_params(spec, 5);

    std::vector<TrainSample> twice = {{{0.5, 0.5}, ClassDistribution{{1.0, 0.0}}},
                                      {{0.5, 0.5}, ClassDistribution{{1.0, 0.0}}}};
    std::vector<TrainSample> once(twice.begin(), twice.begin() + 1);
    CHECK(batch_loss(params, twice, LossKind::ce_onehot) ==
          doctest::Approx(batch_loss(params, once, LossKind::ce_onehot)).epsilon(1e-15));

    std::vector<TrainSample> mixed = {{{0.5, 0.5}, ClassDistribution{{1.0, 0.0}}},
                                      {{-1.0, 2.0}, ClassDistribution{{0.25, 0.75}}}};
    const double a = batch_loss(params, std::span(mixed).first(1), LossKind::ce_distr);
    const double b = batch_loss(params, std::span(mixed).subspan(1), LossKind::ce_distr);
    CHECK(batch_loss(params, mixed, LossKind::ce_distr) ==
          doctest::Approx((a + b) / 2.0).epsilon(1e-15));

    // a prediction equal to the target makes the KL objective vanish
    NetworkParams zeros = zero_params(small_spec(2, {2}, 2));
    std::vector<TrainSample> uniform_target = {{{1.0, -1.0}, ClassDistribution{{0.5, 0.5}}}};
    CHECK(batch_loss(zeros, uniform_target, LossKind::kl_distr) == 0.0);

    CHECK_THROWS_AS(batch_loss(params, std::span<const TrainSample>{}, LossKind::ce_onehot), Error);
}

TEST_CASE("gradient vanishes at a perfect fit and is invariant to batch duplication") {
    // zero net predicts uniform; uniform targets put the loss at a stationary point
    NetworkSpec spec = small_spec(2, {2}, 2);
    NetworkParams zeros = zero_params(spec);
    std::vector<TrainSample> batch = {{{0.3, -0.7}, ClassDistribution{{0.5, 0.5}}}};
    NetworkParams grad = gradient(zeros, batch, LossKind::kl_distr);
    const Layer& out = grad.layers.back();
    for (double g : out.bias) CHECK(g == 0.0);

    NetworkParams params = init_params(spec, 13);
    std::vector<TrainSample> base = random_batch(spec, 3, 41);
    std::vector<TrainSample> doubled = base;
    doubled.insert(doubled.end(), base.begin(), base.end());
    NetworkParams g1 = gradient(params, base, LossKind::ce_distr);
    NetworkParams g2 = gradient(params, doubled, LossKind::ce_distr);
    CHECK(oracle::gradient_relative_error(g1, g2) <= 1e-12);
}

TEST_CASE("gradient matches central finite differences on random small networks") {
    int checked = 0;
    for (std::uint64_t trial = 0; trial < 10; ++trial) {
        const int input = 1 + static_cast<int>(rng::uniform(51, trial, 0) * 4);
        const int classes = 2 + static_cast<int>(rng::uniform(51, trial, 1) * 4);
        const int layers = 1 + static_cast<int>(rng::uniform(51, trial, 2) * 3);
        std::vector<int> hidden;
        for (int l = 0; l < layers; ++l) {
            hidden.push_back(1 + static_cast<int>(
                rng::uniform(51, trial, 3 + static_cast<std::uint64_t>(l)) * 7));
        }
        NetworkSpec spec = small_spec(input, hidden, classes);
        // resample both the parameter draw and the batch until no hidden
        // pre-activation sits on a ReLU kink, where finite differences lie
        NetworkParams params = init_params(spec, 100 + trial);
        std::vector<TrainSample> batch = random_batch(spec, 4, 200 + trial);
        for (std::uint64_t param_salt = 0;
             !oracle::fd_safe(params, batch) && param_salt < 20; ++param_salt) {
            params = init_params(spec, 100 + trial + 331 * (param_salt + 1));
            batch = random_batch(spec, 4, 200 + trial);
            for (std::uint64_t salt = 1; !oracle::fd_safe(params, batch) && salt < 20; ++salt) {
                batch = random_batch(spec, 4, 200 + trial + 7919 * salt);
            }
        }
        REQUIRE(oracle::fd_safe(params, batch));
        for (LossKind kind : {LossKind::ce_onehot, LossKind::ce_distr, LossKind::kl_distr}) {
            NetworkParams analytic = gradient(params, batch, kind);
            NetworkParams numeric = oracle::fd_gradient(params, batch, kind);
            CHECK(oracle::gradient_relative_error(analytic, numeric) <= 1e-4);
            ++checked;
        }
    }
    CHECK(checked == 30);
}

TEST_CASE("train fits a separable toy problem to full accuracy") {
    NetworkSpec spec = small_spec(2, {8}, 2);
    std::vector<TrainSample> data;
    for (std::uint64_t i = 0; i < 80; ++i) {
        const double cls = i % 2 == 0 ? 1.0 : -1.0;
        TrainSample sample;
        sample.features = {cls * 2.0 + 0.3 * rng::normal(61, i, 0),
                           cls * 2.0 + 0.3 * rng::normal(61, i, 1)};
        sample.target = ClassDistribution::one_hot(i % 2 == 0 ? 1 : 2, 2);
        data.push_back(std::move(sample));
    }
    std::vector<TrainSample> val(data.begin() + 60, data.end());
    std::vector<TrainSample> train_set(data.begin(), data.begin() + 60);

    TrainConfig config;
    config.batch_size = 16;
    config.initial_lr = 0.05;
    config.max_epochs = 60;
    config.early_stop_patience = 20;
    config.seed = 3;
    config.loss_kind = LossKind::ce_onehot;
    TrainResult result = train(spec, train_set, val, config);

    int correct = 0;
    for (const TrainSample& sample : train_set) {
        if (predict(result.params, sample.features).argmax() == sample.target.argmax()) ++correct;
    }
    CHECK(correct == static_cast<int>(train_set.size()));
}

TEST_CASE("train stops after two epochs with patience 1 and zero learning rate") {
    NetworkSpec spec = small_spec(2, {3}, 2);
    std::vector<TrainSample> data = random_batch(spec, 8, 71);
    TrainConfig config;
    config.batch_size = 4;
    config.initial_lr = 0.0;
    config.max_epochs = 50;
    config.early_stop_patience = 1;
    config.seed = 7;
    TrainResult result = train(spec, data, data, config);
    CHECK(result.log.size() == 2);
    CHECK(result.best_epoch == 1);
}

TEST_CASE("train reports divergence with the epoch index") {
    NetworkSpec spec = small_spec(2, {8}, 2);
    std::vector<TrainSample> data;
    for (int i = 0; i < 8; ++i) {
        data.push_back({{50.0, -50.0}, ClassDistribution::one_hot(1 + i % 2, 2)});
    }
    TrainConfig config;
    config.batch_size = 4;
    config.initial_lr = 1e9; // blows the weights up within the first epochs
    config.max_epochs = 50;
    config.early_stop_patience = 50;
    CHECK_THROWS_WITH_AS(train(spec, data, data, config), doctest::Contains("epoch"), Error);
}

TEST_CASE("train is a pure function of spec, data and config") {
    NetworkSpec spec = small_spec(3, {6}, 3, 0.2);
    std::vector<TrainSample> data = random_batch(spec, 40, 81);
    std::vector<TrainSample> val = random_batch(spec, 10, 82);
    TrainConfig config;
    config.batch_size = 8;
    config.max_epochs = 6;
    config.seed = 19;
    config.loss_kind = LossKind::ce_distr;

    TrainResult first = train(spec, data, val, config);
    TrainResult second = train(spec, data, val, config);
    REQUIRE(first.log.size() == second.log.size());
    for (std::size_t e = 0; e < first.log.size(); ++e) {
        CHECK(first.log[e].train_loss == second.log[e].train_loss);
        CHECK(first.log[e].val_loss == second.log[e].val_loss);
    }
    for (std::size_t l = 0; l < first.params.layers.size(); ++l) {
        CHECK(first.params.layers[l].weights == second.params.layers[l].weights);
        CHECK(first.params.layers[l].bias == second.params.layers[l].bias);
    }
}

TEST_CASE("learning rate decays by the configured factor every N epochs") {
    NetworkSpec spec = small_spec(2, {3}, 2);
    std::vector<TrainSample> data = random_batch(spec, 8, 91);
    TrainConfig config;
    config.batch_size = 8;
    config.initial_lr = 2e-3;
    config.lr_decay_factor = 0.5;
    config.lr_decay_every_epochs = 2;
    config.max_epochs = 5;
    config.early_stop_patience = 50;
    TrainResult result = train(spec, data, data, config);
    REQUIRE(result.log.size() == 5);
    CHECK(result.log[0].learning_rate == 2e-3);
    CHECK(result.log[1].learning_rate == 2e-3);
    CHECK(result.log[2].learning_rate == 1e-3);
    CHECK(result.log[3].learning_rate == 1e-3);
    CHECK(result.log[4].learning_rate == 5e-4);
}

TEST_CASE("predict modes agree when dropout is inactive and stay on the simplex") {
    NetworkSpec spec = small_spec(3, {5}, 4, 0.0);
    NetworkParams params = init_params(spec, 23);
    std::vector<double> x{0.2, -0.4, 0.9};

    ClassDistribution plain = predict(params, x);
    ClassDistribution mc = predict_mc_dropout(params, x, 20, 5);
    for (std::size_t k = 0; k < plain.size(); ++k) {
        CHECK(mc.probs[k] == doctest::Approx(plain.probs[k]).epsilon(1e-12));
    }

    NetworkSpec dropout_spec = small_spec(3, {12}, 4, 0.3);
    NetworkParams dropout_params = init_params(dropout_spec, 29);
    ClassDistribution averaged = predict_mc_dropout(dropout_params, x, 20, 5);
    CHECK(averaged.is_valid(1e-9));
    CHECK(predict_mc_dropout(dropout_params, x, 20, 5).probs == averaged.probs);

    CHECK_THROWS_AS(predict_mc_dropout(params, x, 0, 5), Error);
}

TEST_CASE("model JSON round trip reproduces predictions bit-exactly") {
    NetworkSpec spec = small_spec(4, {7, 5}, 3, 0.1);
    NetworkParams params = init_params(spec, 37);
    const std::filesystem::path path =
        std::filesystem::temp_directory_path() / "votecal-model-test.json";
    save_model_json(params, 37, path);
    NetworkParams loaded = load_model_json(path);

    REQUIRE(loaded.layers.size() == params.layers.size());
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        CHECK(loaded.layers[l].weights == params.layers[l].weights);
        CHECK(loaded.layers[l].bias == params.layers[l].bias);
    }
    std::vector<double> x{0.1, -0.7, 0.3, 2.0};
    CHECK(predict(loaded, x).probs == predict(params, x).probs);

    CHECK_THROWS_AS(load_model_json(std::filesystem::temp_directory_path() / "missing.json"),
                    Error);
}

TEST_CASE("feature CSV round trip") {
    const std::filesystem::path path =
        std::filesystem::temp_directory_path() / "votecal-features-test.csv";
    std::vector<FeatureRecord> records = {{"s1", "g1", {0.25, -1.5}},
                                          {"s2", "g2", {1.0 / 3.0, 2e-17}}};
    {
        std::ofstream out(path);
        out << features_csv(records);
    }
    std::vector<FeatureRecord> loaded = read_features_csv(path);
    REQUIRE(loaded.size() == 2);
    CHECK(loaded[0].features == records[0].features);
    CHECK(loaded[1].features == records[1].features);
    CHECK(loaded[1].group_id == "g2");
}
