#pragma once

#include "votecal/labels.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace votecal {

/// Unnormalized class scores prior to softmax.
using LogitVector = std::vector<double>;

enum class Activation { relu };
enum class LossKind { ce_onehot, ce_distr, kl_distr };

const char* to_string(LossKind kind);
LossKind loss_kind_from_string(const std::string& name);

struct NetworkSpec {
    int input_dim = 0;
    std::vector<int> hidden_dims;
    int class_count = 0;
    double dropout_rate = 0.2;
    Activation activation = Activation::relu;

    void validate() const;
};

/// Dense layer, weights row-major [out][in].
struct Layer {
    int in_dim = 0;
    int out_dim = 0;
    std::vector<double> weights;
    std::vector<double> bias;
};

struct NetworkParams {
    NetworkSpec spec;
    std::vector<Layer> layers;
};

/// Symmetric uniform init scaled by 1/sqrt(fan_in), fully determined by seed.
NetworkParams init_params(const NetworkSpec& spec, std::uint64_t seed);

/// Logits for one input. Without a dropout seed the pass is deterministic;
/// with one, each hidden unit is zeroed with probability dropout_rate and
/// survivors are scaled by 1/(1-dropout_rate), the mask a pure function of
/// the seed.
LogitVector forward(const NetworkParams& params, std::span<const double> features,
                    std::optional<std::uint64_t> dropout_seed = std::nullopt);

/// Numerically stable softmax (max subtraction); shift-invariant.
ClassDistribution softmax(const LogitVector& logits);

/// Cross-entropy -sum_k target_k log pred_k, in nats. Returns +infinity when
/// the prediction assigns zero mass to a supported class.
double loss_ce(const ClassDistribution& target, const ClassDistribution& pred);

/// KL(target || pred) = sum_k target_k log(target_k / pred_k), in nats.
/// Zero-probability target terms contribute zero.
double loss_kl(const ClassDistribution& target, const ClassDistribution& pred);

struct TrainSample {
    std::vector<double> features;
    ClassDistribution target;
};

/// Mean per-sample loss over the batch.
double batch_loss(const NetworkParams& params, std::span<const TrainSample> batch, LossKind kind);

/// Analytic gradient of batch_loss with respect to every weight and bias,
/// returned in a NetworkParams of identical shape.
NetworkParams gradient(const NetworkParams& params, std::span<const TrainSample> batch,
                       LossKind kind);

struct TrainConfig {
    int batch_size = 64;
    double initial_lr = 2e-3;
    double lr_decay_factor = 0.5;
    int lr_decay_every_epochs = 5;
    int max_epochs = 100;
    int early_stop_patience = 20;
    std::uint64_t seed = 1;
    LossKind loss_kind = LossKind::ce_onehot;

    void validate() const;
};

struct EpochLog {
    int epoch = 0; // 1-based
    double train_loss = 0.0;
    double val_loss = 0.0;
    double learning_rate = 0.0;
};

struct TrainResult {
    NetworkParams params; // checkpoint with the lowest validation loss
    std::vector<EpochLog> log;
    int best_epoch = 0;
    double best_val_loss = 0.0;
};

/// SGD with Nesterov momentum 0.9. Per-epoch seeded shuffle, last partial
/// batch kept, learning rate decayed by lr_decay_factor every
/// lr_decay_every_epochs. Stops after early_stop_patience epochs without
/// strict validation improvement or at max_epochs, returning the best
/// checkpoint. Throws a runtime error naming the epoch if the loss turns
/// non-finite.
TrainResult train(const NetworkSpec& spec, std::span<const TrainSample> train_set,
                  std::span<const TrainSample> val_set, const TrainConfig& config);

/// Softmax of a deterministic forward pass.
ClassDistribution predict(const NetworkParams& params, std::span<const double> features);

/// Monte Carlo dropout: elementwise mean of n_passes softmax outputs from
/// dropout-sampled forward passes.
ClassDistribution predict_mc_dropout(const NetworkParams& params,
                                     std::span<const double> features, int n_passes,
                                     std::uint64_t seed);

// Model persistence: self-describing JSON with the spec, seed and row-major
// weight/bias arrays; a load reproduces predictions bit-exactly.
std::string model_json(const NetworkParams& params, std::uint64_t seed);
void save_model_json(const NetworkParams& params, std::uint64_t seed,
                     const std::filesystem::path& path);
NetworkParams load_model_json(const std::filesystem::path& path);

/// Feature file rows: sample_id,group_id,f1,...,fD
struct FeatureRecord {
    std::string sample_id;
    std::string group_id;
    std::vector<double> features;
};

std::vector<FeatureRecord> read_features_csv(const std::filesystem::path& path);
std::string features_csv(std::span<const FeatureRecord> records);

} // namespace votecal
