#include "votecal/network.hpp"

#include "votecal/common.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace votecal {

namespace {

const std::uint64_t kKeyInit = fnv1a("weight-init");
const std::uint64_t kKeyDropout = fnv1a("dropout-mask");
const std::uint64_t kKeyShuffle = fnv1a("epoch-shuffle");
const std::uint64_t kKeyTrainDropout = fnv1a("train-dropout");
const std::uint64_t kKeyMcPass = fnv1a("mc-pass");

constexpr double kMomentum = 0.9;

} // namespace

const char* to_string(LossKind kind) {
    switch (kind) {
        case LossKind::ce_onehot: return "ce_onehot";
        case LossKind::ce_distr: return "ce_distr";
        case LossKind::kl_distr: return "kl_distr";
    }
    return "unknown";
}

LossKind loss_kind_from_string(const std::string& name) {
    if (name == "ce_onehot") return LossKind::ce_onehot;
    if (name == "ce_distr") return LossKind::ce_distr;
    if (name == "kl_distr") return LossKind::kl_distr;
    throw Error::input("unknown loss kind '" + name + "'");
}

void NetworkSpec::validate() const {
    if (input_dim < 1) throw Error::input("network spec: input_dim must be positive");
    if (class_count < 2) throw Error::input("network spec: class_count must be at least 2");
    if (hidden_dims.empty()) throw Error::input("network spec: at least one hidden layer required");
    for (int h : hidden_dims) {
        if (h < 1) throw Error::input("network spec: hidden layer widths must be positive");
    }
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
        throw Error::input("network spec: dropout_rate must lie in [0,1)");
    }
}

NetworkParams init_params(const NetworkSpec& spec, std::uint64_t seed) {
    spec.validate();
    NetworkParams params;
    params.spec = spec;
    int in_dim = spec.input_dim;
    std::vector<int> dims = spec.hidden_dims;
    dims.push_back(spec.class_count);
    for (std::size_t l = 0; l < dims.size(); ++l) {
        Layer layer;
        layer.in_dim = in_dim;
        layer.out_dim = dims[l];
        layer.weights.resize(static_cast<std::size_t>(layer.in_dim) * layer.out_dim);
        layer.bias.assign(static_cast<std::size_t>(layer.out_dim), 0.0);
        const double scale = 1.0 / std::sqrt(static_cast<double>(layer.in_dim));
        for (std::size_t i = 0; i < layer.weights.size(); ++i) {
            double u = rng::uniform(seed, kKeyInit + l, i);
            layer.weights[i] = (2.0 * u - 1.0) * scale;
        }
        params.layers.push_back(std::move(layer));
        in_dim = dims[l];
    }
    return params;
}

namespace {

struct ForwardTrace {
    // activations[0] is the input; activations[l+1] the output of hidden
    // layer l after ReLU and dropout. pre_acts and masks are per hidden layer.
    std::vector<std::vector<double>> activations;
    std::vector<std::vector<double>> pre_acts;
    std::vector<std::vector<double>> masks; // dropout scale per unit, empty when off
    LogitVector logits;
};

std::vector<double> dropout_mask(const NetworkParams& params, std::size_t layer_index,
                                 std::uint64_t dropout_seed) {
    const Layer& layer = params.layers[layer_index];
    const double rate = params.spec.dropout_rate;
    std::vector<double> mask(static_cast<std::size_t>(layer.out_dim), 1.0);
    if (rate <= 0.0) return mask;
    const double keep_scale = 1.0 / (1.0 - rate);
    for (std::size_t u = 0; u < mask.size(); ++u) {
        double draw = rng::uniform(dropout_seed, kKeyDropout + layer_index, u);
        mask[u] = draw < rate ? 0.0 : keep_scale;
    }
    return mask;
}

ForwardTrace forward_trace(const NetworkParams& params, std::span<const double> features,
                           std::optional<std::uint64_t> dropout_seed) {
    if (features.size() != static_cast<std::size_t>(params.spec.input_dim)) {
        throw Error::input("forward: feature length " + std::to_string(features.size()) +
                           " does not match input_dim " + std::to_string(params.spec.input_dim));
    }
    ForwardTrace trace;
    trace.activations.emplace_back(features.begin(), features.end());
    const std::size_t hidden_layers = params.layers.size() - 1;
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        const Layer& layer = params.layers[l];
        const std::vector<double>& input = trace.activations.back();
        std::vector<double> z(static_cast<std::size_t>(layer.out_dim));
        for (int o = 0; o < layer.out_dim; ++o) {
            double acc = layer.bias[static_cast<std::size_t>(o)];
            const double* row = layer.weights.data() + static_cast<std::size_t>(o) * layer.in_dim;
            for (int i = 0; i < layer.in_dim; ++i) {
                acc += row[i] * input[static_cast<std::size_t>(i)];
            }
            z[static_cast<std::size_t>(o)] = acc;
        }
        if (l == hidden_layers) {
            trace.logits = std::move(z);
            break;
        }
        trace.pre_acts.push_back(z);
        std::vector<double> activated(z.size());
        for (std::size_t u = 0; u < z.size(); ++u) {
            activated[u] = z[u] > 0.0 ? z[u] : 0.0;
        }
        if (dropout_seed) {
            std::vector<double> mask = dropout_mask(params, l, *dropout_seed);
            for (std::size_t u = 0; u < activated.size(); ++u) activated[u] *= mask[u];
            trace.masks.push_back(std::move(mask));
        }
        trace.activations.push_back(std::move(activated));
    }
    return trace;
}

NetworkParams zero_like(const NetworkParams& params) {
    NetworkParams zeros;
    zeros.spec = params.spec;
    zeros.layers.reserve(params.layers.size());
    for (const Layer& layer : params.layers) {
        Layer z;
        z.in_dim = layer.in_dim;
        z.out_dim = layer.out_dim;
        z.weights.assign(layer.weights.size(), 0.0);
        z.bias.assign(layer.bias.size(), 0.0);
        zeros.layers.push_back(std::move(z));
    }
    return zeros;
}

// Backpropagates one sample's output-layer error (already scaled by the batch
// normalization) through the trace, accumulating into `grad`.
void accumulate_backward(const NetworkParams& params, const ForwardTrace& trace,
                         std::vector<double> delta, NetworkParams& grad) {
    for (std::size_t l = params.layers.size(); l-- > 0;) {
        const Layer& layer = params.layers[l];
        Layer& g = grad.layers[l];
        const std::vector<double>& input = trace.activations[l];
        for (int o = 0; o < layer.out_dim; ++o) {
            const double d = delta[static_cast<std::size_t>(o)];
            g.bias[static_cast<std::size_t>(o)] += d;
            double* grow = g.weights.data() + static_cast<std::size_t>(o) * layer.in_dim;
            for (int i = 0; i < layer.in_dim; ++i) {
                grow[i] += d * input[static_cast<std::size_t>(i)];
            }
        }
        if (l == 0) break;
        std::vector<double> next(static_cast<std::size_t>(layer.in_dim), 0.0);
        for (int o = 0; o < layer.out_dim; ++o) {
            const double d = delta[static_cast<std::size_t>(o)];
            const double* row = layer.weights.data() + static_cast<std::size_t>(o) * layer.in_dim;
            for (int i = 0; i < layer.in_dim; ++i) {
                next[static_cast<std::size_t>(i)] += row[i] * d;
            }
        }
        const std::vector<double>& z = trace.pre_acts[l - 1];
        for (std::size_t u = 0; u < next.size(); ++u) {
            if (z[u] <= 0.0) next[u] = 0.0;
        }
        if (!trace.masks.empty()) {
            const std::vector<double>& mask = trace.masks[l - 1];
            for (std::size_t u = 0; u < next.size(); ++u) next[u] *= mask[u];
        }
        delta = std::move(next);
    }
}

double sample_loss(const ClassDistribution& target, const ClassDistribution& pred,
                   LossKind kind) {
    return kind == LossKind::kl_distr ? loss_kl(target, pred) : loss_ce(target, pred);
}

} // namespace

LogitVector forward(const NetworkParams& params, std::span<const double> features,
                    std::optional<std::uint64_t> dropout_seed) {
    return forward_trace(params, features, dropout_seed).logits;
}

ClassDistribution softmax(const LogitVector& logits) {
    if (logits.empty()) throw Error::input("softmax: empty logit vector");
    double top = logits[0];
    for (double z : logits) {
        if (!std::isfinite(z)) throw Error::input("softmax: non-finite logit");
        top = std::max(top, z);
    }
    ClassDistribution dist;
    dist.probs.resize(logits.size());
    double sum = 0.0;
    for (std::size_t k = 0; k < logits.size(); ++k) {
        dist.probs[k] = std::exp(logits[k] - top);
        sum += dist.probs[k];
    }
    for (double& p : dist.probs) p /= sum;
    return dist;
}

double loss_ce(const ClassDistribution& target, const ClassDistribution& pred) {
    if (target.size() != pred.size()) throw Error::input("loss_ce: distribution size mismatch");
    double loss = 0.0;
    for (std::size_t k = 0; k < target.size(); ++k) {
        const double t = target.probs[k];
        if (t <= 0.0) continue;
        if (pred.probs[k] <= 0.0) return std::numeric_limits<double>::infinity();
        loss -= t * std::log(pred.probs[k]);
    }
    return loss;
}

double loss_kl(const ClassDistribution& target, const ClassDistribution& pred) {
    if (target.size() != pred.size()) throw Error::input("loss_kl: distribution size mismatch");
    double loss = 0.0;
    for (std::size_t k = 0; k < target.size(); ++k) {
        const double t = target.probs[k];
        if (t <= 0.0) continue; // 0 log 0 == 0 by convention
        if (pred.probs[k] <= 0.0) return std::numeric_limits<double>::infinity();
        loss += t * std::log(t / pred.probs[k]);
    }
    return loss;
}

double batch_loss(const NetworkParams& params, std::span<const TrainSample> batch, LossKind kind) {
    if (batch.empty()) throw Error::input("batch_loss: empty batch");
    double total = 0.0;
    for (const TrainSample& sample : batch) {
        ClassDistribution pred = softmax(forward(params, sample.features));
        total += sample_loss(sample.target, pred, kind);
    }
    return total / static_cast<double>(batch.size());
}

NetworkParams gradient(const NetworkParams& params, std::span<const TrainSample> batch,
                       LossKind kind) {
    if (batch.empty()) throw Error::input("gradient: empty batch");
    (void)kind; // CE and KL differ by a target-entropy constant; gradients coincide
    NetworkParams grad = zero_like(params);
    const double inv_m = 1.0 / static_cast<double>(batch.size());
    for (const TrainSample& sample : batch) {
        ForwardTrace trace = forward_trace(params, sample.features, std::nullopt);
        ClassDistribution pred = softmax(trace.logits);
        std::vector<double> delta(pred.size());
        for (std::size_t k = 0; k < pred.size(); ++k) {
            delta[k] = (pred.probs[k] - sample.target.probs[k]) * inv_m;
        }
        accumulate_backward(params, trace, std::move(delta), grad);
    }
    return grad;
}

void TrainConfig::validate() const {
    if (batch_size < 1) throw Error::input("train config: batch_size must be at least 1");
    if (!(initial_lr >= 0.0)) throw Error::input("train config: initial_lr must be non-negative");
    if (!(lr_decay_factor > 0.0 && lr_decay_factor <= 1.0)) {
        throw Error::input("train config: lr_decay_factor must lie in (0,1]");
    }
    if (lr_decay_every_epochs < 1) {
        throw Error::input("train config: lr_decay_every_epochs must be at least 1");
    }
    if (max_epochs < 1) throw Error::input("train config: max_epochs must be at least 1");
    if (early_stop_patience < 1) throw Error::input("train config: patience must be at least 1");
}

TrainResult train(const NetworkSpec& spec, std::span<const TrainSample> train_set,
                  std::span<const TrainSample> val_set, const TrainConfig& config) {
    config.validate();
    spec.validate();
    if (train_set.empty() || val_set.empty()) {
        throw Error::input("train: training and validation sets must be non-empty");
    }
    for (const TrainSample& s : train_set) {
        if (s.features.size() != static_cast<std::size_t>(spec.input_dim) ||
            s.target.size() != static_cast<std::size_t>(spec.class_count)) {
            throw Error::input("train: sample dimensions do not match the network spec");
        }
    }

    NetworkParams params = init_params(spec, config.seed);
    NetworkParams velocity = zero_like(params);

    TrainResult result;
    result.best_val_loss = std::numeric_limits<double>::infinity();

    std::vector<std::size_t> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    const std::size_t hidden_layers = params.layers.size() - 1;
    std::vector<const TrainSample*> batch_view;
    int epochs_without_improvement = 0;

    for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
        const double lr = config.initial_lr *
                          std::pow(config.lr_decay_factor,
                                   static_cast<double>((epoch - 1) / config.lr_decay_every_epochs));
        rng::Stream shuffle_stream(config.seed, kKeyShuffle + static_cast<std::uint64_t>(epoch));
        rng::shuffle(order, shuffle_stream);

        double epoch_loss_sum = 0.0;
        std::size_t steps = 0;
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t stop =
                std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
            batch_view.clear();
            for (std::size_t i = start; i < stop; ++i) batch_view.push_back(&train_set[order[i]]);

            NetworkParams grad = zero_like(params);
            const double inv_m = 1.0 / static_cast<double>(batch_view.size());
            double step_loss = 0.0;
            const std::uint64_t step_seed =
                rng::draw(config.seed, kKeyTrainDropout + static_cast<std::uint64_t>(epoch), steps);
            for (std::size_t b = 0; b < batch_view.size(); ++b) {
                std::optional<std::uint64_t> mask_seed;
                if (spec.dropout_rate > 0.0 && hidden_layers > 0) {
                    mask_seed = rng::draw(step_seed, kKeyTrainDropout, b);
                }
                ForwardTrace trace = forward_trace(params, batch_view[b]->features, mask_seed);
                ClassDistribution pred = softmax(trace.logits);
                step_loss += sample_loss(batch_view[b]->target, pred, config.loss_kind);
                std::vector<double> delta(pred.size());
                for (std::size_t k = 0; k < pred.size(); ++k) {
                    delta[k] = (pred.probs[k] - batch_view[b]->target.probs[k]) * inv_m;
                }
                accumulate_backward(params, trace, std::move(delta), grad);
            }
            step_loss *= inv_m;
            epoch_loss_sum += step_loss;
            ++steps;

            // Nesterov momentum: v <- mu v + g, w <- w - lr (g + mu v)
            for (std::size_t l = 0; l < params.layers.size(); ++l) {
                Layer& layer = params.layers[l];
                Layer& vel = velocity.layers[l];
                const Layer& g = grad.layers[l];
                for (std::size_t i = 0; i < layer.weights.size(); ++i) {
                    vel.weights[i] = kMomentum * vel.weights[i] + g.weights[i];
                    layer.weights[i] -= lr * (g.weights[i] + kMomentum * vel.weights[i]);
                }
                for (std::size_t i = 0; i < layer.bias.size(); ++i) {
                    vel.bias[i] = kMomentum * vel.bias[i] + g.bias[i];
                    layer.bias[i] -= lr * (g.bias[i] + kMomentum * vel.bias[i]);
                }
            }
        }

        const double train_loss = epoch_loss_sum / static_cast<double>(steps);
        const double val_loss = batch_loss(params, val_set, config.loss_kind);
        if (!std::isfinite(train_loss) || !std::isfinite(val_loss)) {
            throw Error::runtime("train: loss diverged at epoch " + std::to_string(epoch));
        }
        result.log.push_back({epoch, train_loss, val_loss, lr});

        if (val_loss < result.best_val_loss) {
            result.best_val_loss = val_loss;
            result.best_epoch = epoch;
            result.params = params;
            epochs_without_improvement = 0;
        } else {
            ++epochs_without_improvement;
            if (epochs_without_improvement >= config.early_stop_patience) break;
        }
    }
    return result;
}

ClassDistribution predict(const NetworkParams& params, std::span<const double> features) {
    return softmax(forward(params, features));
}

ClassDistribution predict_mc_dropout(const NetworkParams& params,
                                     std::span<const double> features, int n_passes,
                                     std::uint64_t seed) {
    if (n_passes < 1) throw Error::input("predict_mc_dropout: n_passes must be at least 1");
    ClassDistribution mean;
    mean.probs.assign(static_cast<std::size_t>(params.spec.class_count), 0.0);
    for (int pass = 0; pass < n_passes; ++pass) {
        std::uint64_t pass_seed = rng::draw(seed, kKeyMcPass, static_cast<std::uint64_t>(pass));
        ClassDistribution pred = softmax(forward(params, features, pass_seed));
        for (std::size_t k = 0; k < mean.probs.size(); ++k) mean.probs[k] += pred.probs[k];
    }
    for (double& p : mean.probs) p /= static_cast<double>(n_passes);
    return mean;
}

std::string model_json(const NetworkParams& params, std::uint64_t seed) {
    nlohmann::json doc;
    doc["format"] = "votecal-model-1";
    doc["seed"] = seed;
    doc["spec"] = {{"input_dim", params.spec.input_dim},
                   {"hidden_dims", params.spec.hidden_dims},
                   {"class_count", params.spec.class_count},
                   {"dropout_rate", params.spec.dropout_rate},
                   {"activation", "relu"}};
    nlohmann::json layers = nlohmann::json::array();
    for (const Layer& layer : params.layers) {
        layers.push_back({{"in", layer.in_dim},
                          {"out", layer.out_dim},
                          {"weights", layer.weights},
                          {"bias", layer.bias}});
    }
    doc["layers"] = std::move(layers);
    return doc.dump(2) + "\n";
}

void save_model_json(const NetworkParams& params, std::uint64_t seed,
                     const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error::runtime("cannot write model file '" + path.string() + "'");
    out << model_json(params, seed);
}

NetworkParams load_model_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error::input("cannot open model file '" + path.string() + "'");
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw Error::input("model file '" + path.string() + "': " + e.what());
    }
    if (doc.value("format", "") != "votecal-model-1") {
        throw Error::input("model file '" + path.string() + "' has unknown format");
    }
    NetworkParams params;
    try {
        const auto& spec = doc.at("spec");
        params.spec.input_dim = spec.at("input_dim").get<int>();
        params.spec.hidden_dims = spec.at("hidden_dims").get<std::vector<int>>();
        params.spec.class_count = spec.at("class_count").get<int>();
        params.spec.dropout_rate = spec.at("dropout_rate").get<double>();
        for (const auto& layer_doc : doc.at("layers")) {
            Layer layer;
            layer.in_dim = layer_doc.at("in").get<int>();
            layer.out_dim = layer_doc.at("out").get<int>();
            layer.weights = layer_doc.at("weights").get<std::vector<double>>();
            layer.bias = layer_doc.at("bias").get<std::vector<double>>();
            if (layer.weights.size() !=
                    static_cast<std::size_t>(layer.in_dim) * static_cast<std::size_t>(layer.out_dim) ||
                layer.bias.size() != static_cast<std::size_t>(layer.out_dim)) {
                throw Error::input("model file '" + path.string() + "': layer shape mismatch");
            }
            params.layers.push_back(std::move(layer));
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error::input("model file '" + path.string() + "': " + e.what());
    }
    params.spec.validate();
    if (params.layers.size() != params.spec.hidden_dims.size() + 1) {
        throw Error::input("model file '" + path.string() + "': layer count mismatch");
    }
    return params;
}

std::vector<FeatureRecord> read_features_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error::input("cannot open feature file '" + path.string() + "'");
    std::string line;
    if (!std::getline(in, line)) {
        throw Error::input("feature file '" + path.string() + "' is empty");
    }
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.rfind("sample_id,group_id,f1", 0) != 0) {
        throw Error::input("line 1: expected header sample_id,group_id,f1,...");
    }
    const std::size_t columns = 1 + static_cast<std::size_t>(
        std::count(line.begin(), line.end(), ','));

    std::vector<FeatureRecord> records;
    int line_number = 1;
    while (std::getline(in, line)) {
        ++line_number;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string field;
        FeatureRecord record;
        std::size_t index = 0;
        while (std::getline(ss, field, ',')) {
            if (index == 0) {
                record.sample_id = field;
            } else if (index == 1) {
                record.group_id = field;
            } else {
                try {
                    std::size_t consumed = 0;
                    record.features.push_back(std::stod(field, &consumed));
                    if (consumed != field.size()) throw std::invalid_argument(field);
                } catch (const std::exception&) {
                    throw Error::input("line " + std::to_string(line_number) +
                                       ": cannot parse feature '" + field + "'");
                }
            }
            ++index;
        }
        if (index != columns) {
            throw Error::input("line " + std::to_string(line_number) + ": expected " +
                               std::to_string(columns) + " fields, got " + std::to_string(index));
        }
        records.push_back(std::move(record));
    }
    return records;
}

std::string features_csv(std::span<const FeatureRecord> records) {
    std::string out = "sample_id,group_id";
    const std::size_t dims = records.empty() ? 0 : records[0].features.size();
    for (std::size_t d = 1; d <= dims; ++d) out += ",f" + std::to_string(d);
    out += "\n";
    for (const FeatureRecord& record : records) {
        out += record.sample_id + "," + record.group_id;
        for (double f : record.features) out += "," + format_double(f);
        out += "\n";
    }
    return out;
}

} // namespace votecal
