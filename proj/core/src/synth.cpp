#include "votecal/synth.hpp"

#include "votecal/common.hpp"
#include "config_json.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace votecal {

namespace {

const std::uint64_t kKeyGroupJitter = fnv1a("group-jitter");
const std::uint64_t kKeyFeatures = fnv1a("sample-features");
const std::uint64_t kKeyVotes = fnv1a("sample-votes");
const std::uint64_t kKeySplit = fnv1a("holdout-split");

} // namespace

void GeneratorConfig::validate() const {
    if (class_count < 2) throw Error::input("generator: class_count must be at least 2");
    if (feature_dim < 1) throw Error::input("generator: feature_dim must be positive");
    if (feature_dim < class_count) {
        throw Error::input("generator: feature_dim " + std::to_string(feature_dim) +
                           " cannot hold " + std::to_string(class_count) +
                           " separated class centers");
    }
    if (annotators < 1) throw Error::input("generator: annotators must be at least 1");
    if (!(class_separation > 0.0)) throw Error::input("generator: class_separation must be positive");
    if (!(ambiguity >= 0.0)) throw Error::input("generator: ambiguity must be non-negative");
    if (!(group_shift >= 0.0)) throw Error::input("generator: group_shift must be non-negative");
    if (groups.empty()) throw Error::input("generator: at least one group required");
    std::set<std::string> seen;
    for (const GroupSpec& group : groups) {
        if (!seen.insert(group.group_id).second) {
            throw Error::input("generator: duplicate group id '" + group.group_id + "'");
        }
        if (group.samples_per_class.size() != static_cast<std::size_t>(class_count)) {
            throw Error::input("generator: group '" + group.group_id + "' needs " +
                               std::to_string(class_count) + " per-class sample counts");
        }
        for (int count : group.samples_per_class) {
            if (count < 0) {
                throw Error::input("generator: negative sample count in group '" +
                                   group.group_id + "'");
            }
        }
    }
}

Dataset generate(const GeneratorConfig& config) {
    config.validate();

    const int k = config.class_count;
    const int d = config.feature_dim;
    const double sep = config.class_separation;

    // class centers per group: sep along axis (class-1), plus group jitter
    std::vector<std::vector<std::vector<double>>> centers(config.groups.size());
    for (std::size_t g = 0; g < config.groups.size(); ++g) {
        const std::uint64_t group_key =
            kKeyGroupJitter ^ fnv1a(config.groups[g].group_id);
        centers[g].assign(static_cast<std::size_t>(k),
                          std::vector<double>(static_cast<std::size_t>(d), 0.0));
        for (int c = 0; c < k; ++c) {
            auto& center = centers[g][static_cast<std::size_t>(c)];
            center[static_cast<std::size_t>(c)] = sep;
            if (config.group_shift > 0.0) {
                for (int dim = 0; dim < d; ++dim) {
                    center[static_cast<std::size_t>(dim)] +=
                        config.group_shift *
                        rng::normal(config.seed, group_key + static_cast<std::uint64_t>(c),
                                    static_cast<std::uint64_t>(dim));
                }
            }
        }
    }

    Dataset data;
    data.class_count = k;
    data.feature_dim = d;
    data.annotators = config.annotators;

    std::uint64_t sample_index = 0;
    for (std::size_t g = 0; g < config.groups.size(); ++g) {
        const GroupSpec& group = config.groups[g];
        for (int c = 1; c <= k; ++c) {
            for (int rep = 0; rep < group.samples_per_class[static_cast<std::size_t>(c - 1)];
                 ++rep) {
                SampleData sample;
                sample.group_id = group.group_id;
                sample.true_class = c;

                sample.features.resize(static_cast<std::size_t>(d));
                const auto& center = centers[g][static_cast<std::size_t>(c - 1)];
                for (int dim = 0; dim < d; ++dim) {
                    sample.features[static_cast<std::size_t>(dim)] =
                        center[static_cast<std::size_t>(dim)] +
                        rng::normal(config.seed, kKeyFeatures + sample_index,
                                    static_cast<std::uint64_t>(dim));
                }

                if (config.ambiguity == 0.0) {
                    sample.latent = ClassDistribution::one_hot(c, k);
                } else {
                    // softmax over -d^2 / (2 * ambiguity * sep^2)
                    std::vector<double> score(static_cast<std::size_t>(k));
                    const double scale = 2.0 * config.ambiguity * sep * sep;
                    for (int cc = 0; cc < k; ++cc) {
                        double dist2 = 0.0;
                        const auto& other = centers[g][static_cast<std::size_t>(cc)];
                        for (int dim = 0; dim < d; ++dim) {
                            const double delta = sample.features[static_cast<std::size_t>(dim)] -
                                                 other[static_cast<std::size_t>(dim)];
                            dist2 += delta * delta;
                        }
                        score[static_cast<std::size_t>(cc)] = -dist2 / scale;
                    }
                    const double top = *std::max_element(score.begin(), score.end());
                    double sum = 0.0;
                    sample.latent.probs.resize(static_cast<std::size_t>(k));
                    for (int cc = 0; cc < k; ++cc) {
                        sample.latent.probs[static_cast<std::size_t>(cc)] =
                            std::exp(score[static_cast<std::size_t>(cc)] - top);
                        sum += sample.latent.probs[static_cast<std::size_t>(cc)];
                    }
                    for (double& p : sample.latent.probs) p /= sum;
                }

                sample.votes.group_id = group.group_id;
                sample.votes.votes.resize(static_cast<std::size_t>(config.annotators));
                for (int j = 0; j < config.annotators; ++j) {
                    const double u = rng::uniform(config.seed, kKeyVotes + sample_index,
                                                  static_cast<std::uint64_t>(j));
                    sample.votes.votes[static_cast<std::size_t>(j)] =
                        static_cast<int>(rng::categorical(sample.latent.probs, u)) + 1;
                }

                data.samples.push_back(std::move(sample));
                ++sample_index;
            }
        }
    }

    // zero-padded ids keep lexicographic and generation order identical
    char id[16];
    for (std::size_t i = 0; i < data.samples.size(); ++i) {
        std::snprintf(id, sizeof(id), "s%07zu", i);
        data.samples[i].sample_id = id;
        data.samples[i].votes.sample_id = id;
    }

    // standardize feature columns over the emitted set
    for (int dim = 0; dim < d; ++dim) {
        double mean = 0.0;
        for (const SampleData& s : data.samples) mean += s.features[static_cast<std::size_t>(dim)];
        mean /= static_cast<double>(data.samples.size());
        double var = 0.0;
        for (const SampleData& s : data.samples) {
            const double delta = s.features[static_cast<std::size_t>(dim)] - mean;
            var += delta * delta;
        }
        var /= static_cast<double>(data.samples.size());
        const double scale = var > 0.0 ? 1.0 / std::sqrt(var) : 1.0;
        for (SampleData& s : data.samples) {
            s.features[static_cast<std::size_t>(dim)] =
                (s.features[static_cast<std::size_t>(dim)] - mean) * scale;
        }
    }

    return data;
}

void SplitSpec::validate() const {
    if (!(val_fraction >= 0.0 && val_fraction <= 1.0)) {
        throw Error::input("split: val_fraction must lie in [0,1]");
    }
    std::set<std::string> train(train_groups.begin(), train_groups.end());
    for (const std::string& group : holdout_groups) {
        if (train.count(group)) {
            throw Error::input("split: group '" + group + "' appears in both train and holdout");
        }
    }
}

SplitResult split(const Dataset& data, const SplitSpec& spec) {
    spec.validate();
    std::set<std::string> train(spec.train_groups.begin(), spec.train_groups.end());
    std::set<std::string> holdout(spec.holdout_groups.begin(), spec.holdout_groups.end());

    SplitResult result;
    for (std::size_t i = 0; i < data.samples.size(); ++i) {
        const SampleData& sample = data.samples[i];
        if (train.count(sample.group_id)) {
            result.train.push_back(i);
        } else if (holdout.count(sample.group_id)) {
            const double u = rng::uniform(spec.seed, kKeySplit, fnv1a(sample.sample_id));
            (u < spec.val_fraction ? result.val : result.test).push_back(i);
        } else {
            throw Error::input("split: group '" + sample.group_id +
                               "' not assigned to train or holdout");
        }
    }
    return result;
}

ClassFrequencyReport class_frequency_report(const Dataset& data, const SplitResult& split) {
    ClassFrequencyReport report;
    const int k = data.class_count;
    std::vector<std::array<long long, 3>> counts(static_cast<std::size_t>(k), {0, 0, 0});

    auto account = [&](const std::vector<std::size_t>& indices, int set_index) {
        for (std::size_t i : indices) {
            const int winner =
                majority_label(tally_votes(data.samples[i].votes, k)).winner;
            ++counts[static_cast<std::size_t>(winner - 1)][static_cast<std::size_t>(set_index)];
            ++report.set_totals[static_cast<std::size_t>(set_index)];
        }
    };
    account(split.train, 0);
    account(split.val, 1);
    account(split.test, 2);

    for (int c = 1; c <= k; ++c) {
        const auto& row = counts[static_cast<std::size_t>(c - 1)];
        const long long total = row[0] + row[1] + row[2];
        report.classes.push_back(c);
        report.class_totals.push_back(total);
        if (total == 0) {
            report.fractions.push_back({0.0, 0.0, 0.0});
        } else {
            report.fractions.push_back({static_cast<double>(row[0]) / static_cast<double>(total),
                                        static_cast<double>(row[1]) / static_cast<double>(total),
                                        static_cast<double>(row[2]) / static_cast<double>(total)});
        }
    }
    return report;
}

std::string class_frequency_csv(const ClassFrequencyReport& report) {
    std::string out = "class,train,val,test,total\n";
    for (std::size_t i = 0; i < report.classes.size(); ++i) {
        out += std::to_string(report.classes[i]) + "," + format_double(report.fractions[i][0]) +
               "," + format_double(report.fractions[i][1]) + "," +
               format_double(report.fractions[i][2]) + "," +
               std::to_string(report.class_totals[i]) + "\n";
    }
    out += "total," + std::to_string(report.set_totals[0]) + "," +
           std::to_string(report.set_totals[1]) + "," + std::to_string(report.set_totals[2]) +
           "," +
           std::to_string(report.set_totals[0] + report.set_totals[1] + report.set_totals[2]) +
           "\n";
    return out;
}

EntropySummary entropy_summary(const Dataset& data,
                               std::span<const std::pair<std::string, std::vector<int>>> subsets,
                               int n_buckets) {
    if (n_buckets < 1) throw Error::input("entropy_summary: bucket count must be positive");
    EntropySummary summary;
    const double max_entropy = std::log(static_cast<double>(data.class_count));
    for (int b = 0; b <= n_buckets; ++b) {
        summary.bucket_edges.push_back(max_entropy * static_cast<double>(b) /
                                       static_cast<double>(n_buckets));
    }

    for (const auto& [name, classes] : subsets) {
        if (classes.empty()) throw Error::input("entropy_summary: empty class subset '" + name + "'");
        std::set<int> members(classes.begin(), classes.end());
        EntropyGroup group;
        group.name = name;
        group.classes = classes;
        group.bucket_counts.assign(static_cast<std::size_t>(n_buckets), 0);
        double entropy_sum = 0.0;
        for (const SampleData& sample : data.samples) {
            const VoteCounts counts = tally_votes(sample.votes, data.class_count);
            if (!members.count(majority_label(counts).winner)) continue;
            const double h = vote_entropy(distributional_label(counts));
            int bucket = n_buckets - 1;
            if (max_entropy > 0.0) {
                bucket = std::min(n_buckets - 1,
                                  static_cast<int>(h / max_entropy * n_buckets));
            }
            ++group.bucket_counts[static_cast<std::size_t>(bucket)];
            entropy_sum += h;
            ++group.n;
        }
        group.mean_entropy = group.n > 0 ? entropy_sum / static_cast<double>(group.n) : 0.0;
        summary.groups.push_back(std::move(group));
    }
    return summary;
}

std::string latent_csv(const Dataset& data) {
    std::string out = "sample_id";
    for (int c = 1; c <= data.class_count; ++c) out += ",p" + std::to_string(c);
    out += "\n";
    for (const SampleData& sample : data.samples) {
        out += sample.sample_id;
        for (double p : sample.latent.probs) out += "," + format_double(p);
        out += "\n";
    }
    return out;
}

std::string dataset_votes_csv(const Dataset& data) {
    std::vector<VoteRecord> records;
    records.reserve(data.samples.size());
    for (const SampleData& sample : data.samples) records.push_back(sample.votes);
    return votes_csv(records);
}

std::string dataset_features_csv(const Dataset& data) {
    std::vector<FeatureRecord> records;
    records.reserve(data.samples.size());
    for (const SampleData& sample : data.samples) {
        records.push_back({sample.sample_id, sample.group_id, sample.features});
    }
    return features_csv(records);
}

namespace detail {

GeneratorConfig generator_config_from(const nlohmann::json& doc) {
    GeneratorConfig config;
    try {
        config.class_count = doc.at("class_count").get<int>();
        config.feature_dim = doc.at("feature_dim").get<int>();
        config.annotators = doc.at("annotators").get<int>();
        config.class_separation = doc.at("class_separation").get<double>();
        config.ambiguity = doc.at("ambiguity").get<double>();
        config.group_shift = doc.value("group_shift", 0.0);
        config.seed = doc.at("seed").get<std::uint64_t>();
        for (const auto& group_doc : doc.at("groups")) {
            GroupSpec group;
            group.group_id = group_doc.at("group_id").get<std::string>();
            const auto& counts = group_doc.at("samples_per_class");
            if (counts.is_number_integer()) {
                group.samples_per_class.assign(static_cast<std::size_t>(config.class_count),
                                               counts.get<int>());
            } else {
                group.samples_per_class = counts.get<std::vector<int>>();
            }
            config.groups.push_back(std::move(group));
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error::input(std::string("generator config: ") + e.what());
    }
    config.validate();
    return config;
}

SplitSpec split_spec_from(const nlohmann::json& doc) {
    SplitSpec spec;
    try {
        spec.train_groups = doc.at("train_groups").get<std::vector<std::string>>();
        spec.holdout_groups = doc.at("holdout_groups").get<std::vector<std::string>>();
        spec.val_fraction = doc.value("val_fraction", 0.5);
        spec.seed = doc.value("seed", std::uint64_t{0});
    } catch (const nlohmann::json::exception& e) {
        throw Error::input(std::string("split spec: ") + e.what());
    }
    spec.validate();
    return spec;
}

NetworkSpec network_spec_from(const nlohmann::json& doc) {
    NetworkSpec spec;
    try {
        spec.input_dim = doc.at("input_dim").get<int>();
        spec.hidden_dims = doc.at("hidden_dims").get<std::vector<int>>();
        spec.class_count = doc.at("class_count").get<int>();
        spec.dropout_rate = doc.value("dropout_rate", 0.2);
        const std::string activation = doc.value("activation", "relu");
        if (activation != "relu") {
            throw Error::input("network spec: unsupported activation '" + activation + "'");
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error::input(std::string("network spec: ") + e.what());
    }
    spec.validate();
    return spec;
}

TrainConfig train_config_from(const nlohmann::json& doc) {
    TrainConfig config;
    try {
        config.batch_size = doc.value("batch_size", 64);
        config.initial_lr = doc.value("initial_lr", 2e-3);
        config.lr_decay_factor = doc.value("lr_decay_factor", 0.5);
        config.lr_decay_every_epochs = doc.value("lr_decay_every_epochs", 5);
        config.max_epochs = doc.value("max_epochs", 100);
        config.early_stop_patience = doc.value("early_stop_patience", 20);
        config.seed = doc.value("seed", std::uint64_t{1});
        if (doc.contains("loss_kind")) {
            config.loss_kind = loss_kind_from_string(doc.at("loss_kind").get<std::string>());
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error::input(std::string("train config: ") + e.what());
    }
    config.validate();
    return config;
}

nlohmann::json to_json(const GeneratorConfig& config) {
    nlohmann::json groups = nlohmann::json::array();
    for (const GroupSpec& group : config.groups) {
        groups.push_back({{"group_id", group.group_id},
                          {"samples_per_class", group.samples_per_class}});
    }
    return {{"class_count", config.class_count},
            {"feature_dim", config.feature_dim},
            {"annotators", config.annotators},
            {"class_separation", config.class_separation},
            {"ambiguity", config.ambiguity},
            {"group_shift", config.group_shift},
            {"seed", config.seed},
            {"groups", std::move(groups)}};
}

nlohmann::json to_json(const SplitSpec& spec) {
    return {{"train_groups", spec.train_groups},
            {"holdout_groups", spec.holdout_groups},
            {"val_fraction", spec.val_fraction},
            {"seed", spec.seed}};
}

nlohmann::json to_json(const NetworkSpec& spec) {
    return {{"input_dim", spec.input_dim},
            {"hidden_dims", spec.hidden_dims},
            {"class_count", spec.class_count},
            {"dropout_rate", spec.dropout_rate},
            {"activation", "relu"}};
}

nlohmann::json to_json(const TrainConfig& config) {
    return {{"batch_size", config.batch_size},
            {"initial_lr", config.initial_lr},
            {"lr_decay_factor", config.lr_decay_factor},
            {"lr_decay_every_epochs", config.lr_decay_every_epochs},
            {"max_epochs", config.max_epochs},
            {"early_stop_patience", config.early_stop_patience},
            {"seed", config.seed},
            {"loss_kind", to_string(config.loss_kind)}};
}

} // namespace detail

GeneratorConfig generator_config_from_json(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw Error::input(std::string("generator config: ") + e.what());
    }
    if (doc.contains("generator")) return detail::generator_config_from(doc.at("generator"));
    return detail::generator_config_from(doc);
}

} // namespace votecal
