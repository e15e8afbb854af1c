#include "votecal/experiment.hpp"

#include "votecal/common.hpp"
#include "config_json.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace votecal {

namespace {

const std::uint64_t kKeyMcEval = fnv1a("mc-eval");

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error::runtime("cannot write '" + path.string() + "'");
    out << content;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error::input("cannot open '" + path.string() + "'");
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

std::string training_log_csv(const TrainResult& result) {
    std::string out = "epoch,train_loss,val_loss,learning_rate\n";
    for (const EpochLog& entry : result.log) {
        out += std::to_string(entry.epoch) + "," + format_double(entry.train_loss) + "," +
               format_double(entry.val_loss) + "," + format_double(entry.learning_rate) + "\n";
    }
    return out;
}

// Reports render their calibration columns at 20 bins when the sweep has
// that setting, otherwise at the first configured bin count.
int primary_bins(const std::vector<int>& bin_counts) {
    if (std::find(bin_counts.begin(), bin_counts.end(), 20) != bin_counts.end()) return 20;
    return bin_counts.front();
}

} // namespace

const char* to_string(LabelMode mode) {
    return mode == LabelMode::onehot ? "onehot" : "distributional";
}

LabelMode label_mode_from_string(const std::string& name) {
    if (name == "onehot") return LabelMode::onehot;
    if (name == "distributional") return LabelMode::distributional;
    throw Error::input("unknown label mode '" + name + "'");
}

LossKind ExperimentConfig::effective_loss() const {
    if (loss_override) return *loss_override;
    return label_mode == LabelMode::onehot ? LossKind::ce_onehot : LossKind::kl_distr;
}

void ExperimentConfig::validate() const {
    generator.validate();
    split.validate();
    network.validate();
    train.validate();
    if (network.input_dim != generator.feature_dim) {
        throw Error::input("experiment: network input_dim must equal generator feature_dim");
    }
    if (network.class_count != generator.class_count) {
        throw Error::input("experiment: network class_count must equal generator class_count");
    }
    if (smoothing_alpha && !(*smoothing_alpha >= 0.0 && *smoothing_alpha <= 1.0)) {
        throw Error::input("experiment: smoothing_alpha must lie in [0,1]");
    }
    if (mc_dropout_passes && *mc_dropout_passes < 1) {
        throw Error::input("experiment: mc_dropout_passes must be at least 1");
    }
    if (bin_counts.empty()) throw Error::input("experiment: bin_counts must be non-empty");
    for (int bins : bin_counts) {
        if (bins < 1) throw Error::input("experiment: bin counts must be positive");
    }
    if (seeds.empty()) throw Error::input("experiment: at least one seed required");
    std::set<std::string> covered(split.train_groups.begin(), split.train_groups.end());
    covered.insert(split.holdout_groups.begin(), split.holdout_groups.end());
    for (const GroupSpec& group : generator.groups) {
        if (!covered.count(group.group_id)) {
            throw Error::input("experiment: group '" + group.group_id +
                               "' missing from the split spec");
        }
    }
}

ExperimentConfig experiment_config_from_json(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw Error::input(std::string("experiment config: ") + e.what());
    }
    ExperimentConfig config;
    try {
        config.generator = detail::generator_config_from(doc.at("generator"));
        config.split = detail::split_spec_from(doc.at("split"));
        config.network = detail::network_spec_from(doc.at("network"));
        config.train = detail::train_config_from(doc.at("train"));
        config.label_mode = label_mode_from_string(doc.at("label_mode").get<std::string>());
        if (doc.contains("smoothing_alpha") && !doc.at("smoothing_alpha").is_null()) {
            config.smoothing_alpha = doc.at("smoothing_alpha").get<double>();
        }
        config.temperature_scaling = doc.value("temperature_scaling", false);
        if (doc.contains("mc_dropout_passes") && !doc.at("mc_dropout_passes").is_null()) {
            config.mc_dropout_passes = doc.at("mc_dropout_passes").get<int>();
        }
        if (doc.contains("bin_counts")) {
            config.bin_counts = doc.at("bin_counts").get<std::vector<int>>();
        }
        if (doc.contains("seeds")) {
            config.seeds = doc.at("seeds").get<std::vector<std::uint64_t>>();
        }
        if (doc.contains("loss_override") && !doc.at("loss_override").is_null()) {
            config.loss_override =
                loss_kind_from_string(doc.at("loss_override").get<std::string>());
        }
        config.emit_svg = doc.value("emit_svg", false);
    } catch (const nlohmann::json::exception& e) {
        throw Error::input(std::string("experiment config: ") + e.what());
    }
    config.validate();
    return config;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    return experiment_config_from_json(read_file(path));
}

std::string experiment_config_json(const ExperimentConfig& config) {
    nlohmann::json doc;
    doc["generator"] = detail::to_json(config.generator);
    doc["split"] = detail::to_json(config.split);
    doc["network"] = detail::to_json(config.network);
    doc["train"] = detail::to_json(config.train);
    doc["label_mode"] = to_string(config.label_mode);
    if (config.smoothing_alpha) doc["smoothing_alpha"] = *config.smoothing_alpha;
    doc["temperature_scaling"] = config.temperature_scaling;
    if (config.mc_dropout_passes) doc["mc_dropout_passes"] = *config.mc_dropout_passes;
    doc["bin_counts"] = config.bin_counts;
    doc["seeds"] = config.seeds;
    if (config.loss_override) doc["loss_override"] = to_string(*config.loss_override);
    doc["emit_svg"] = config.emit_svg;
    return doc.dump(2) + "\n";
}

ClassDistribution predict_with_options(const NetworkParams& params,
                                       std::span<const double> features,
                                       std::optional<int> mc_passes,
                                       std::optional<Temperature> temperature,
                                       std::uint64_t sample_seed) {
    if (!mc_passes) {
        if (temperature) return apply_temperature(forward(params, features), *temperature);
        return predict(params, features);
    }
    if (!temperature) return predict_mc_dropout(params, features, *mc_passes, sample_seed);
    if (*mc_passes < 1) throw Error::input("predict_with_options: mc passes must be at least 1");
    ClassDistribution mean;
    mean.probs.assign(static_cast<std::size_t>(params.spec.class_count), 0.0);
    for (int pass = 0; pass < *mc_passes; ++pass) {
        const std::uint64_t pass_seed =
            rng::draw(sample_seed, kKeyMcEval, static_cast<std::uint64_t>(pass));
        ClassDistribution p =
            apply_temperature(forward(params, features, pass_seed), *temperature);
        for (std::size_t c = 0; c < mean.probs.size(); ++c) mean.probs[c] += p.probs[c];
    }
    for (double& p : mean.probs) p /= static_cast<double>(*mc_passes);
    return mean;
}

SeedArtifacts run_seed_pipeline(const ExperimentConfig& config, std::uint64_t seed) {
    config.validate();

    SeedArtifacts artifacts;

    GeneratorConfig generator = config.generator;
    generator.seed = seed;
    artifacts.data = generate(generator);

    SplitSpec split_spec = config.split;
    split_spec.seed = seed;
    artifacts.parts = split(artifacts.data, split_spec);
    if (artifacts.parts.train.empty() || artifacts.parts.val.empty() ||
        artifacts.parts.test.empty()) {
        throw Error::input("seed " + std::to_string(seed) +
                           ": split produced an empty train, val or test set");
    }

    const int k = config.generator.class_count;
    auto build_samples = [&](const std::vector<std::size_t>& indices) {
        std::vector<TrainSample> samples;
        samples.reserve(indices.size());
        for (std::size_t i : indices) {
            const SampleData& s = artifacts.data.samples[i];
            const VoteCounts counts = tally_votes(s.votes, k);
            ClassDistribution label = config.label_mode == LabelMode::onehot
                                          ? majority_label(counts).label
                                          : distributional_label(counts);
            if (config.smoothing_alpha) label = smooth_label(label, *config.smoothing_alpha);
            samples.push_back({s.features, std::move(label)});
        }
        return samples;
    };

    TrainConfig train_config = config.train;
    train_config.seed = seed;
    train_config.loss_kind = config.effective_loss();
    const std::vector<TrainSample> train_set = build_samples(artifacts.parts.train);
    const std::vector<TrainSample> val_set = build_samples(artifacts.parts.val);
    artifacts.trained = train(config.network, train_set, val_set, train_config);

    if (config.temperature_scaling) {
        std::vector<LogitVector> val_logits;
        std::vector<int> val_true;
        val_logits.reserve(artifacts.parts.val.size());
        for (std::size_t i : artifacts.parts.val) {
            const SampleData& s = artifacts.data.samples[i];
            val_logits.push_back(forward(artifacts.trained.params, s.features));
            val_true.push_back(majority_label(tally_votes(s.votes, k)).winner);
        }
        artifacts.temperature = fit_temperature(val_logits, val_true);
    }

    artifacts.test_records.reserve(artifacts.parts.test.size());
    std::string digest_input;
    std::uint64_t test_index = 0;
    for (std::size_t i : artifacts.parts.test) {
        const SampleData& s = artifacts.data.samples[i];
        const VoteCounts counts = tally_votes(s.votes, k);

        ClassDistribution pred =
            predict_with_options(artifacts.trained.params, s.features, config.mc_dropout_passes,
                                 artifacts.temperature, rng::draw(seed, kKeyMcEval, test_index));

        artifacts.test_records.push_back(
            PredictionRecord::make(s.sample_id, std::move(pred),
                                   majority_label(counts).winner, distributional_label(counts)));

        digest_input += s.sample_id + "," + s.group_id;
        for (double f : s.features) digest_input += "," + format_double(f);
        for (int v : s.votes.votes) digest_input += "," + std::to_string(v);
        digest_input += "\n";
        ++test_index;
    }
    artifacts.test_digest = hex64(fnv1a(digest_input));
    return artifacts;
}

namespace {

nlohmann::json scores_to_json(const ScoreReport& report) {
    return nlohmann::json::parse(score_json(report));
}

nlohmann::json calibration_to_json(const std::vector<CalibrationMetrics>& sweep) {
    return nlohmann::json::parse(calibration_json(sweep));
}

void aggregate_metric(std::map<std::string, std::vector<double>>& samples,
                      const std::string& name, double value) {
    if (std::isfinite(value)) samples[name].push_back(value);
}

MetricStats stats_of(const std::vector<double>& values) {
    MetricStats stats;
    stats.n = static_cast<int>(values.size());
    if (values.empty()) return stats;
    double sum = 0.0;
    for (double v : values) sum += v;
    stats.mean = sum / static_cast<double>(values.size());
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - stats.mean) * (v - stats.mean);
        stats.sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    return stats;
}

} // namespace

RunSummary run_experiment(const ExperimentConfig& config, const std::filesystem::path& out_dir) {
    config.validate();
    std::filesystem::create_directories(out_dir);
    write_file(out_dir / "config.json", experiment_config_json(config));

    RunSummary summary;
    summary.config = config;

    std::map<std::string, std::vector<double>> metric_samples;
    std::string digest_chain;

    for (std::uint64_t seed : config.seeds) {
        SeedOutcome outcome;
        outcome.seed = seed;
        const std::filesystem::path seed_dir = out_dir / ("seed-" + std::to_string(seed));
        try {
            SeedArtifacts artifacts = run_seed_pipeline(config, seed);

            const std::filesystem::path data_dir =
                out_dir / "data" / ("seed-" + std::to_string(seed));
            std::filesystem::create_directories(data_dir);
            write_file(data_dir / "votes.csv", dataset_votes_csv(artifacts.data));
            write_file(data_dir / "features.csv", dataset_features_csv(artifacts.data));
            write_file(data_dir / "latent.csv", latent_csv(artifacts.data));

            std::filesystem::create_directories(seed_dir);
            save_model_json(artifacts.trained.params, seed, seed_dir / "model.json");
            write_file(seed_dir / "training_log.csv", training_log_csv(artifacts.trained));

            outcome.scores = score_report(artifacts.test_records);
            outcome.calibration = calibration_sweep(artifacts.test_records, config.bin_counts,
                                                    config.generator.class_count);
            if (artifacts.temperature) outcome.temperature = artifacts.temperature->t;
            outcome.test_digest = artifacts.test_digest;
            outcome.best_epoch = artifacts.trained.best_epoch;
            outcome.epochs_run = static_cast<int>(artifacts.trained.log.size());

            write_file(seed_dir / "scores.json", score_json(outcome.scores));
            write_file(seed_dir / "calibration.json", calibration_json(outcome.calibration));
            const int rel_bins = primary_bins(config.bin_counts);
            const ReliabilityReport reliability = reliability_data(
                assign_bins(artifacts.test_records, rel_bins), artifacts.test_records);
            write_file(seed_dir / "reliability.csv", reliability_csv(reliability));
            if (config.emit_svg) {
                write_file(seed_dir / "reliability.svg", reliability_svg(reliability));
            }
            write_file(seed_dir / "confusion.csv",
                       confusion_csv(confusion(artifacts.test_records)));

            aggregate_metric(metric_samples, "oa", outcome.scores.oa);
            aggregate_metric(metric_samples, "maa", outcome.scores.maa);
            aggregate_metric(metric_samples, "waa", outcome.scores.waa);
            aggregate_metric(metric_samples, "kappa", outcome.scores.kappa);
            aggregate_metric(metric_samples, "ce_onehot", outcome.scores.ce_onehot);
            aggregate_metric(metric_samples, "ce_distr", outcome.scores.ce_distr);
            for (const CalibrationMetrics& metrics : outcome.calibration) {
                const std::string suffix = "@" + std::to_string(metrics.bins);
                aggregate_metric(metric_samples, "ece" + suffix, metrics.ece);
                aggregate_metric(metric_samples, "mce" + suffix, metrics.mce);
                aggregate_metric(metric_samples, "sce" + suffix, metrics.sce);
            }
            if (outcome.temperature) {
                aggregate_metric(metric_samples, "temperature", *outcome.temperature);
            }

            digest_chain += outcome.test_digest;
            outcome.ok = true;
        } catch (const std::exception& e) {
            outcome.ok = false;
            outcome.error = e.what();
        }
        summary.seeds.push_back(std::move(outcome));
    }

    for (const auto& [name, values] : metric_samples) {
        summary.aggregate[name] = stats_of(values);
    }
    summary.test_digest = hex64(fnv1a(digest_chain));

    write_file(out_dir / "summary.json", summary_json(summary));
    return summary;
}

std::string summary_json(const RunSummary& summary) {
    nlohmann::json doc;
    doc["format"] = "votecal-run-1";
    doc["config"] = nlohmann::json::parse(experiment_config_json(summary.config));
    nlohmann::json seeds = nlohmann::json::array();
    for (const SeedOutcome& outcome : summary.seeds) {
        nlohmann::json entry;
        entry["seed"] = outcome.seed;
        entry["ok"] = outcome.ok;
        if (!outcome.ok) {
            entry["error"] = outcome.error;
        } else {
            entry["scores"] = scores_to_json(outcome.scores);
            entry["calibration"] = calibration_to_json(outcome.calibration);
            if (outcome.temperature) entry["temperature"] = *outcome.temperature;
            entry["test_digest"] = outcome.test_digest;
            entry["best_epoch"] = outcome.best_epoch;
            entry["epochs_run"] = outcome.epochs_run;
        }
        seeds.push_back(std::move(entry));
    }
    doc["seeds"] = std::move(seeds);
    nlohmann::json aggregate;
    for (const auto& [name, stats] : summary.aggregate) {
        aggregate[name] = {{"mean", stats.mean}, {"sd", stats.sd}, {"n", stats.n}};
    }
    doc["aggregate"] = std::move(aggregate);
    doc["test_digest"] = summary.test_digest;
    return doc.dump(2) + "\n";
}

namespace {

struct LoadedSummary {
    nlohmann::json doc;
    std::string digest;
    std::vector<int> bin_counts;

    ComparisonCell cell(const std::string& metric, int bins) const {
        ComparisonCell cell;
        const auto& aggregate = doc.at("aggregate");
        std::string key = metric;
        if (metric == "ece" || metric == "mce" || metric == "sce") {
            key = metric + "@" + std::to_string(bins);
        }
        if (aggregate.contains(key)) {
            cell.present = true;
            cell.mean = aggregate.at(key).at("mean").get<double>();
            cell.sd = aggregate.at(key).at("sd").get<double>();
        }
        return cell;
    }
};

LoadedSummary load_summary(const std::filesystem::path& run_dir) {
    const std::filesystem::path path = run_dir / "summary.json";
    LoadedSummary loaded;
    try {
        loaded.doc = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw Error::input("summary '" + path.string() + "': " + e.what());
    }
    if (loaded.doc.value("format", "") != "votecal-run-1") {
        throw Error::input("summary '" + path.string() + "' has unknown format");
    }
    loaded.digest = loaded.doc.value("test_digest", "");
    loaded.bin_counts = loaded.doc.at("config").at("bin_counts").get<std::vector<int>>();
    return loaded;
}

// One shared bin count for the calibration columns: 20 when either sweep has
// it, otherwise the largest swept value. A run lacking that setting gets
// absent cells.
int comparison_bins(const std::vector<int>& a, const std::vector<int>& b) {
    std::set<int> common(a.begin(), a.end());
    std::set<int> available;
    for (int bins : b) {
        if (common.count(bins)) available.insert(bins);
    }
    if (available.empty()) {
        available.insert(a.begin(), a.end());
        available.insert(b.begin(), b.end());
    }
    if (available.count(20)) return 20;
    return *available.rbegin();
}

} // namespace

ComparisonTable compare(const std::filesystem::path& run_a, const std::filesystem::path& run_b) {
    LoadedSummary a = load_summary(run_a);
    LoadedSummary b = load_summary(run_b);
    if (a.digest != b.digest) {
        throw Error::input("comparison refused: test data digests differ (" + a.digest + " vs " +
                           b.digest + ")");
    }

    ComparisonTable table;
    table.run_a = run_a.string();
    table.run_b = run_b.string();
    table.bins = comparison_bins(a.bin_counts, b.bin_counts);

    // accuracy block first, then the cross-entropy and calibration columns
    const std::vector<std::pair<std::string, bool>> metrics = {
        {"oa", true},        {"maa", true},      {"waa", true},
        {"kappa", true},     {"ce_onehot", false}, {"ce_distr", false},
        {"ece", false},      {"mce", false},     {"sce", false}};
    for (const auto& [metric, higher_better] : metrics) {
        ComparisonColumn column;
        column.metric = metric;
        column.higher_better = higher_better;
        column.a = a.cell(metric, table.bins);
        column.b = b.cell(metric, table.bins);
        if (column.a.present && column.b.present && column.a.mean != column.b.mean) {
            const bool a_wins =
                higher_better ? column.a.mean > column.b.mean : column.a.mean < column.b.mean;
            column.best = a_wins ? 1 : 2;
        }
        table.columns.push_back(std::move(column));
    }
    return table;
}

namespace {

std::string cell_text(const ComparisonCell& cell, bool best) {
    if (!cell.present) return "-";
    char buffer[64];
    std::snprintf(buffer, sizeof(buffer), "%.4f +/- %.4f", cell.mean, cell.sd);
    std::string text = buffer;
    if (best) text += " *";
    return text;
}

} // namespace

std::string comparison_text(const ComparisonTable& table) {
    std::ostringstream out;
    out << "comparison (calibration at " << table.bins << " bins; * best per column)\n";
    const std::size_t label_width = std::max(table.run_a.size(), table.run_b.size()) + 2;
    out << std::string(label_width, ' ');
    for (const ComparisonColumn& column : table.columns) {
        out << "  " << column.metric << std::string(column.metric.size() < 20
                                                        ? 20 - column.metric.size()
                                                        : 1, ' ');
    }
    out << "\n";
    auto row = [&](const std::string& name, bool is_a) {
        out << name << std::string(label_width - name.size(), ' ');
        for (const ComparisonColumn& column : table.columns) {
            const ComparisonCell& cell = is_a ? column.a : column.b;
            const bool best = column.best == (is_a ? 1 : 2);
            std::string text = cell_text(cell, best);
            out << "  " << text
                << std::string(text.size() < 20 ? 20 - text.size() : 1, ' ');
        }
        out << "\n";
    };
    row(table.run_a, true);
    row(table.run_b, false);
    return out.str();
}

std::string comparison_csv(const ComparisonTable& table) {
    std::string out = "run";
    for (const ComparisonColumn& column : table.columns) {
        out += "," + column.metric + "_mean," + column.metric + "_sd," + column.metric + "_best";
    }
    out += "\n";
    auto row = [&](const std::string& name, bool is_a) {
        out += name;
        for (const ComparisonColumn& column : table.columns) {
            const ComparisonCell& cell = is_a ? column.a : column.b;
            if (cell.present) {
                out += "," + format_double(cell.mean) + "," + format_double(cell.sd) + "," +
                       (column.best == (is_a ? 1 : 2) ? "1" : "0");
            } else {
                out += ",,,";
            }
        }
        out += "\n";
    };
    row(table.run_a, true);
    row(table.run_b, false);
    return out;
}

std::string comparison_json(const ComparisonTable& table) {
    nlohmann::json doc;
    doc["run_a"] = table.run_a;
    doc["run_b"] = table.run_b;
    doc["bins"] = table.bins;
    nlohmann::json columns = nlohmann::json::array();
    for (const ComparisonColumn& column : table.columns) {
        nlohmann::json entry;
        entry["metric"] = column.metric;
        entry["higher_better"] = column.higher_better;
        for (const char* side : {"a", "b"}) {
            const ComparisonCell& cell = side[0] == 'a' ? column.a : column.b;
            if (cell.present) {
                entry[side] = {{"mean", cell.mean}, {"sd", cell.sd}};
            } else {
                entry[side] = nullptr;
            }
        }
        entry["best"] = column.best == 0 ? "" : (column.best == 1 ? "a" : "b");
        columns.push_back(std::move(entry));
    }
    doc["columns"] = std::move(columns);
    return doc.dump(2) + "\n";
}

} // namespace votecal
