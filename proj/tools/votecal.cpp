// votecal: synthetic multi-annotator experiments with distributional labels,
// calibration and evaluation. Subcommands: gen, train, evaluate, calibrate,
// run, compare. Exit codes: 0 success, 1 validation/config error, 2 runtime
// failure. All randomness flows from config seeds.

#include "votecal/calibration.hpp"
#include "votecal/common.hpp"
#include "votecal/experiment.hpp"
#include "votecal/metrics.hpp"
#include "votecal/synth.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace {

namespace fs = std::filesystem;
using namespace votecal;

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error::runtime("cannot write '" + path.string() + "'");
    out << content;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error::input("cannot open '" + path.string() + "'");
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

struct CommonOptions {
    std::string config_path;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    std::vector<int> bins;
    std::string format = "json";
    bool svg = false;
};

ExperimentConfig load_config(const CommonOptions& options) {
    ExperimentConfig config = load_experiment_config(options.config_path);
    if (!options.bins.empty()) config.bin_counts = options.bins;
    if (options.svg) config.emit_svg = true;
    config.validate();
    return config;
}

std::uint64_t pick_seed(const ExperimentConfig& config, const CommonOptions& options) {
    return options.seed ? *options.seed : config.seeds.front();
}

int reliability_bins(const std::vector<int>& bin_counts) {
    for (int bins : bin_counts) {
        if (bins == 20) return 20;
    }
    return bin_counts.front();
}

int cmd_gen(const CommonOptions& options) {
    GeneratorConfig config = generator_config_from_json(read_file(options.config_path));
    if (options.seed) config.seed = *options.seed;
    Dataset data = generate(config);
    fs::create_directories(options.out_dir);
    write_file(fs::path(options.out_dir) / "votes.csv", dataset_votes_csv(data));
    write_file(fs::path(options.out_dir) / "features.csv", dataset_features_csv(data));
    write_file(fs::path(options.out_dir) / "latent.csv", latent_csv(data));
    std::cout << "wrote " << data.samples.size() << " samples to " << options.out_dir << "\n";
    return 0;
}

int cmd_train(const CommonOptions& options) {
    ExperimentConfig config = load_config(options);
    const std::uint64_t seed = pick_seed(config, options);
    SeedArtifacts artifacts = run_seed_pipeline(config, seed);
    fs::create_directories(options.out_dir);
    save_model_json(artifacts.trained.params, seed, fs::path(options.out_dir) / "model.json");
    std::string log_csv = "epoch,train_loss,val_loss,learning_rate\n";
    for (const EpochLog& entry : artifacts.trained.log) {
        log_csv += std::to_string(entry.epoch) + "," + format_double(entry.train_loss) + "," +
                   format_double(entry.val_loss) + "," + format_double(entry.learning_rate) + "\n";
    }
    write_file(fs::path(options.out_dir) / "training_log.csv", log_csv);
    std::cout << "seed " << seed << ": trained " << artifacts.trained.log.size()
              << " epochs, best val loss " << format_double(artifacts.trained.best_val_loss)
              << " at epoch " << artifacts.trained.best_epoch << "\n";
    return 0;
}

int cmd_evaluate(const CommonOptions& options, const std::string& model_path,
                 std::optional<double> fixed_temperature) {
    ExperimentConfig config = load_config(options);
    const std::uint64_t seed = pick_seed(config, options);
    const int k = config.generator.class_count;

    GeneratorConfig generator = config.generator;
    generator.seed = seed;
    Dataset data = generate(generator);
    SplitSpec split_spec = config.split;
    split_spec.seed = seed;
    SplitResult parts = split(data, split_spec);
    if (parts.test.empty()) throw Error::input("evaluate: test split is empty");

    NetworkParams params = load_model_json(model_path);
    if (params.spec.input_dim != config.generator.feature_dim ||
        params.spec.class_count != k) {
        throw Error::input("evaluate: model dimensions do not match the config");
    }

    std::optional<Temperature> temperature;
    if (fixed_temperature) {
        temperature = Temperature{*fixed_temperature};
    } else if (config.temperature_scaling) {
        std::vector<LogitVector> val_logits;
        std::vector<int> val_true;
        for (std::size_t i : parts.val) {
            val_logits.push_back(forward(params, data.samples[i].features));
            val_true.push_back(majority_label(tally_votes(data.samples[i].votes, k)).winner);
        }
        if (val_logits.empty()) throw Error::input("evaluate: validation split is empty");
        temperature = fit_temperature(val_logits, val_true);
    }

    std::vector<PredictionRecord> records;
    std::uint64_t index = 0;
    for (std::size_t i : parts.test) {
        const SampleData& s = data.samples[i];
        ClassDistribution pred =
            predict_with_options(params, s.features, config.mc_dropout_passes, temperature,
                                 rng::draw(seed, fnv1a("mc-eval"), index));
        const VoteCounts counts = tally_votes(s.votes, k);
        records.push_back(PredictionRecord::make(s.sample_id, std::move(pred),
                                                 majority_label(counts).winner,
                                                 distributional_label(counts)));
        ++index;
    }

    fs::create_directories(options.out_dir);
    const ScoreReport scores = score_report(records);
    write_file(fs::path(options.out_dir) / "scores.json", score_json(scores));
    write_file(fs::path(options.out_dir) / "calibration.json",
               calibration_json(calibration_sweep(records, config.bin_counts, k)));
    const ReliabilityReport reliability =
        reliability_data(assign_bins(records, reliability_bins(config.bin_counts)), records);
    write_file(fs::path(options.out_dir) / "reliability.csv", reliability_csv(reliability));
    if (config.emit_svg) {
        write_file(fs::path(options.out_dir) / "reliability.svg", reliability_svg(reliability));
    }
    write_file(fs::path(options.out_dir) / "confusion.csv", confusion_csv(confusion(records)));
    if (options.format == "csv") {
        std::cout << "oa,maa,waa,kappa,ce_onehot,ce_distr,n,inf_ce_count\n"
                  << format_double(scores.oa) << "," << format_double(scores.maa) << ","
                  << format_double(scores.waa) << "," << format_double(scores.kappa) << ","
                  << format_double(scores.ce_onehot) << "," << format_double(scores.ce_distr)
                  << "," << scores.n << "," << scores.inf_ce_count << "\n";
    } else {
        std::cout << score_json(scores);
    }
    return 0;
}

int cmd_calibrate(const CommonOptions& options, const std::string& model_path) {
    ExperimentConfig config = load_config(options);
    const std::uint64_t seed = pick_seed(config, options);
    const int k = config.generator.class_count;

    GeneratorConfig generator = config.generator;
    generator.seed = seed;
    Dataset data = generate(generator);
    SplitSpec split_spec = config.split;
    split_spec.seed = seed;
    SplitResult parts = split(data, split_spec);
    if (parts.val.empty()) throw Error::input("calibrate: validation split is empty");

    NetworkParams params = load_model_json(model_path);
    std::vector<LogitVector> val_logits;
    std::vector<int> val_true;
    for (std::size_t i : parts.val) {
        val_logits.push_back(forward(params, data.samples[i].features));
        val_true.push_back(majority_label(tally_votes(data.samples[i].votes, k)).winner);
    }
    const Temperature fitted = fit_temperature(val_logits, val_true);
    const double nll_before = temperature_nll(val_logits, val_true, Temperature{1.0});
    const double nll_after = temperature_nll(val_logits, val_true, fitted);

    std::string report = "{\n  \"temperature\": " + format_double(fitted.t) +
                         ",\n  \"nll_at_one\": " + format_double(nll_before) +
                         ",\n  \"nll_fitted\": " + format_double(nll_after) + "\n}\n";
    if (!options.out_dir.empty()) {
        fs::create_directories(options.out_dir);
        write_file(fs::path(options.out_dir) / "temperature.json", report);
    }
    if (options.format == "csv") {
        std::cout << "temperature,nll_at_one,nll_fitted\n"
                  << format_double(fitted.t) << "," << format_double(nll_before) << ","
                  << format_double(nll_after) << "\n";
    } else {
        std::cout << report;
    }
    return 0;
}

int cmd_run(const CommonOptions& options) {
    ExperimentConfig config = load_config(options);
    RunSummary summary = run_experiment(config, options.out_dir);
    int completed = 0;
    for (const SeedOutcome& outcome : summary.seeds) {
        if (outcome.ok) {
            ++completed;
        } else {
            std::cerr << "seed " << outcome.seed << " failed: " << outcome.error << "\n";
        }
    }
    std::cout << completed << "/" << summary.seeds.size() << " seeds completed, summary in "
              << (fs::path(options.out_dir) / "summary.json").string() << "\n";
    if (completed == 0) throw Error::runtime("run: no seed completed");
    return 0;
}

int cmd_compare(const std::string& run_a, const std::string& run_b, const std::string& format,
                const std::string& out_path) {
    ComparisonTable table = compare(run_a, run_b);
    std::string rendered;
    if (format == "json") {
        rendered = comparison_json(table);
    } else if (format == "csv") {
        rendered = comparison_csv(table);
    } else {
        rendered = comparison_text(table);
    }
    if (!out_path.empty()) {
        write_file(out_path, rendered);
    } else {
        std::cout << rendered;
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"multi-annotator vote labels, softmax classifier training and calibration"};
    app.require_subcommand(1);

    CommonOptions options;
    std::string model_path;
    std::optional<double> fixed_temperature;
    std::string run_a, run_b, compare_out;
    std::string compare_format = "text";

    auto add_common = [&](CLI::App* cmd, bool needs_out, bool with_format = false) {
        cmd->add_option("--config", options.config_path, "experiment config JSON")->required();
        auto* out = cmd->add_option("--out", options.out_dir, "output directory");
        if (needs_out) out->required();
        cmd->add_option("--seed", options.seed, "pipeline seed (default: first config seed)");
        cmd->add_option("--bins", options.bins, "bin counts override")->delimiter(',');
        if (with_format) {
            cmd->add_option("--format", options.format, "stdout report format")
                ->check(CLI::IsMember({"json", "csv"}));
        }
        cmd->add_flag("--svg", options.svg, "also render reliability diagrams as SVG");
    };

    CLI::App* gen = app.add_subcommand("gen", "write a synthetic data set");
    add_common(gen, true);

    CLI::App* train_cmd = app.add_subcommand("train", "train one seed, write model.json");
    add_common(train_cmd, true);

    CLI::App* evaluate = app.add_subcommand("evaluate", "evaluate a model on the test split");
    add_common(evaluate, true, true);
    evaluate->add_option("--model", model_path, "model JSON path")->required();
    evaluate->add_option("--temperature", fixed_temperature, "apply a fixed temperature");

    CLI::App* calibrate =
        app.add_subcommand("calibrate", "fit a temperature on the validation split");
    add_common(calibrate, false, true);
    calibrate->add_option("--model", model_path, "model JSON path")->required();

    CLI::App* run = app.add_subcommand("run", "full multi-seed experiment");
    add_common(run, true);

    CLI::App* cmp = app.add_subcommand("compare", "side-by-side summary of two runs");
    cmp->add_option("run_a", run_a, "first run directory")->required();
    cmp->add_option("run_b", run_b, "second run directory")->required();
    cmp->add_option("--format", compare_format, "output format")
        ->check(CLI::IsMember({"text", "json", "csv"}));
    cmp->add_option("--out", compare_out, "write the table to a file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (gen->parsed()) return cmd_gen(options);
        if (train_cmd->parsed()) return cmd_train(options);
        if (evaluate->parsed()) return cmd_evaluate(options, model_path, fixed_temperature);
        if (calibrate->parsed()) return cmd_calibrate(options, model_path);
        if (run->parsed()) return cmd_run(options);
        if (cmp->parsed()) return cmd_compare(run_a, run_b, compare_format, compare_out);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.kind() == Error::Kind::input ? 1 : 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
