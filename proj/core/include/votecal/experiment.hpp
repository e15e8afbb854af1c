#pragma once

#include "votecal/calibration.hpp"
#include "votecal/metrics.hpp"
#include "votecal/network.hpp"
#include "votecal/synth.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace votecal {

enum class LabelMode { onehot, distributional };

const char* to_string(LabelMode mode);
LabelMode label_mode_from_string(const std::string& name);

/// Full description of one experiment. Every random choice downstream flows
/// from the seeds listed here; the per-seed pipeline id overrides the
/// generator/split/train seeds so paired label modes see identical data.
struct ExperimentConfig {
    GeneratorConfig generator;
    SplitSpec split;
    NetworkSpec network;
    TrainConfig train;
    LabelMode label_mode = LabelMode::onehot;
    std::optional<double> smoothing_alpha;
    bool temperature_scaling = false;
    std::optional<int> mc_dropout_passes;
    std::vector<int> bin_counts = {10, 15, 20, 25};
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
    std::optional<LossKind> loss_override; // ablations only; pairing is enforced otherwise
    bool emit_svg = false;

    /// Loss implied by the label mode, unless overridden.
    LossKind effective_loss() const;
    void validate() const;
};

ExperimentConfig load_experiment_config(const std::filesystem::path& path);
ExperimentConfig experiment_config_from_json(const std::string& text);
std::string experiment_config_json(const ExperimentConfig& config);

/// Result of one seed's generate-split-train-evaluate pipeline.
struct SeedOutcome {
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    ScoreReport scores;
    std::vector<CalibrationMetrics> calibration;
    std::optional<double> temperature;
    std::string test_digest;
    int best_epoch = 0;
    int epochs_run = 0;
};

struct MetricStats {
    double mean = 0.0;
    double sd = 0.0; // sample (n-1) form, 0 when n < 2
    int n = 0;
};

struct RunSummary {
    ExperimentConfig config;
    std::vector<SeedOutcome> seeds;
    std::map<std::string, MetricStats> aggregate; // oa, ..., ece@20, ...
    std::string test_digest;                      // combined over seeds
};

/// Runs every seed (failures are recorded, not fatal), writes config.json,
/// data/, per-seed artifact directories and summary.json under out_dir.
RunSummary run_experiment(const ExperimentConfig& config, const std::filesystem::path& out_dir);

std::string summary_json(const RunSummary& summary);

/// Test-time prediction with the configured calibration options: plain
/// softmax, temperature-scaled, MC dropout, or MC dropout with the
/// temperature applied to each pass's logits before averaging.
ClassDistribution predict_with_options(const NetworkParams& params,
                                       std::span<const double> features,
                                       std::optional<int> mc_passes,
                                       std::optional<Temperature> temperature,
                                       std::uint64_t sample_seed);

/// Per-seed pipeline, exposed for the train/evaluate/calibrate subcommands.
struct SeedArtifacts {
    Dataset data;
    SplitResult parts;
    TrainResult trained;
    std::optional<Temperature> temperature;
    std::vector<PredictionRecord> test_records;
    std::string test_digest;
};

SeedArtifacts run_seed_pipeline(const ExperimentConfig& config, std::uint64_t seed);

/// Side-by-side summary of two runs, one column per metric.
struct ComparisonCell {
    bool present = false;
    double mean = 0.0;
    double sd = 0.0;
};

struct ComparisonColumn {
    std::string metric;   // oa, maa, waa, kappa, ce_onehot, ce_distr, ece, mce, sce
    bool higher_better = false;
    ComparisonCell a;
    ComparisonCell b;
    int best = 0; // 0 none/equal, 1 run a, 2 run b
};

struct ComparisonTable {
    std::string run_a;
    std::string run_b;
    int bins = 0; // bin count used for the calibration columns
    std::vector<ComparisonColumn> columns;
};

/// Refuses (input error) when the two runs were not evaluated on identical
/// test data, as witnessed by their data digests.
ComparisonTable compare(const std::filesystem::path& run_a, const std::filesystem::path& run_b);

std::string comparison_text(const ComparisonTable& table);
std::string comparison_csv(const ComparisonTable& table);
std::string comparison_json(const ComparisonTable& table);

} // namespace votecal
