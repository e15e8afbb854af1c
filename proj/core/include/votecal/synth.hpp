#pragma once

#include "votecal/labels.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace votecal {

struct GroupSpec {
    std::string group_id;
    std::vector<int> samples_per_class; // length K, per-class sample counts
};

/// Configuration of the synthetic vote generator.
///
/// Samples of class k in group g are drawn as unit-variance Gaussian noise
/// around a class center (class_separation along feature axis k-1) jittered
/// per group by group_shift. From each sample's distances to all centers, a
/// latent class distribution is formed via softmax(-d^2 / (2 * ambiguity *
/// class_separation^2)); the J annotator votes are independent draws from
/// that latent. ambiguity = 0 degenerates to unanimous votes for the true
/// class. Feature columns are standardized over the emitted data set.
struct GeneratorConfig {
    int class_count = 0;
    int feature_dim = 0;
    std::vector<GroupSpec> groups;
    int annotators = 10;
    double class_separation = 3.0;
    double ambiguity = 0.0;
    double group_shift = 0.0;
    std::uint64_t seed = 0;

    void validate() const;
};

struct SampleData {
    std::string sample_id;
    std::string group_id;
    int true_class = 0; // generator's latent class, 1-based
    std::vector<double> features;
    VoteRecord votes;
    ClassDistribution latent;
};

struct Dataset {
    int class_count = 0;
    int feature_dim = 0;
    int annotators = 0;
    std::vector<SampleData> samples; // ordered by sample_id
};

Dataset generate(const GeneratorConfig& config);

/// Group-level split: train groups go to training wholesale; holdout groups
/// are partitioned sample-wise into validation and test by a seeded draw.
struct SplitSpec {
    std::vector<std::string> train_groups;
    std::vector<std::string> holdout_groups;
    double val_fraction = 0.5;
    std::uint64_t seed = 0;

    void validate() const;
};

struct SplitResult {
    std::vector<std::size_t> train; // indices into Dataset::samples
    std::vector<std::size_t> val;
    std::vector<std::size_t> test;
};

SplitResult split(const Dataset& data, const SplitSpec& spec);

/// Per class: the fraction of that class's samples (by majority vote) in
/// each set; rows sum to 1.
struct ClassFrequencyReport {
    std::vector<int> classes;
    std::vector<std::array<double, 3>> fractions; // train, val, test per class
    std::vector<long long> class_totals;
    std::array<long long, 3> set_totals = {0, 0, 0};
};

ClassFrequencyReport class_frequency_report(const Dataset& data, const SplitResult& split);
std::string class_frequency_csv(const ClassFrequencyReport& report);

/// Vote-entropy histogram per caller-supplied class subset (samples grouped
/// by their majority winner).
struct EntropyGroup {
    std::string name;
    std::vector<int> classes;
    std::vector<long long> bucket_counts;
    double mean_entropy = 0.0;
    long long n = 0;
};

struct EntropySummary {
    std::vector<double> bucket_edges; // n_buckets + 1 edges over [0, ln K]
    std::vector<EntropyGroup> groups;
};

EntropySummary entropy_summary(const Dataset& data,
                               std::span<const std::pair<std::string, std::vector<int>>> subsets,
                               int n_buckets = 20);

/// latent.csv: sample_id plus the generator's latent distribution, consumed
/// only by test oracles.
std::string latent_csv(const Dataset& data);

std::string dataset_votes_csv(const Dataset& data);
std::string dataset_features_csv(const Dataset& data);

GeneratorConfig generator_config_from_json(const std::string& text);

} // namespace votecal
