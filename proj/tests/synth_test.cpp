#include "votecal/synth.hpp"

#include "votecal/common.hpp"

#include <doctest.h>

#include <cmath>
#include <set>

using namespace votecal;

namespace {

GeneratorConfig small_config(double ambiguity = 0.0, std::uint64_t seed = 1) {
    GeneratorConfig config;
    config.class_count = 4;
    config.feature_dim = 6;
    config.annotators = 10;
    config.class_separation = 3.0;
    config.ambiguity = ambiguity;
    config.group_shift = 0.3;
    config.seed = seed;
    config.groups = {{"g-a", {5, 5, 5, 5}}, {"g-b", {4, 4, 4, 4}}, {"g-c", {3, 3, 3, 3}}};
    return config;
}

} // namespace

TEST_CASE("generate respects the configured sizes and vote ranges") {
    Dataset data = generate(small_config(0.4));
    CHECK(data.samples.size() == 4 * (5 + 4 + 3));
    CHECK(data.class_count == 4);
    CHECK(data.annotators == 10);
    for (const SampleData& sample : data.samples) {
        CHECK(sample.votes.votes.size() == 10);
        for (int vote : sample.votes.votes) {
            CHECK(vote >= 1);
            CHECK(vote <= 4);
        }
        CHECK(sample.features.size() == 6);
        CHECK(sample.latent.is_valid(1e-9));
        CHECK(tally_votes(sample.votes, 4).total() == 10);
    }
}

TEST_CASE("generate is deterministic in the seed") {
    Dataset a = generate(small_config(0.6, 42));
    Dataset b = generate(small_config(0.6, 42));
    REQUIRE(a.samples.size() == b.samples.size());
    for (std::size_t i = 0; i < a.samples.size(); ++i) {
        CHECK(a.samples[i].sample_id == b.samples[i].sample_id);
        CHECK(a.samples[i].features == b.samples[i].features);
        CHECK(a.samples[i].votes.votes == b.samples[i].votes.votes);
        CHECK(a.samples[i].latent.probs == b.samples[i].latent.probs);
    }
    Dataset c = generate(small_config(0.6, 43));
    bool any_different = false;
    for (std::size_t i = 0; i < a.samples.size(); ++i) {
        if (a.samples[i].votes.votes != c.samples[i].votes.votes) any_different = true;
    }
    CHECK(any_different);
}

TEST_CASE("zero ambiguity degenerates to unanimous votes") {
    Dataset data = generate(small_config(0.0));
    for (const SampleData& sample : data.samples) {
        const VoteCounts counts = tally_votes(sample.votes, 4);
        const MajorityResult majority = majority_label(counts);
        CHECK_FALSE(majority.tied);
        CHECK(majority.winner == sample.true_class);
        CHECK(counts.counts[static_cast<std::size_t>(sample.true_class - 1)] == 10);
        ClassDistribution label = distributional_label(counts);
        CHECK(label.probs[static_cast<std::size_t>(sample.true_class - 1)] == 1.0);
        CHECK(sample.latent.probs[static_cast<std::size_t>(sample.true_class - 1)] == 1.0);
    }
}

TEST_CASE("generated features are standardized per dimension") {
    Dataset data = generate(small_config(0.2));
    for (int dim = 0; dim < data.feature_dim; ++dim) {
        double mean = 0.0;
        for (const SampleData& s : data.samples) mean += s.features[static_cast<std::size_t>(dim)];
        mean /= static_cast<double>(data.samples.size());
        double var = 0.0;
        for (const SampleData& s : data.samples) {
            const double d = s.features[static_cast<std::size_t>(dim)] - mean;
            var += d * d;
        }
        var /= static_cast<double>(data.samples.size());
        CHECK(std::fabs(mean) <= 1e-9);
        CHECK(std::fabs(var - 1.0) <= 1e-9);
    }
}

TEST_CASE("generator rejects impossible configurations") {
    GeneratorConfig config = small_config();
    config.feature_dim = 3; // fewer dimensions than classes
    CHECK_THROWS_AS(generate(config), Error);

    config = small_config();
    config.groups.push_back({"g-a", {1, 1, 1, 1}}); // duplicate id
    CHECK_THROWS_AS(generate(config), Error);

    config = small_config();
    config.groups[0].samples_per_class = {1, 1};
    CHECK_THROWS_AS(generate(config), Error);

    config = small_config();
    config.groups[0].samples_per_class = {-1, 1, 1, 1};
    CHECK_THROWS_AS(generate(config), Error);
}

TEST_CASE("split partitions the data set by group") {
    Dataset data = generate(small_config(0.3));
    SplitSpec spec;
    spec.train_groups = {"g-a"};
    spec.holdout_groups = {"g-b", "g-c"};
    spec.val_fraction = 0.5;
    spec.seed = 9;
    SplitResult parts = split(data, spec);

    CHECK(parts.train.size() == 20);
    CHECK(parts.val.size() + parts.test.size() == 28);

    std::set<std::size_t> seen;
    for (const auto* indices : {&parts.train, &parts.val, &parts.test}) {
        for (std::size_t i : *indices) {
            CHECK(seen.insert(i).second); // no sample in two sets
        }
    }
    CHECK(seen.size() == data.samples.size());
    for (std::size_t i : parts.train) CHECK(data.samples[i].group_id == "g-a");
    for (std::size_t i : parts.val) CHECK(data.samples[i].group_id != "g-a");

    SplitResult again = split(data, spec);
    CHECK(again.val == parts.val);
    CHECK(again.test == parts.test);
}

TEST_CASE("split sends everything to train when no holdout groups exist") {
    Dataset data = generate(small_config());
    SplitSpec spec;
    spec.train_groups = {"g-a", "g-b", "g-c"};
    SplitResult parts = split(data, spec);
    CHECK(parts.train.size() == data.samples.size());
    CHECK(parts.val.empty());
    CHECK(parts.test.empty());
}

TEST_CASE("split rejects unknown groups and overlapping specs") {
    Dataset data = generate(small_config());
    SplitSpec spec;
    spec.train_groups = {"g-a"};
    spec.holdout_groups = {"g-b"}; // g-c unassigned
    CHECK_THROWS_AS(split(data, spec), Error);

    spec.holdout_groups = {"g-a", "g-b", "g-c"};
    CHECK_THROWS_AS(split(data, spec), Error); // g-a on both sides
}

TEST_CASE("val_fraction splits the holdout within binomial bounds") {
    GeneratorConfig config = small_config(0.0, 11);
    config.groups = {{"train", {10, 10, 10, 10}}, {"hold", {250, 250, 250, 250}}};
    Dataset data = generate(config);
    SplitSpec spec;
    spec.train_groups = {"train"};
    spec.holdout_groups = {"hold"};
    spec.val_fraction = 0.5;
    spec.seed = 3;
    SplitResult parts = split(data, spec);
    const double n = 1000.0;
    CHECK(parts.val.size() + parts.test.size() == 1000);
    // five sigma around n/2
    CHECK(std::fabs(static_cast<double>(parts.val.size()) - n / 2.0) < 5.0 * std::sqrt(n * 0.25));
}

TEST_CASE("class_frequency_report rows sum to one and totals match") {
    Dataset data = generate(small_config(0.2));
    SplitSpec spec;
    spec.train_groups = {"g-a", "g-b"};
    spec.holdout_groups = {"g-c"};
    spec.seed = 5;
    SplitResult parts = split(data, spec);
    ClassFrequencyReport report = class_frequency_report(data, parts);

    REQUIRE(report.classes.size() == 4);
    for (std::size_t i = 0; i < report.classes.size(); ++i) {
        if (report.class_totals[i] == 0) continue;
        const double sum =
            report.fractions[i][0] + report.fractions[i][1] + report.fractions[i][2];
        CHECK(std::fabs(sum - 1.0) <= 1e-9);
    }
    CHECK(report.set_totals[0] == static_cast<long long>(parts.train.size()));
    CHECK(report.set_totals[1] == static_cast<long long>(parts.val.size()));
    CHECK(report.set_totals[2] == static_cast<long long>(parts.test.size()));

    const std::string csv = class_frequency_csv(report);
    CHECK(csv.find("class,train,val,test,total") == 0);
}

TEST_CASE("a class confined to train reports the (1,0,0) row") {
    GeneratorConfig config = small_config(0.0);
    config.groups = {{"only-train", {6, 0, 0, 0}}, {"rest", {0, 6, 6, 6}}};
    Dataset data = generate(config);
    SplitSpec spec;
    spec.train_groups = {"only-train"};
    spec.holdout_groups = {"rest"};
    SplitResult parts = split(data, spec);
    ClassFrequencyReport report = class_frequency_report(data, parts);
    CHECK(report.fractions[0][0] == 1.0);
    CHECK(report.fractions[0][1] == 0.0);
    CHECK(report.fractions[0][2] == 0.0);
}

TEST_CASE("entropy_summary buckets unanimous data at zero and tracks ambiguity") {
    Dataset crisp = generate(small_config(0.0));
    std::vector<std::pair<std::string, std::vector<int>>> subsets = {
        {"low", {1, 2}}, {"high", {3, 4}}};
    EntropySummary summary = entropy_summary(crisp, subsets, 10);
    REQUIRE(summary.groups.size() == 2);
    for (const EntropyGroup& group : summary.groups) {
        CHECK(group.bucket_counts[0] == group.n);
        CHECK(group.mean_entropy == 0.0);
        long long total = 0;
        for (long long c : group.bucket_counts) total += c;
        CHECK(total == group.n);
    }

    // paired seeds: more ambiguity, more vote entropy (>= 500 samples)
    GeneratorConfig base = small_config(0.15, 77);
    base.groups = {{"g", {150, 150, 150, 150}}};
    GeneratorConfig spread = base;
    spread.ambiguity = 1.2;
    std::vector<std::pair<std::string, std::vector<int>>> all = {{"all", {1, 2, 3, 4}}};
    const double low = entropy_summary(generate(base), all).groups[0].mean_entropy;
    const double high = entropy_summary(generate(spread), all).groups[0].mean_entropy;
    CHECK(high > low);

    CHECK_THROWS_AS(entropy_summary(crisp, std::vector<std::pair<std::string, std::vector<int>>>{
                                               {"empty", {}}}),
                    Error);
}

TEST_CASE("empirical labels converge to the latent distribution with many votes") {
    GeneratorConfig config = small_config(0.1, 13);
    config.class_separation = 5.0;
    config.annotators = 1000;
    config.groups = {{"g", {50, 50, 50, 50}}};
    Dataset data = generate(config);
    int within = 0;
    for (const SampleData& sample : data.samples) {
        ClassDistribution empirical = distributional_label(tally_votes(sample.votes, 4));
        double l1 = 0.0;
        for (std::size_t k = 0; k < empirical.size(); ++k) {
            l1 += std::fabs(empirical.probs[k] - sample.latent.probs[k]);
        }
        if (l1 <= 0.05) ++within;
    }
    CHECK(static_cast<double>(within) >=
          0.99 * static_cast<double>(data.samples.size()));
}

TEST_CASE("dataset CSV emitters cover votes, features and latent distributions") {
    Dataset data = generate(small_config(0.5));
    const std::string votes = dataset_votes_csv(data);
    CHECK(votes.find("sample_id,group_id,v1,") == 0);
    const std::string features = dataset_features_csv(data);
    CHECK(features.find("sample_id,group_id,f1,") == 0);
    const std::string latent = latent_csv(data);
    CHECK(latent.find("sample_id,p1,p2,p3,p4") == 0);
    CHECK(static_cast<std::size_t>(std::count(latent.begin(), latent.end(), '\n')) ==
          data.samples.size() + 1);
}

TEST_CASE("generator config parses from JSON with scalar or per-class counts") {
    const std::string text = R"({
      "class_count": 3, "feature_dim": 4, "annotators": 5,
      "class_separation": 2.0, "ambiguity": 0.1, "seed": 8,
      "groups": [
        {"group_id": "a", "samples_per_class": 7},
        {"group_id": "b", "samples_per_class": [1, 2, 3]}
      ]
    })";
    GeneratorConfig config = generator_config_from_json(text);
    CHECK(config.class_count == 3);
    CHECK(config.groups[0].samples_per_class == std::vector<int>{7, 7, 7});
    CHECK(config.groups[1].samples_per_class == std::vector<int>{1, 2, 3});
    CHECK(config.group_shift == 0.0);

    CHECK_THROWS_AS(generator_config_from_json("{"), Error);
    CHECK_THROWS_AS(generator_config_from_json("{}"), Error);
}
