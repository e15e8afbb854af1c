#include "votecal/calibration.hpp"
#include "votecal/common.hpp"
#include "votecal/labels.hpp"
#include "votecal/metrics.hpp"
#include "votecal/network.hpp"
#include "votecal/synth.hpp"

#include <benchmark/benchmark.h>

#include <cmath>
#include <vector>

using namespace votecal;

namespace {

ClassDistribution simplex_sample(int k, std::uint64_t seed, std::uint64_t key) {
    ClassDistribution dist;
    dist.probs.resize(static_cast<std::size_t>(k));
    double sum = 0.0;
    for (int i = 0; i < k; ++i) {
        const double u = rng::uniform(seed, key, static_cast<std::uint64_t>(i));
        dist.probs[static_cast<std::size_t>(i)] = -std::log(1.0 - u);
        sum += dist.probs[static_cast<std::size_t>(i)];
    }
    for (double& p : dist.probs) p /= sum;
    return dist;
}

std::vector<PredictionRecord> make_records(int n, int k) {
    std::vector<PredictionRecord> records;
    records.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        ClassDistribution pred = simplex_sample(k, 17, static_cast<std::uint64_t>(i));
        const int truth = 1 + static_cast<int>(rng::uniform(18, static_cast<std::uint64_t>(i), 0) * k);
        records.push_back(PredictionRecord::make("s" + std::to_string(i), std::move(pred), truth,
                                                 ClassDistribution::one_hot(truth, k)));
    }
    return records;
}

void BM_Softmax(benchmark::State& state) {
    LogitVector logits;
    for (int i = 0; i < state.range(0); ++i) {
        logits.push_back(rng::normal(3, 0, static_cast<std::uint64_t>(i)));
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(softmax(logits));
    }
}
BENCHMARK(BM_Softmax)->Arg(10)->Arg(17)->Arg(100);

void BM_LossKl(benchmark::State& state) {
    ClassDistribution target = simplex_sample(static_cast<int>(state.range(0)), 5, 1);
    ClassDistribution pred = simplex_sample(static_cast<int>(state.range(0)), 5, 2);
    for (auto _ : state) {
        benchmark::DoNotOptimize(loss_kl(target, pred));
    }
}
BENCHMARK(BM_LossKl)->Arg(10)->Arg(17);

void BM_GradientBatch(benchmark::State& state) {
    NetworkSpec spec;
    spec.input_dim = 16;
    spec.hidden_dims = {64};
    spec.class_count = 10;
    spec.dropout_rate = 0.0;
    NetworkParams params = init_params(spec, 7);
    std::vector<TrainSample> batch;
    for (int i = 0; i < 64; ++i) {
        TrainSample sample;
        for (int d = 0; d < 16; ++d) {
            sample.features.push_back(
                rng::normal(9, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(d)));
        }
        sample.target = simplex_sample(10, 11, static_cast<std::uint64_t>(i));
        batch.push_back(std::move(sample));
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(gradient(params, batch, LossKind::kl_distr));
    }
}
BENCHMARK(BM_GradientBatch);

void BM_EceBins(benchmark::State& state) {
    auto records = make_records(static_cast<int>(state.range(0)), 10);
    for (auto _ : state) {
        auto bins = assign_bins(records, 20);
        benchmark::DoNotOptimize(ece(bins));
    }
}
BENCHMARK(BM_EceBins)->Arg(1000)->Arg(10000);

void BM_Sce(benchmark::State& state) {
    auto records = make_records(static_cast<int>(state.range(0)), 10);
    for (auto _ : state) {
        benchmark::DoNotOptimize(sce(records, 20, 10));
    }
}
BENCHMARK(BM_Sce)->Arg(1000)->Arg(10000);

void BM_FitTemperature(benchmark::State& state) {
    std::vector<LogitVector> logits;
    std::vector<int> labels;
    for (std::uint64_t i = 0; i < 1000; ++i) {
        ClassDistribution q = simplex_sample(10, 21, i);
        LogitVector z;
        for (double p : q.probs) z.push_back(1.8 * std::log(p));
        logits.push_back(std::move(z));
        labels.push_back(static_cast<int>(rng::categorical(q.probs, rng::uniform(22, i, 0))) + 1);
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(fit_temperature(logits, labels));
    }
}
BENCHMARK(BM_FitTemperature);

void BM_Generate(benchmark::State& state) {
    GeneratorConfig config;
    config.class_count = 10;
    config.feature_dim = 16;
    config.annotators = 10;
    config.class_separation = 2.2;
    config.ambiguity = 0.3;
    config.group_shift = 0.5;
    config.seed = 1;
    config.groups = {{"a", std::vector<int>(10, static_cast<int>(state.range(0)))}};
    for (auto _ : state) {
        benchmark::DoNotOptimize(generate(config));
    }
}
BENCHMARK(BM_Generate)->Arg(100)->Arg(600);

} // namespace

int main(int argc, char** argv) {
    benchmark::Initialize(&argc, argv);
    benchmark::RunSpecifiedBenchmarks();
    return 0;
}
