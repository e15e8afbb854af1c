#pragma once

#include "votecal/labels.hpp"
#include "votecal/network.hpp"

#include <span>
#include <string>
#include <vector>

namespace votecal {

/// One evaluated sample: prediction, its confidence (max probability), and
/// the one-hot/distributional ground truth.
struct PredictionRecord {
    std::string sample_id;
    ClassDistribution pred_dist;
    double confidence = 0.0; // max entry of pred_dist
    int predicted_class = 0; // argmax, lowest index on ties
    int true_class = 0;      // majority-vote winner
    ClassDistribution true_dist;

    static PredictionRecord make(std::string sample_id, ClassDistribution pred, int true_class,
                                 ClassDistribution true_dist);
};

/// Confidence bin B_m = ((m-1)/M, m/M]. Empty bins carry count 0 and NaN
/// means and are skipped by the error metrics.
struct BinStatistics {
    int bin_index = 0; // 1-based
    double lower = 0.0;
    double upper = 0.0;
    long long count = 0;
    double mean_accuracy = 0.0;
    double mean_confidence = 0.0;

    bool empty() const { return count == 0; }
};

/// Half-open bin containing `value` among m_bins equal bins of (0,1];
/// values <= 0 map to bin 1 (class probabilities may be exactly zero).
int bin_index_of(double value, int m_bins);

std::vector<BinStatistics> assign_bins(std::span<const PredictionRecord> records, int m_bins);

/// Expected calibration error: count-weighted mean |accuracy - confidence|.
double ece(std::span<const BinStatistics> bins);

/// Maximum |accuracy - confidence| over non-empty bins.
double mce(std::span<const BinStatistics> bins);

/// Static calibration error: per class, records are binned by that class's
/// predicted probability; gaps are weighted by bin occupancy and averaged
/// over classes.
double sce(std::span<const PredictionRecord> records, int m_bins, int class_count);

struct ReliabilityReport {
    std::vector<BinStatistics> bins;
    long long n = 0;
    double overall_accuracy = 0.0;
    double mean_confidence = 0.0;
};

ReliabilityReport reliability_data(std::span<const BinStatistics> bins,
                                   std::span<const PredictionRecord> records);

/// CSV rows `bin,lower,upper,count,accuracy,confidence,gap`; empty bins are
/// absent; a trailing `summary` row carries overall accuracy and mean
/// confidence.
std::string reliability_csv(const ReliabilityReport& report);

/// Bar chart of per-bin accuracy against the diagonal with gap shading.
std::string reliability_svg(const ReliabilityReport& report);

struct Temperature {
    double t = 1.0;
};

/// softmax(logits / t); argmax-preserving for every t > 0.
ClassDistribution apply_temperature(const LogitVector& logits, Temperature t);

/// Mean negative log-likelihood of the true classes under temperature t.
double temperature_nll(std::span<const LogitVector> logits, std::span<const int> true_classes,
                       Temperature t);

struct FitConfig {
    double learning_rate = 0.01;
    int max_iterations = 10000;
    double t_min = 0.05;
    double t_max = 20.0;
};

/// Gradient descent on log T against validation NLL. Returns the better of
/// the fitted temperature and 1.0, so the result never degrades NLL.
Temperature fit_temperature(std::span<const LogitVector> logits,
                            std::span<const int> true_classes, const FitConfig& config = {});

/// ECE/MCE/SCE at one bin-count setting.
struct CalibrationMetrics {
    int bins = 0;
    long long n = 0;
    double ece = 0.0;
    double mce = 0.0;
    double sce = 0.0;
};

CalibrationMetrics calibration_metrics(std::span<const PredictionRecord> records, int m_bins,
                                       int class_count);

/// One evaluation per requested bin count.
std::vector<CalibrationMetrics> calibration_sweep(std::span<const PredictionRecord> records,
                                                  std::span<const int> bin_counts,
                                                  int class_count);

/// JSON array with keys ece, mce, sce, bins, n per bin-count setting; raw
/// fractions plus the x100 percentage forms.
std::string calibration_json(std::span<const CalibrationMetrics> sweep);

} // namespace votecal
