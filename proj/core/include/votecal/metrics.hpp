#pragma once

#include "votecal/calibration.hpp"

#include <span>
#include <string>
#include <vector>

namespace votecal {

/// Row-major K x K count matrix, rows = true (majority) class, columns =
/// predicted class.
struct ConfusionMatrix {
    int class_count = 0;
    std::vector<long long> cells;

    long long& at(int true_class, int pred_class);
    long long at(int true_class, int pred_class) const;
    long long total() const;
    long long trace() const;
    long long row_sum(int true_class) const;
    long long col_sum(int pred_class) const;
};

ConfusionMatrix confusion(std::span<const PredictionRecord> records);

struct AccuracySuite {
    double oa = 0.0;  // overall accuracy, trace / total
    double maa = 0.0; // macro average of per-class recall over supported classes
    double waa = 0.0; // support-weighted per-class binary accuracy (TP+TN)/n
};

AccuracySuite accuracy_suite(const ConfusionMatrix& cm);

/// Cohen's kappa; 0 for the degenerate single-cell case p_e = p_o = 1.
double kappa(const ConfusionMatrix& cm);

struct GeneralizationCe {
    double ce_onehot = 0.0; // mean CE against the one-hot majority labels
    double ce_distr = 0.0;  // mean CE against the distributional labels
    long long inf_count = 0; // samples with a zero predicted probability at a
                             // supported class, excluded from the means
};

GeneralizationCe generalization_ce(std::span<const PredictionRecord> records);

struct ScoreReport {
    double oa = 0.0;
    double maa = 0.0;
    double waa = 0.0;
    double kappa = 0.0;
    double ce_onehot = 0.0;
    double ce_distr = 0.0;
    long long n = 0;
    long long inf_ce_count = 0;
};

ScoreReport score_report(std::span<const PredictionRecord> records);

std::string score_json(const ScoreReport& report);
std::string confusion_csv(const ConfusionMatrix& cm);

} // namespace votecal
