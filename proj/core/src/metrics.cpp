#include "votecal/metrics.hpp"

#include "votecal/common.hpp"

#include <json.hpp>

#include <cmath>

namespace votecal {

long long& ConfusionMatrix::at(int true_class, int pred_class) {
    return cells[static_cast<std::size_t>(true_class - 1) * class_count +
                 static_cast<std::size_t>(pred_class - 1)];
}

long long ConfusionMatrix::at(int true_class, int pred_class) const {
    return cells[static_cast<std::size_t>(true_class - 1) * class_count +
                 static_cast<std::size_t>(pred_class - 1)];
}

long long ConfusionMatrix::total() const {
    long long sum = 0;
    for (long long c : cells) sum += c;
    return sum;
}

long long ConfusionMatrix::trace() const {
    long long sum = 0;
    for (int k = 1; k <= class_count; ++k) sum += at(k, k);
    return sum;
}

long long ConfusionMatrix::row_sum(int true_class) const {
    long long sum = 0;
    for (int c = 1; c <= class_count; ++c) sum += at(true_class, c);
    return sum;
}

long long ConfusionMatrix::col_sum(int pred_class) const {
    long long sum = 0;
    for (int r = 1; r <= class_count; ++r) sum += at(r, pred_class);
    return sum;
}

ConfusionMatrix confusion(std::span<const PredictionRecord> records) {
    if (records.empty()) throw Error::input("confusion: empty record set");
    ConfusionMatrix cm;
    cm.class_count = static_cast<int>(records[0].pred_dist.size());
    cm.cells.assign(static_cast<std::size_t>(cm.class_count) * cm.class_count, 0);
    for (const PredictionRecord& record : records) {
        ++cm.at(record.true_class, record.predicted_class);
    }
    return cm;
}

AccuracySuite accuracy_suite(const ConfusionMatrix& cm) {
    const long long n = cm.total();
    if (n == 0) throw Error::input("accuracy_suite: empty confusion matrix");

    AccuracySuite suite;
    suite.oa = static_cast<double>(cm.trace()) / static_cast<double>(n);

    double recall_sum = 0.0;
    int supported = 0;
    double weighted_sum = 0.0;
    for (int k = 1; k <= cm.class_count; ++k) {
        const long long support = cm.row_sum(k);
        if (support == 0) continue;
        ++supported;
        recall_sum += static_cast<double>(cm.at(k, k)) / static_cast<double>(support);
        // binary accuracy for class k: true positives plus true negatives
        const long long tp = cm.at(k, k);
        const long long tn = n - support - cm.col_sum(k) + tp;
        weighted_sum += static_cast<double>(support) * static_cast<double>(tp + tn) /
                        static_cast<double>(n);
    }
    suite.maa = recall_sum / static_cast<double>(supported);
    suite.waa = weighted_sum / static_cast<double>(n);
    return suite;
}

double kappa(const ConfusionMatrix& cm) {
    const long long n = cm.total();
    if (n < 1) throw Error::input("kappa: empty confusion matrix");
    const double dn = static_cast<double>(n);
    const double p_observed = static_cast<double>(cm.trace()) / dn;
    double p_expected = 0.0;
    for (int k = 1; k <= cm.class_count; ++k) {
        p_expected += static_cast<double>(cm.row_sum(k)) * static_cast<double>(cm.col_sum(k)) /
                      (dn * dn);
    }
    if (p_expected >= 1.0) return 0.0; // all mass in a single cell
    return (p_observed - p_expected) / (1.0 - p_expected);
}

GeneralizationCe generalization_ce(std::span<const PredictionRecord> records) {
    if (records.empty()) throw Error::input("generalization_ce: empty record set");
    GeneralizationCe result;
    double onehot_sum = 0.0;
    double distr_sum = 0.0;
    long long finite = 0;
    for (const PredictionRecord& record : records) {
        const ClassDistribution onehot =
            ClassDistribution::one_hot(record.true_class, static_cast<int>(record.pred_dist.size()));
        const double ce_onehot = loss_ce(onehot, record.pred_dist);
        const double ce_distr = loss_ce(record.true_dist, record.pred_dist);
        if (!std::isfinite(ce_onehot) || !std::isfinite(ce_distr)) {
            ++result.inf_count;
            continue;
        }
        onehot_sum += ce_onehot;
        distr_sum += ce_distr;
        ++finite;
    }
    if (finite > 0) {
        result.ce_onehot = onehot_sum / static_cast<double>(finite);
        result.ce_distr = distr_sum / static_cast<double>(finite);
    } else {
        result.ce_onehot = std::numeric_limits<double>::infinity();
        result.ce_distr = std::numeric_limits<double>::infinity();
    }
    return result;
}

ScoreReport score_report(std::span<const PredictionRecord> records) {
    const ConfusionMatrix cm = confusion(records);
    const AccuracySuite suite = accuracy_suite(cm);
    const GeneralizationCe ce = generalization_ce(records);
    ScoreReport report;
    report.oa = suite.oa;
    report.maa = suite.maa;
    report.waa = suite.waa;
    report.kappa = votecal::kappa(cm);
    report.ce_onehot = ce.ce_onehot;
    report.ce_distr = ce.ce_distr;
    report.n = static_cast<long long>(records.size());
    report.inf_ce_count = ce.inf_count;
    return report;
}

std::string score_json(const ScoreReport& report) {
    nlohmann::json doc = {{"oa", report.oa},
                          {"maa", report.maa},
                          {"waa", report.waa},
                          {"kappa", report.kappa},
                          {"ce_onehot", report.ce_onehot},
                          {"ce_distr", report.ce_distr},
                          {"n", report.n},
                          {"inf_ce_count", report.inf_ce_count}};
    return doc.dump(2) + "\n";
}

std::string confusion_csv(const ConfusionMatrix& cm) {
    std::string out = "true\\pred";
    for (int c = 1; c <= cm.class_count; ++c) out += "," + std::to_string(c);
    out += "\n";
    for (int r = 1; r <= cm.class_count; ++r) {
        out += std::to_string(r);
        for (int c = 1; c <= cm.class_count; ++c) out += "," + std::to_string(cm.at(r, c));
        out += "\n";
    }
    return out;
}

} // namespace votecal
