#include "votecal/calibration.hpp"

#include "votecal/common.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace votecal {

PredictionRecord PredictionRecord::make(std::string sample_id, ClassDistribution pred,
                                        int true_class, ClassDistribution true_dist) {
    if (!pred.is_valid()) {
        throw Error::input("prediction for sample '" + sample_id + "' is not on the simplex");
    }
    if (true_class < 1 || true_class > static_cast<int>(pred.size())) {
        throw Error::input("true class " + std::to_string(true_class) + " for sample '" +
                           sample_id + "' outside 1.." + std::to_string(pred.size()));
    }
    PredictionRecord record;
    record.sample_id = std::move(sample_id);
    record.confidence = pred.max();
    record.predicted_class = pred.argmax();
    record.pred_dist = std::move(pred);
    record.true_class = true_class;
    record.true_dist = std::move(true_dist);
    return record;
}

int bin_index_of(double value, int m_bins) {
    const double m = static_cast<double>(m_bins);
    int index = static_cast<int>(std::ceil(value * m));
    index = std::clamp(index, 1, m_bins);
    // settle float disagreements against the interval bounds themselves
    while (index > 1 && value <= static_cast<double>(index - 1) / m) --index;
    while (index < m_bins && value > static_cast<double>(index) / m) ++index;
    return index;
}

std::vector<BinStatistics> assign_bins(std::span<const PredictionRecord> records, int m_bins) {
    if (m_bins < 1) throw Error::input("assign_bins: bin count must be positive");
    if (records.empty()) throw Error::input("assign_bins: empty record set");

    std::vector<BinStatistics> bins(static_cast<std::size_t>(m_bins));
    std::vector<long long> correct(static_cast<std::size_t>(m_bins), 0);
    for (int m = 1; m <= m_bins; ++m) {
        BinStatistics& bin = bins[static_cast<std::size_t>(m - 1)];
        bin.bin_index = m;
        bin.lower = static_cast<double>(m - 1) / m_bins;
        bin.upper = static_cast<double>(m) / m_bins;
    }
    for (const PredictionRecord& record : records) {
        if (!(record.confidence > 0.0 && record.confidence <= 1.0)) {
            throw Error::input("confidence " + format_double(record.confidence) + " for sample '" +
                               record.sample_id + "' outside (0,1]");
        }
        BinStatistics& bin =
            bins[static_cast<std::size_t>(bin_index_of(record.confidence, m_bins) - 1)];
        ++bin.count;
        bin.mean_confidence += record.confidence;
        if (record.predicted_class == record.true_class) {
            ++correct[static_cast<std::size_t>(bin.bin_index - 1)];
        }
    }
    for (BinStatistics& bin : bins) {
        if (bin.count == 0) {
            bin.mean_accuracy = std::numeric_limits<double>::quiet_NaN();
            bin.mean_confidence = std::numeric_limits<double>::quiet_NaN();
        } else {
            bin.mean_accuracy = static_cast<double>(correct[static_cast<std::size_t>(
                                    bin.bin_index - 1)]) /
                                static_cast<double>(bin.count);
            bin.mean_confidence /= static_cast<double>(bin.count);
        }
    }
    return bins;
}

double ece(std::span<const BinStatistics> bins) {
    long long n = 0;
    for (const BinStatistics& bin : bins) n += bin.count;
    if (n == 0) return 0.0;
    double error = 0.0;
    for (const BinStatistics& bin : bins) {
        if (bin.empty()) continue;
        error += static_cast<double>(bin.count) / static_cast<double>(n) *
                 std::fabs(bin.mean_accuracy - bin.mean_confidence);
    }
    return error;
}

double mce(std::span<const BinStatistics> bins) {
    double worst = 0.0;
    for (const BinStatistics& bin : bins) {
        if (bin.empty()) continue;
        worst = std::max(worst, std::fabs(bin.mean_accuracy - bin.mean_confidence));
    }
    return worst;
}

double sce(std::span<const PredictionRecord> records, int m_bins, int class_count) {
    if (m_bins < 1) throw Error::input("sce: bin count must be positive");
    if (records.empty()) throw Error::input("sce: empty record set");
    const double n = static_cast<double>(records.size());

    double total = 0.0;
    std::vector<long long> count(static_cast<std::size_t>(m_bins));
    std::vector<long long> hits(static_cast<std::size_t>(m_bins));
    std::vector<double> prob_sum(static_cast<std::size_t>(m_bins));
    for (int k = 1; k <= class_count; ++k) {
        std::fill(count.begin(), count.end(), 0);
        std::fill(hits.begin(), hits.end(), 0);
        std::fill(prob_sum.begin(), prob_sum.end(), 0.0);
        for (const PredictionRecord& record : records) {
            const double p = record.pred_dist.probs[static_cast<std::size_t>(k - 1)];
            const std::size_t m = static_cast<std::size_t>(bin_index_of(p, m_bins) - 1);
            ++count[m];
            prob_sum[m] += p;
            if (record.true_class == k) ++hits[m];
        }
        for (std::size_t m = 0; m < count.size(); ++m) {
            if (count[m] == 0) continue;
            const double acc = static_cast<double>(hits[m]) / static_cast<double>(count[m]);
            const double conf = prob_sum[m] / static_cast<double>(count[m]);
            total += static_cast<double>(count[m]) / n * std::fabs(acc - conf);
        }
    }
    return total / static_cast<double>(class_count);
}

ReliabilityReport reliability_data(std::span<const BinStatistics> bins,
                                   std::span<const PredictionRecord> records) {
    ReliabilityReport report;
    report.bins.assign(bins.begin(), bins.end());
    report.n = static_cast<long long>(records.size());
    long long correct = 0;
    double confidence_sum = 0.0;
    for (const PredictionRecord& record : records) {
        if (record.predicted_class == record.true_class) ++correct;
        confidence_sum += record.confidence;
    }
    if (!records.empty()) {
        report.overall_accuracy = static_cast<double>(correct) / static_cast<double>(report.n);
        report.mean_confidence = confidence_sum / static_cast<double>(report.n);
    }
    return report;
}

std::string reliability_csv(const ReliabilityReport& report) {
    std::string out = "bin,lower,upper,count,accuracy,confidence,gap\n";
    for (const BinStatistics& bin : report.bins) {
        if (bin.empty()) continue;
        out += std::to_string(bin.bin_index) + "," + format_double(bin.lower) + "," +
               format_double(bin.upper) + "," + std::to_string(bin.count) + "," +
               format_double(bin.mean_accuracy) + "," + format_double(bin.mean_confidence) + "," +
               format_double(bin.mean_accuracy - bin.mean_confidence) + "\n";
    }
    out += "summary,,," + std::to_string(report.n) + "," + format_double(report.overall_accuracy) +
           "," + format_double(report.mean_confidence) + "," +
           format_double(report.overall_accuracy - report.mean_confidence) + "\n";
    return out;
}

std::string reliability_svg(const ReliabilityReport& report) {
    const int width = 480;
    const int height = 480;
    const int margin = 48;
    const double plot = static_cast<double>(width - 2 * margin);
    auto x_of = [&](double v) { return margin + v * plot; };
    auto y_of = [&](double v) { return height - margin - v * plot; };

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
    svg << "  <rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
    // gap shading between the accuracy bar and the diagonal
    for (const BinStatistics& bin : report.bins) {
        if (bin.empty()) continue;
        const double x0 = x_of(bin.lower);
        const double w = x_of(bin.upper) - x0;
        const double top = std::max(bin.mean_accuracy, bin.mean_confidence);
        const double bottom = std::min(bin.mean_accuracy, bin.mean_confidence);
        svg << "  <rect x=\"" << x0 << "\" y=\"" << y_of(top) << "\" width=\"" << w
            << "\" height=\"" << (y_of(bottom) - y_of(top))
            << "\" fill=\"#d62728\" fill-opacity=\"0.25\"/>\n";
    }
    for (const BinStatistics& bin : report.bins) {
        if (bin.empty()) continue;
        const double x0 = x_of(bin.lower);
        const double w = x_of(bin.upper) - x0;
        svg << "  <rect x=\"" << x0 << "\" y=\"" << y_of(bin.mean_accuracy) << "\" width=\"" << w
            << "\" height=\"" << (y_of(0.0) - y_of(bin.mean_accuracy))
            << "\" fill=\"#1f77b4\" fill-opacity=\"0.8\" stroke=\"#10507e\"/>\n";
    }
    svg << "  <line x1=\"" << x_of(0.0) << "\" y1=\"" << y_of(0.0) << "\" x2=\"" << x_of(1.0)
        << "\" y2=\"" << y_of(1.0) << "\" stroke=\"#444\" stroke-dasharray=\"6,4\"/>\n";
    svg << "  <line x1=\"" << margin << "\" y1=\"" << y_of(0.0) << "\" x2=\"" << (width - margin)
        << "\" y2=\"" << y_of(0.0) << "\" stroke=\"black\"/>\n";
    svg << "  <line x1=\"" << margin << "\" y1=\"" << y_of(0.0) << "\" x2=\"" << margin
        << "\" y2=\"" << y_of(1.0) << "\" stroke=\"black\"/>\n";
    svg << "  <text x=\"" << (width / 2) << "\" y=\"" << (height - 12)
        << "\" text-anchor=\"middle\" font-size=\"13\">confidence</text>\n";
    svg << "  <text x=\"14\" y=\"" << (height / 2)
        << "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 14 "
        << (height / 2) << ")\">accuracy</text>\n";
    svg << "  <text x=\"" << margin << "\" y=\"24\" font-size=\"12\">overall accuracy "
        << format_double(report.overall_accuracy) << ", mean confidence "
        << format_double(report.mean_confidence) << ", n " << report.n << "</text>\n";
    svg << "</svg>\n";
    return svg.str();
}

ClassDistribution apply_temperature(const LogitVector& logits, Temperature t) {
    if (!(t.t > 0.0) || !std::isfinite(t.t)) {
        throw Error::input("apply_temperature: temperature must be positive and finite");
    }
    LogitVector scaled(logits.size());
    for (std::size_t k = 0; k < logits.size(); ++k) scaled[k] = logits[k] / t.t;
    return softmax(scaled);
}

double temperature_nll(std::span<const LogitVector> logits, std::span<const int> true_classes,
                       Temperature t) {
    if (logits.empty() || logits.size() != true_classes.size()) {
        throw Error::input("temperature_nll: logits and labels must be non-empty and aligned");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        const int y = true_classes[i];
        if (y < 1 || y > static_cast<int>(logits[i].size())) {
            throw Error::input("temperature_nll: label " + std::to_string(y) + " out of range");
        }
        ClassDistribution p = apply_temperature(logits[i], t);
        total -= std::log(p.probs[static_cast<std::size_t>(y - 1)]);
    }
    return total / static_cast<double>(logits.size());
}

Temperature fit_temperature(std::span<const LogitVector> logits,
                            std::span<const int> true_classes, const FitConfig& config) {
    const double nll_at_one = temperature_nll(logits, true_classes, Temperature{1.0});
    if (!std::isfinite(nll_at_one)) {
        throw Error::input("fit_temperature: NLL at T=1 is not finite");
    }

    // descend on u = log T; dNLL/du = mean(z_y - E_p[z]) / T
    const double u_min = std::log(config.t_min);
    const double u_max = std::log(config.t_max);
    double u = 0.0;
    for (int iteration = 0; iteration < config.max_iterations; ++iteration) {
        const double t = std::exp(u);
        double grad = 0.0;
        for (std::size_t i = 0; i < logits.size(); ++i) {
            ClassDistribution p = apply_temperature(logits[i], Temperature{t});
            double expected = 0.0;
            for (std::size_t k = 0; k < p.size(); ++k) expected += p.probs[k] * logits[i][k];
            grad += logits[i][static_cast<std::size_t>(true_classes[i] - 1)] - expected;
        }
        grad /= static_cast<double>(logits.size()) * t;
        if (std::fabs(grad) < 1e-10) break;
        u = std::clamp(u - config.learning_rate * grad, u_min, u_max);
    }

    const double fitted = std::clamp(std::exp(u), config.t_min, config.t_max);
    const double nll_fitted = temperature_nll(logits, true_classes, Temperature{fitted});
    return nll_fitted <= nll_at_one ? Temperature{fitted} : Temperature{1.0};
}

CalibrationMetrics calibration_metrics(std::span<const PredictionRecord> records, int m_bins,
                                       int class_count) {
    std::vector<BinStatistics> bins = assign_bins(records, m_bins);
    CalibrationMetrics metrics;
    metrics.bins = m_bins;
    metrics.n = static_cast<long long>(records.size());
    metrics.ece = ece(bins);
    metrics.mce = mce(bins);
    metrics.sce = sce(records, m_bins, class_count);
    return metrics;
}

std::vector<CalibrationMetrics> calibration_sweep(std::span<const PredictionRecord> records,
                                                  std::span<const int> bin_counts,
                                                  int class_count) {
    std::vector<CalibrationMetrics> sweep;
    sweep.reserve(bin_counts.size());
    for (int m_bins : bin_counts) {
        sweep.push_back(calibration_metrics(records, m_bins, class_count));
    }
    return sweep;
}

std::string calibration_json(std::span<const CalibrationMetrics> sweep) {
    nlohmann::json doc = nlohmann::json::array();
    for (const CalibrationMetrics& metrics : sweep) {
        doc.push_back({{"bins", metrics.bins},
                       {"n", metrics.n},
                       {"ece", metrics.ece},
                       {"mce", metrics.mce},
                       {"sce", metrics.sce},
                       {"ece_pct", 100.0 * metrics.ece},
                       {"mce_pct", 100.0 * metrics.mce},
                       {"sce_pct", 100.0 * metrics.sce}});
    }
    return doc.dump(2) + "\n";
}

} // namespace votecal
