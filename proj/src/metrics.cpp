#include "polylab/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "polylab/error.hpp"

namespace polylab {

ConfusionMatrix confusion_matrix(std::span<const int> truth, std::span<const int> predicted, int class_count) {
    require(truth.size() == predicted.size(), ErrorCode::dimension_mismatch, "truth and prediction lengths differ");
    require(class_count >= 1, ErrorCode::invalid_argument, "class_count must be positive");
    ConfusionMatrix cm = ConfusionMatrix::Zero(class_count, class_count);
    for (std::size_t i = 0; i < truth.size(); ++i) {
        require(truth[i] >= 0 && truth[i] < class_count && predicted[i] >= 0 && predicted[i] < class_count,
                ErrorCode::invalid_argument, "class index out of range");
        ++cm(truth[i], predicted[i]);
    }
    return cm;
}

Kappa cohen_kappa(const ConfusionMatrix& cm) {
    require(cm.rows() == cm.cols() && cm.rows() > 0, ErrorCode::invalid_argument, "confusion matrix must be square");
    const Eigen::Index n = cm.sum();
    require(n >= 1, ErrorCode::empty_input, "confusion matrix is empty");
    // kappa = (p_o - p_c) / (1 - p_c), scaled by n^2 to stay in integers.
    const auto rows = cm.rowwise().sum();
    const auto cols = cm.colwise().sum();
    long double chance = 0;
    for (Eigen::Index k = 0; k < cm.rows(); ++k) chance += static_cast<long double>(rows(k)) * static_cast<long double>(cols(k));
    const long double nn = static_cast<long double>(n) * static_cast<long double>(n);
    const long double agree = static_cast<long double>(n) * static_cast<long double>(cm.trace());
    if (nn - chance <= 0) return {0.0, true};
    return {static_cast<double>((agree - chance) / (nn - chance)), false};
}

Kappa cohen_kappa(std::span<const int> truth, std::span<const int> predicted, int class_count) {
    return cohen_kappa(confusion_matrix(truth, predicted, class_count));
}

double CalibrationBins::ece() const {
    if (total == 0) return 0.0;
    double sum = 0.0;
    for (const auto& b : bins)
        if (b.count > 0)
            sum += static_cast<double>(b.count) / static_cast<double>(total) * std::abs(b.accuracy - b.mean_confidence);
    return sum;
}

int confidence_bin(double confidence, int bin_count) {
    const auto b = static_cast<int>(std::floor(confidence * bin_count));
    return std::clamp(b, 0, bin_count - 1);
}

std::vector<int> argmax_rows(const Eigen::MatrixXd& probs) {
    std::vector<int> out(static_cast<std::size_t>(probs.rows()));
    for (Eigen::Index r = 0; r < probs.rows(); ++r) {
        Eigen::Index best = 0;
        for (Eigen::Index k = 1; k < probs.cols(); ++k)
            if (probs(r, k) > probs(r, best)) best = k;
        out[static_cast<std::size_t>(r)] = static_cast<int>(best);
    }
    return out;
}

CalibrationBins calibration_bins(const Eigen::MatrixXd& probs, std::span<const int> truth, int bin_count) {
    require(bin_count >= 1, ErrorCode::invalid_argument, "bin count must be positive");
    require(static_cast<std::size_t>(probs.rows()) == truth.size(), ErrorCode::dimension_mismatch,
            "probability rows and truth lengths differ");
    require(probs.rows() >= 1, ErrorCode::empty_input, "no predictions");
    CalibrationBins out;
    out.bins.resize(static_cast<std::size_t>(bin_count));
    std::vector<double> conf_sum(out.bins.size(), 0.0);
    std::vector<Eigen::Index> correct(out.bins.size(), 0);
    const auto predicted = argmax_rows(probs);
    for (Eigen::Index r = 0; r < probs.rows(); ++r) {
        const double row_sum = probs.row(r).sum();
        require(std::abs(row_sum - 1.0) <= 1e-9 && (probs.row(r).array() >= 0.0).all(), ErrorCode::not_normalized,
                "probability row " + std::to_string(r) + " is not normalized");
        const double conf = probs(r, predicted[static_cast<std::size_t>(r)]);
        const auto b = static_cast<std::size_t>(confidence_bin(conf, bin_count));
        ++out.bins[b].count;
        conf_sum[b] += conf;
        if (predicted[static_cast<std::size_t>(r)] == truth[static_cast<std::size_t>(r)]) ++correct[b];
    }
    for (std::size_t b = 0; b < out.bins.size(); ++b) {
        if (out.bins[b].count == 0) continue;
        const auto c = static_cast<double>(out.bins[b].count);
        out.bins[b].accuracy = static_cast<double>(correct[b]) / c;
        out.bins[b].mean_confidence = conf_sum[b] / c;
    }
    out.total = probs.rows();
    return out;
}

double ece(const Eigen::MatrixXd& probs, std::span<const int> truth, int bin_count) {
    return calibration_bins(probs, truth, bin_count).ece();
}

double accuracy(std::span<const int> predicted, std::span<const int> truth) {
    require(predicted.size() == truth.size(), ErrorCode::dimension_mismatch, "prediction and truth lengths differ");
    require(!truth.empty(), ErrorCode::empty_input, "no predictions");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i] ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(truth.size());
}

} // namespace polylab
