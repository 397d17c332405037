#pragma once

#include <Eigen/Dense>
#include <chrono>
#include <span>
#include <type_traits>
#include <utility>
#include <vector>

namespace polylab {

/// Rows are the true class, columns the predicted class.
using ConfusionMatrix = Eigen::Matrix<Eigen::Index, Eigen::Dynamic, Eigen::Dynamic>;

ConfusionMatrix confusion_matrix(std::span<const int> truth, std::span<const int> predicted, int class_count);

struct Kappa {
    double value = 0.0;
    /// Chance agreement was 1 (a single occupied cell); value is 0 by convention.
    bool degenerate = false;
};

Kappa cohen_kappa(const ConfusionMatrix& cm);
Kappa cohen_kappa(std::span<const int> truth, std::span<const int> predicted, int class_count);

struct CalibrationBin {
    Eigen::Index count = 0;
    double accuracy = 0.0;
    double mean_confidence = 0.0;
};

/// Equal-width confidence bins over [0, 1]; confidence is the max class probability.
struct CalibrationBins {
    std::vector<CalibrationBin> bins;
    Eigen::Index total = 0;

    double ece() const;
};

/// Bin index for a confidence value: interior edges go to the upper bin, 1.0 to the last.
int confidence_bin(double confidence, int bin_count);

CalibrationBins calibration_bins(const Eigen::MatrixXd& probs, std::span<const int> truth, int bin_count = 40);

double ece(const Eigen::MatrixXd& probs, std::span<const int> truth, int bin_count = 40);

double accuracy(std::span<const int> predicted, std::span<const int> truth);

/// Row-wise argmax, ties to the lowest class.
std::vector<int> argmax_rows(const Eigen::MatrixXd& probs);

/// Runs f and measures it on a monotonic clock. Returns seconds for void
/// callables, (result, seconds) otherwise.
template <class F>
auto timed(F&& f) {
    using clock = std::chrono::steady_clock;
    const auto start = clock::now();
    if constexpr (std::is_void_v<std::invoke_result_t<F>>) {
        std::forward<F>(f)();
        return std::chrono::duration<double>(clock::now() - start).count();
    } else {
        auto result = std::forward<F>(f)();
        const double seconds = std::chrono::duration<double>(clock::now() - start).count();
        return std::pair<decltype(result), double>(std::move(result), seconds);
    }
}

} // namespace polylab
