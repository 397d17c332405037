#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <span>
#include <variant>
#include <vector>

#include <json.hpp>

namespace polylab {

using Labels = std::vector<int>;

/// Feature matrix (one row per sample) with dense class labels 0..C-1.
struct Dataset {
    Eigen::MatrixXd features;
    Labels labels;
    int class_count = 0;
    std::string name;
    std::vector<std::string> feature_names;
    /// Original label text for each dense index, when ingested from a file.
    std::vector<std::string> class_names;

    Eigen::Index size() const { return features.rows(); }
    Eigen::Index dimension() const { return features.cols(); }

    /// Throws invalid_argument if any invariant is broken.
    void validate() const;

    std::vector<Eigen::Index> class_histogram() const;

    /// Rows selected by `indices`, in that order.
    Dataset subset(std::span<const Eigen::Index> indices) const;
};

nlohmann::json summary_json(const Dataset& ds);

struct FoldPlan {
    int fold_count = 5;
    std::vector<int> assignments;
    std::uint64_t seed = 0;

    std::vector<Eigen::Index> test_indices(int fold) const;
    std::vector<Eigen::Index> train_indices(int fold) const;
};

struct SampleSchedule {
    std::vector<Eigen::Index> sizes;
    int class_count = 0;
    Eigen::Index fold_size = 0;
    /// Set when fold_size <= 5 * class_count and the schedule collapsed.
    bool collapsed = false;
};

// Gaussian XOR: class 0 around (-1,-1),(1,1); class 1 around (1,-1),(-1,1).
std::pair<Dataset, Dataset> gen_gaussian_xor(Eigen::Index n_train, Eigen::Index n_test, double sigma,
                                             std::uint64_t seed);

/// P(Y = 1 | x) under the equal-weight four-Gaussian XOR mixture.
double xor_posterior(double x0, double x1, double sigma);

/// Bayes accuracy of the XOR mixture by midpoint quadrature on [-extent, extent]^2.
double xor_bayes_accuracy(double sigma, double step = 0.005, double extent = 4.0);

using ColumnRef = std::variant<std::string, int>;

Dataset load_csv(const std::filesystem::path& path, const ColumnRef& label_column);

/// Writes features then a trailing "label" column; labels use class_names when present.
void save_csv(const Dataset& ds, const std::filesystem::path& path);

Dataset downsample(const Dataset& ds, Eigen::Index cap, std::uint64_t seed);

SampleSchedule make_schedule(int class_count, Eigen::Index fold_size, int length = 8);

FoldPlan stratified_folds(const Dataset& ds, int k, std::uint64_t seed);

/// Round half up with a floor at one.
Eigen::Index round_count(double value);

/// Per-class index lists, each in ascending order.
std::vector<std::vector<Eigen::Index>> indices_by_class(const Labels& labels, int class_count);

/// Largest-remainder allocation of `total` slots proportional to `weights`;
/// ties go to the lower index.
std::vector<Eigen::Index> proportional_allocation(std::span<const Eigen::Index> weights,
                                                  Eigen::Index total);

/// Deterministic order of `indices` where every prefix is close to stratified:
/// classes are shuffled internally, then interleaved by fractional rank.
std::vector<Eigen::Index> stratified_order(const Labels& labels, int class_count,
                                           std::span<const Eigen::Index> indices,
                                           std::uint64_t seed);

} // namespace polylab
