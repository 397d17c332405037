#pragma once

#include <Eigen/Dense>
#include <atomic>
#include <filesystem>
#include <string>
#include <unistd.h>
#include <vector>

#include "polylab/data.hpp"
#include "polylab/network.hpp"
#include "polylab/random.hpp"

namespace test_support {

inline std::filesystem::path source_dir() { return POLYLAB_SOURCE_DIR; }

inline std::filesystem::path data_file(const std::string& name) { return source_dir() / "data" / name; }

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "polylab") {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                (tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

/// Network with Gaussian weights and biases, for geometry tests.
inline polylab::NetworkModel random_network(int dimension, const std::vector<int>& hidden, int classes,
                                            polylab::Rng& rng, double bias_scale = 0.5) {
    polylab::NetworkModel m;
    m.dimension = dimension;
    m.class_count = classes;
    int in = dimension;
    std::vector<int> widths = hidden;
    widths.push_back(classes);
    for (int out : widths) {
        polylab::DenseLayer l;
        l.weights.resize(in, out);
        l.biases.resize(out);
        for (int i = 0; i < in; ++i)
            for (int j = 0; j < out; ++j) l.weights(i, j) = rng.normal();
        for (int j = 0; j < out; ++j) l.biases(j) = bias_scale * rng.normal();
        m.layers.push_back(std::move(l));
        in = out;
    }
    return m;
}

inline polylab::Dataset make_dataset(const Eigen::MatrixXd& x, const std::vector<int>& y, int classes) {
    polylab::Dataset ds;
    ds.features = x;
    ds.labels = y;
    ds.class_count = classes;
    ds.name = "fixture";
    return ds;
}

/// Two Gaussian blobs at (-2, 0) and (2, 0).
inline polylab::Dataset blobs(Eigen::Index n, double sigma, std::uint64_t seed) {
    polylab::Rng rng(seed);
    Eigen::MatrixXd x(n, 2);
    std::vector<int> y(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        const int c = static_cast<int>(i % 2);
        y[static_cast<std::size_t>(i)] = c;
        x(i, 0) = (c == 0 ? -2.0 : 2.0) + sigma * rng.normal();
        x(i, 1) = sigma * rng.normal();
    }
    return make_dataset(x, y, 2);
}

} // namespace test_support
