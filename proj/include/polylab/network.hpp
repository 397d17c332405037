#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "polylab/data.hpp"
#include "polylab/random.hpp"

namespace polylab {

/// Affine map inputs -> outputs; weights are (inputs x outputs) so a batch of
/// row vectors maps as X * weights + biases^T.
struct DenseLayer {
    Eigen::MatrixXd weights;
    Eigen::VectorXd biases;
};

/// Fully connected ReLU classifier. Every layer but the last is a hidden ReLU
/// layer; the last produces C logits for a softmax head.
struct NetworkModel {
    std::vector<DenseLayer> layers;
    Eigen::Index dimension = 0;
    int class_count = 0;

    int hidden_depth() const { return static_cast<int>(layers.size()) - 1; }
    /// {d, n_1, ..., n_L, C}
    std::vector<Eigen::Index> widths() const;
    void validate() const;
};

struct ForwardPass {
    Eigen::VectorXd logits;
    /// Per hidden layer, before and after the ReLU.
    std::vector<Eigen::VectorXd> pre_activations;
    std::vector<Eigen::VectorXd> activations;
};

ForwardPass forward(const NetworkModel& m, const Eigen::Ref<const Eigen::VectorXd>& x);

/// Batch logits, one row per input row.
Eigen::MatrixXd forward_logits(const NetworkModel& m, const Eigen::MatrixXd& x);

/// Batch hidden pre-activations for the first `layers` hidden layers.
std::vector<Eigen::MatrixXd> hidden_pre_activations(const NetworkModel& m, const Eigen::MatrixXd& x, int layers);

template <class Derived>
Eigen::VectorXd softmax(const Eigen::MatrixBase<Derived>& logits) {
    const Eigen::VectorXd shifted = (logits.array() - logits.maxCoeff()).matrix();
    const Eigen::VectorXd e = shifted.array().exp().matrix();
    return e / e.sum();
}

/// Row-wise softmax with max subtraction.
Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits);

Eigen::VectorXd predict_proba(const NetworkModel& m, const Eigen::Ref<const Eigen::VectorXd>& x);
Eigen::MatrixXd predict_proba_batch(const NetworkModel& m, const Eigen::MatrixXd& x);
int network_predict(const NetworkModel& m, const Eigen::Ref<const Eigen::VectorXd>& x);

/// Fan-in scaled uniform weights in +-sqrt(6 / fan_in), zero biases.
NetworkModel init_network(Eigen::Index dimension, std::span<const int> hidden, int class_count, std::uint64_t seed);

/// Mean cross-entropy of rows `x` plus l2 * sum(W^2) / 2 over all weight
/// matrices (biases are not penalized). Fills `grad` when non-null.
double loss_and_gradient(const NetworkModel& m, const Eigen::MatrixXd& x, std::span<const int> labels, double l2,
                         std::vector<DenseLayer>* grad);

struct TrainConfig {
    double learning_rate = 1e-3;
    double momentum = 0.9;
    int batch_size = 64;
    double l2 = 1e-4;
    int max_epochs = 200;
    int patience = 3;
    double validation_fraction = 0.1;
    std::uint64_t seed = 0;

    void validate() const;
    nlohmann::json to_json() const;
};

/// Patience-based stopping on a loss that should decrease.
class EarlyStopping {
public:
    explicit EarlyStopping(int patience) : patience_(patience) {}

    /// Records the loss of `epoch`; returns true when it is a new best.
    bool update(int epoch, double loss);
    bool should_stop() const { return stale_ >= patience_; }
    int best_epoch() const { return best_epoch_; }
    double best_loss() const { return best_; }

private:
    int patience_;
    int stale_ = 0;
    int best_epoch_ = 0;
    double best_ = std::numeric_limits<double>::infinity();
};

struct TrainReport {
    int epochs_run = 0;
    int best_epoch = 0;
    bool stopped_early = false;
    std::vector<double> validation_losses;
};

NetworkModel train_network(const Dataset& ds, std::span<const int> hidden, const TrainConfig& cfg,
                           TrainReport* report = nullptr);

struct SearchSpace {
    int width_min = 20;
    int width_max = 400;
    int depth_min = 1;
    int depth_max = 3;
    double l2_min = 1e-5;
    double l2_max = 1e-2;
    int draws = 20;

    void validate() const;
    nlohmann::json to_json() const;
};

struct SearchDraw {
    std::vector<int> hidden;
    double l2 = 0.0;
};

SearchDraw sample_draw(const SearchSpace& space, Rng& rng);

struct SearchEntry {
    SearchDraw draw;
    std::vector<double> fold_kappas;
    double score = -std::numeric_limits<double>::infinity();
    std::string error;
};

struct SearchResult {
    SearchDraw best;
    int best_index = -1;
    std::vector<SearchEntry> log;
};

using DrawScorer = std::function<SearchEntry(const SearchDraw&, int index)>;

/// Draws `space.draws` configurations from `seed`, scores each and returns the
/// highest score (first one on ties).
SearchResult search_configurations(const SearchSpace& space, std::uint64_t seed, const DrawScorer& scorer,
                                   int jobs = 1);

/// Scores draws by mean Cohen's kappa over stratified folds of `ds`; a diverged
/// draw scores -infinity.
SearchResult random_search(const Dataset& ds, const SearchSpace& space, const TrainConfig& base, int folds,
                           std::uint64_t seed, int jobs = 1);

nlohmann::json to_json(const NetworkModel& m);
NetworkModel network_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SearchResult& r);

} // namespace polylab
