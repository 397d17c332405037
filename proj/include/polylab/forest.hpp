#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "polylab/data.hpp"

namespace polylab {

/// One node of a flat-stored tree. Leaves have feature < 0.
struct TreeNode {
    int feature = -1;
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    Eigen::VectorXd posterior;
    Eigen::Index count = 0;
    int cell_id = -1;

    bool is_leaf() const { return feature < 0; }
};

/// Axis-aligned binary tree; node 0 is the root, nodes are in preorder.
/// Points with x[feature] <= threshold go left.
class Tree {
public:
    std::vector<TreeNode> nodes;

    const TreeNode& root() const { return nodes.front(); }

    template <class Derived>
    int leaf_index(const Eigen::MatrixBase<Derived>& x) const {
        int i = 0;
        while (!nodes[static_cast<std::size_t>(i)].is_leaf()) {
            const auto& n = nodes[static_cast<std::size_t>(i)];
            i = x(n.feature) <= n.threshold ? n.left : n.right;
        }
        return i;
    }

    template <class Derived>
    const TreeNode& leaf(const Eigen::MatrixBase<Derived>& x) const {
        return nodes[static_cast<std::size_t>(leaf_index(x))];
    }

    /// Branch directions (0 = left, 1 = right) from the root to x's leaf.
    template <class Derived>
    std::vector<std::uint8_t> path(const Eigen::MatrixBase<Derived>& x) const {
        std::vector<std::uint8_t> dirs;
        int i = 0;
        while (!nodes[static_cast<std::size_t>(i)].is_leaf()) {
            const auto& n = nodes[static_cast<std::size_t>(i)];
            const bool left = x(n.feature) <= n.threshold;
            dirs.push_back(left ? 0 : 1);
            i = left ? n.left : n.right;
        }
        return dirs;
    }

    int depth() const;
    int leaf_count() const;

    /// Re-derives cell ids as the preorder leaf ordinal.
    void number_leaves();
};

/// Axis-aligned box of one leaf, with the branch directions leading to it.
struct LeafBox {
    int node = -1;
    Eigen::VectorXd lower;
    Eigen::VectorXd upper;
    std::vector<std::uint8_t> directions;
};

/// Leaf cells of `tree` clipped to [lower, upper]; bounds may be infinite.
/// Leaves whose box is empty after clipping are dropped.
std::vector<LeafBox> leaf_boxes(const Tree& tree, const Eigen::VectorXd& lower, const Eigen::VectorXd& upper);

struct ForestOptions {
    bool bootstrap = true;
    int jobs = 1;
};

struct ForestModel {
    std::vector<Tree> trees;
    int tree_count = 0;
    int max_features = 0;
    std::vector<std::uint64_t> bootstrap_seeds;
    Eigen::Index dimension = 0;
    int class_count = 0;
    bool bootstrap = true;

    int depth() const;
};

/// Result of the best-split search at one node.
struct SplitChoice {
    int feature = -1;
    double threshold = 0.0;
    double impurity = 0.0;  ///< weighted child Gini impurity
    bool found = false;
};

double gini(std::span<const Eigen::Index> class_counts, Eigen::Index total);

/// Best axis-aligned split of `samples` over `features`: lowest weighted Gini,
/// ties to the lowest feature index then the lowest threshold. Only splits whose
/// impurity is strictly below `parent_impurity` count.
SplitChoice best_split(const Eigen::MatrixXd& features, const Labels& labels, int class_count,
                       std::span<const Eigen::Index> samples, std::span<const int> candidate_features,
                       double parent_impurity);

Tree train_tree(const Dataset& ds, int max_features, std::uint64_t seed);

/// Grows a tree on the (possibly repeated) rows `samples` of `features`.
Tree train_tree(const Eigen::MatrixXd& features, const Labels& labels, int class_count,
                std::span<const Eigen::Index> samples, int max_features, std::uint64_t seed);

ForestModel train_forest(const Dataset& ds, int tree_count, int max_features, std::uint64_t seed,
                         const ForestOptions& options = {});

Eigen::VectorXd forest_posterior(const ForestModel& m, const Eigen::Ref<const Eigen::VectorXd>& x);

/// Row-wise posteriors for every row of `x`.
Eigen::MatrixXd forest_posterior_batch(const ForestModel& m, const Eigen::MatrixXd& x);

int forest_predict(const ForestModel& m, const Eigen::Ref<const Eigen::VectorXd>& x);

/// Argmax with ties toward the smaller index.
template <class Derived>
int argmax_class(const Eigen::MatrixBase<Derived>& p) {
    int best = 0;
    for (Eigen::Index k = 1; k < p.size(); ++k)
        if (p(k) > p(best)) best = static_cast<int>(k);
    return best;
}

/// {sqrt(d), d/4, d/3, d/1.5, d}, rounded half up, floored at 1, deduplicated.
std::vector<int> max_features_grid(Eigen::Index d);

/// Accepts "sqrt", "quarter", "third", "two-thirds", "all" or a positive integer.
int resolve_max_features(const std::string& spec, Eigen::Index d);

nlohmann::json to_json(const ForestModel& m);
ForestModel forest_from_json(const nlohmann::json& j);

} // namespace polylab
