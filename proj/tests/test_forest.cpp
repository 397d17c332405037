#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "polylab/data.hpp"
#include "polylab/error.hpp"
#include "polylab/forest.hpp"
#include "support.hpp"

using namespace polylab;

namespace {

Dataset line_data(std::vector<double> xs, std::vector<int> ys, int classes = 2) {
    Eigen::MatrixXd x(static_cast<Eigen::Index>(xs.size()), 1);
    for (std::size_t i = 0; i < xs.size(); ++i) x(static_cast<Eigen::Index>(i), 0) = xs[i];
    return test_support::make_dataset(x, ys, classes);
}

const Dataset& xor_train() {
    static const Dataset ds = gen_gaussian_xor(4096, 1, 0.5, 2024).first;
    return ds;
}

const Dataset& xor_test() {
    static const Dataset ds = gen_gaussian_xor(1, 1000, 0.5, 2025).second;
    return ds;
}

double weighted_gini(const Eigen::MatrixXd& x, const Labels& y, int classes, const std::vector<Eigen::Index>& rows,
                     int feature, double threshold) {
    std::vector<Eigen::Index> left(static_cast<std::size_t>(classes), 0), right = left;
    Eigen::Index nl = 0, nr = 0;
    for (auto r : rows) {
        const auto c = static_cast<std::size_t>(y[static_cast<std::size_t>(r)]);
        if (x(r, feature) <= threshold) {
            ++left[c];
            ++nl;
        } else {
            ++right[c];
            ++nr;
        }
    }
    auto g = [](const std::vector<Eigen::Index>& counts, Eigen::Index n) {
        double s = 1.0;
        for (auto c : counts) s -= (static_cast<double>(c) / n) * (static_cast<double>(c) / n);
        return s;
    };
    const double n = static_cast<double>(nl + nr);
    return (static_cast<double>(nl) * g(left, nl) + static_cast<double>(nr) * g(right, nr)) / n;
}

bool box_contains(const LeafBox& box, const Eigen::VectorXd& x) {
    for (Eigen::Index k = 0; k < x.size(); ++k)
        if (!(x(k) > box.lower(k) && x(k) <= box.upper(k))) return false;
    return true;
}

void check_tree_invariants(const Tree& t, const Dataset& ds) {
    for (const auto& n : t.nodes) {
        if (n.is_leaf()) {
            CHECK(n.count >= 1);
            CHECK(std::abs(n.posterior.sum() - 1.0) <= 1e-12);
        } else {
            const auto col = ds.features.col(n.feature);
            CHECK(col.minCoeff() < n.threshold);
            CHECK(col.maxCoeff() > n.threshold);
        }
    }
}

} // namespace

TEST_CASE("two-point stump splits at the midpoint") {
    const Dataset ds = line_data({0.0, 1.0}, {0, 1});
    const Tree t = train_tree(ds, 1, 1);
    REQUIRE(t.nodes.size() == 3);
    CHECK(t.root().feature == 0);
    CHECK(t.root().threshold == 0.5);
    const auto& left = t.nodes[static_cast<std::size_t>(t.root().left)];
    const auto& right = t.nodes[static_cast<std::size_t>(t.root().right)];
    CHECK(left.posterior(0) == 1.0);
    CHECK(left.posterior(1) == 0.0);
    CHECK(right.posterior(0) == 0.0);
    CHECK(right.posterior(1) == 1.0);
    CHECK(t.depth() == 1);
}

TEST_CASE("threshold ties route left") {
    const Dataset ds = line_data({0.0, 1.0}, {0, 1});
    const Tree t = train_tree(ds, 1, 1);
    Eigen::VectorXd x(1);
    x << 0.5;
    CHECK(t.leaf(x).posterior(0) == 1.0);
}

TEST_CASE("pure input gives a single one-hot leaf") {
    const Dataset ds = line_data({0.0, 1.0, 2.0}, {1, 1, 1});
    const Tree t = train_tree(ds, 1, 1);
    CHECK(t.nodes.size() == 1);
    CHECK(t.depth() == 0);
    CHECK(t.root().posterior(1) == 1.0);
}

TEST_CASE("identical points with different labels stay in one leaf") {
    const Dataset ds = line_data({1.0, 1.0, 1.0}, {0, 1, 1});
    const Tree t = train_tree(ds, 1, 1);
    CHECK(t.nodes.size() == 1);
    CHECK(t.root().posterior(0) == doctest::Approx(1.0 / 3.0));
    CHECK(t.root().count == 3);
}

TEST_CASE("tree training rejects bad arguments") {
    const Dataset ds = line_data({0.0, 1.0}, {0, 1});
    CHECK_THROWS_AS(train_tree(ds, 0, 1), Error);
    CHECK_THROWS_AS(train_tree(ds, 2, 1), Error);
    CHECK_THROWS_AS(train_forest(ds, 0, 1, 1), Error);
    std::vector<Eigen::Index> none;
    CHECK_THROWS_AS(train_tree(ds.features, ds.labels, 2, none, 1, 1), Error);
}

TEST_CASE("unlimited depth memorizes XOR") {
    const Dataset& ds = xor_train();
    const Tree t = train_tree(ds, 2, 5);
    check_tree_invariants(t, ds);
    int correct = 0;
    for (Eigen::Index i = 0; i < ds.size(); ++i) {
        const auto& leaf = t.leaf(ds.features.row(i).transpose());
        correct += argmax_class(leaf.posterior) == ds.labels[static_cast<std::size_t>(i)] ? 1 : 0;
    }
    CHECK(correct == ds.size());
    for (const auto& n : t.nodes)
        if (n.is_leaf()) CHECK(n.posterior.maxCoeff() == 1.0);
}

TEST_CASE("best split matches exhaustive Gini search on small data") {
    Rng rng(99);
    int splits_found = 0;
    for (int trial = 0; trial < 300; ++trial) {
        const auto n = static_cast<Eigen::Index>(rng.integer(2, 12));
        const auto d = static_cast<Eigen::Index>(rng.integer(1, 3));
        const int classes = static_cast<int>(rng.integer(2, 3));
        Eigen::MatrixXd x(n, d);
        Labels y(static_cast<std::size_t>(n));
        // Small integer grids force plenty of ties.
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index k = 0; k < d; ++k) x(i, k) = static_cast<double>(rng.integer(0, 4));
            y[static_cast<std::size_t>(i)] = static_cast<int>(rng.below(static_cast<std::uint64_t>(classes)));
        }
        std::vector<Eigen::Index> rows(static_cast<std::size_t>(n));
        std::iota(rows.begin(), rows.end(), Eigen::Index{0});
        std::vector<int> features(static_cast<std::size_t>(d));
        std::iota(features.begin(), features.end(), 0);

        std::vector<Eigen::Index> counts(static_cast<std::size_t>(classes), 0);
        for (int v : y) ++counts[static_cast<std::size_t>(v)];
        const double parent = gini(counts, n);

        double best = parent;
        for (int f = 0; f < d; ++f) {
            std::set<double> uniq(x.col(f).begin(), x.col(f).end());
            std::vector<double> u(uniq.begin(), uniq.end());
            for (std::size_t i = 1; i < u.size(); ++i)
                best = std::min(best, weighted_gini(x, y, classes, rows, f, 0.5 * (u[i - 1] + u[i])));
        }
        // First (feature, threshold) in lexicographic order reaching the minimum.
        int oracle_feature = -1;
        double oracle_threshold = 0.0;
        if (best < parent - 1e-12) {
            for (int f = 0; f < d && oracle_feature < 0; ++f) {
                std::set<double> uniq(x.col(f).begin(), x.col(f).end());
                std::vector<double> u(uniq.begin(), uniq.end());
                for (std::size_t i = 1; i < u.size(); ++i) {
                    const double t = 0.5 * (u[i - 1] + u[i]);
                    if (weighted_gini(x, y, classes, rows, f, t) <= best + 1e-12) {
                        oracle_feature = f;
                        oracle_threshold = t;
                        break;
                    }
                }
            }
        }

        const SplitChoice got = best_split(x, y, classes, rows, features, parent);
        CHECK(got.found == (oracle_feature >= 0));
        if (got.found && oracle_feature >= 0) {
            ++splits_found;
            CHECK(got.feature == oracle_feature);
            CHECK(got.threshold == oracle_threshold);
            CHECK(got.impurity == doctest::Approx(best).epsilon(1e-12));
        }
    }
    CHECK(splits_found > 100);
}

TEST_CASE("gini of class counts") {
    const std::vector<Eigen::Index> pure{4, 0}, even{2, 2}, three{1, 1, 1};
    CHECK(gini(pure, 4) == 0.0);
    CHECK(gini(even, 4) == doctest::Approx(0.5));
    CHECK(gini(three, 3) == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("leaf boxes partition the plane") {
    const Dataset& ds = xor_train();
    const ForestModel m = train_forest(ds, 5, 1, 3);
    const double inf = std::numeric_limits<double>::infinity();
    const Eigen::VectorXd lo = Eigen::VectorXd::Constant(2, -inf), hi = Eigen::VectorXd::Constant(2, inf);
    Rng rng(4);
    for (const Tree& t : m.trees) {
        const auto boxes = leaf_boxes(t, lo, hi);
        CHECK(static_cast<int>(boxes.size()) == t.leaf_count());
        for (int s = 0; s < 2000; ++s) {
            Eigen::VectorXd x(2);
            x << rng.uniform(-4, 4), rng.uniform(-4, 4);
            // Points on thresholds are included to exercise the left-closed convention.
            if (s % 10 == 0) x(0) = t.root().threshold;
            int hits = 0;
            int node = -1;
            for (const auto& b : boxes)
                if (box_contains(b, x)) {
                    ++hits;
                    node = b.node;
                }
            CHECK(hits == 1);
            CHECK(node == t.leaf_index(x));
            const auto dirs = t.path(x);
            for (const auto& b : boxes)
                if (b.node == node) CHECK(b.directions == dirs);
        }
    }
}

TEST_CASE("forest posterior averages leaf posteriors") {
    const Dataset& ds = xor_train();
    const ForestModel m = train_forest(ds, 20, 1, 8);
    Rng rng(5);
    for (int s = 0; s < 500; ++s) {
        Eigen::VectorXd x(2);
        x << rng.uniform(-3, 3), rng.uniform(-3, 3);
        Eigen::VectorXd mean = Eigen::VectorXd::Zero(2);
        for (const auto& t : m.trees) mean += t.leaf(x).posterior;
        mean /= static_cast<double>(m.trees.size());
        const Eigen::VectorXd p = forest_posterior(m, x);
        CHECK((p - mean).cwiseAbs().maxCoeff() <= 1e-12);
        CHECK(std::abs(p.sum() - 1.0) <= 1e-12);
    }
}

TEST_CASE("permuting tree order leaves the posterior unchanged") {
    const ForestModel m = train_forest(xor_train(), 15, 1, 9);
    ForestModel shuffled = m;
    Rng rng(6);
    rng.shuffle(std::span(shuffled.trees));
    const Eigen::MatrixXd pts = xor_test().features.topRows(200);
    const Eigen::MatrixXd a = forest_posterior_batch(m, pts), b = forest_posterior_batch(shuffled, pts);
    CHECK((a - b).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("two disagreeing trees average to one half") {
    ForestModel m;
    m.dimension = 1;
    m.class_count = 2;
    for (int c = 0; c < 2; ++c) {
        Tree t;
        TreeNode leaf;
        leaf.posterior = Eigen::VectorXd::Unit(2, c);
        leaf.count = 1;
        t.nodes.push_back(leaf);
        m.trees.push_back(t);
    }
    m.tree_count = 2;
    Eigen::VectorXd x(1);
    x << 3.0;
    const Eigen::VectorXd p = forest_posterior(m, x);
    CHECK(p(0) == 0.5);
    CHECK(p(1) == 0.5);
    CHECK(forest_predict(m, x) == 0);
    Eigen::VectorXd wrong(2);
    wrong << 1.0, 2.0;
    CHECK_THROWS_AS(forest_posterior(m, wrong), Error);
}

TEST_CASE("argmax tie-break goes to the smaller class") {
    Eigen::VectorXd p(2);
    p << 0.2, 0.8;
    CHECK(argmax_class(p) == 1);
    p << 0.5, 0.5;
    CHECK(argmax_class(p) == 0);
}

TEST_CASE("single tree without bootstrap equals train_tree") {
    const Dataset& ds = xor_train();
    ForestOptions opts;
    opts.bootstrap = false;
    const ForestModel m = train_forest(ds, 1, 2, 77, opts);
    const Tree t = train_tree(ds, 2, m.bootstrap_seeds[0]);
    ForestModel single = m;
    single.trees = {t};
    CHECK(to_json(single) == to_json(m));
}

TEST_CASE("memorized training points predict their own label") {
    const Dataset& ds = xor_train();
    ForestOptions opts;
    opts.bootstrap = false;
    const ForestModel m = train_forest(ds, 1, 2, 1, opts);
    for (Eigen::Index i = 0; i < 200; ++i)
        CHECK(forest_predict(m, ds.features.row(i).transpose()) == ds.labels[static_cast<std::size_t>(i)]);
}

TEST_CASE("forest training is seed deterministic and independent of jobs") {
    const Dataset& ds = xor_train();
    const auto a = to_json(train_forest(ds, 8, 1, 31));
    const auto b = to_json(train_forest(ds, 8, 1, 31));
    ForestOptions threaded;
    threaded.jobs = 3;
    const auto c = to_json(train_forest(ds, 8, 1, 31, threaded));
    const auto d = to_json(train_forest(ds, 8, 1, 32));
    CHECK(a == b);
    CHECK(a == c);
    CHECK(a != d);
}

TEST_CASE("forest json round-trips exactly") {
    const ForestModel m = train_forest(xor_train(), 4, 1, 12);
    const auto j = to_json(m);
    const ForestModel back = forest_from_json(nlohmann::json::parse(j.dump()));
    CHECK(to_json(back) == j);
    const Eigen::MatrixXd pts = xor_test().features;
    CHECK(forest_posterior_batch(back, pts) == forest_posterior_batch(m, pts));
}

TEST_CASE("max-features grid") {
    CHECK(max_features_grid(100) == std::vector<int>{10, 25, 33, 67, 100});
    CHECK(max_features_grid(2) == std::vector<int>{1, 2});
    CHECK(max_features_grid(1) == std::vector<int>{1});
    CHECK(resolve_max_features("sqrt", 64) == 8);
    CHECK(resolve_max_features("two-thirds", 100) == 67);
    CHECK(resolve_max_features("3", 4) == 3);
    CHECK_THROWS_AS(resolve_max_features("5", 4), Error);
    CHECK_THROWS_AS(resolve_max_features("half", 4), Error);
}

TEST_CASE("XOR forest approaches the Bayes accuracy") {
    const ForestModel m = train_forest(xor_train(), 100, 1, 17);
    const Dataset& test = xor_test();
    const auto preds = [&] {
        std::vector<int> p;
        const Eigen::MatrixXd probs = forest_posterior_batch(m, test.features);
        for (Eigen::Index i = 0; i < probs.rows(); ++i) p.push_back(argmax_class(probs.row(i)));
        return p;
    }();
    int correct = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) correct += preds[i] == test.labels[i] ? 1 : 0;
    const double acc = static_cast<double>(correct) / static_cast<double>(preds.size());
    CHECK(std::abs(acc - xor_bayes_accuracy(0.5)) <= 0.05);

    Eigen::VectorXd center(2);
    center << 1.0, 1.0;
    const double analytic = 1.0 - xor_posterior(1.0, 1.0, 0.5);
    CHECK(analytic > 0.99);
    const double estimate = forest_posterior(m, center)(0);
    CHECK(estimate > 0.9);
    CHECK(std::abs(estimate - analytic) <= 0.1);
}
