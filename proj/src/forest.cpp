#include "polylab/forest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <thread>

#include "polylab/error.hpp"
#include "polylab/random.hpp"

namespace polylab {

namespace {

constexpr double impurity_tolerance = 1e-12;

int subtree_depth(const Tree& t, int node) {
    const auto& n = t.nodes[static_cast<std::size_t>(node)];
    if (n.is_leaf()) return 0;
    return 1 + std::max(subtree_depth(t, n.left), subtree_depth(t, n.right));
}

bool better(double imp, int f, double t, const SplitChoice& best) {
    if (!best.found) return true;
    if (imp < best.impurity - impurity_tolerance) return true;
    if (imp > best.impurity + impurity_tolerance) return false;
    return f < best.feature || (f == best.feature && t < best.threshold);
}

double midpoint(double a, double b) {
    const double t = 0.5 * (a + b);
    return (t >= b || t < a) ? a : t;
}

class Grower {
public:
    Grower(const Eigen::MatrixXd& x, const Labels& y, int class_count, int max_features, std::uint64_t seed)
        : x_(x), y_(y), class_count_(class_count), max_features_(max_features), rng_(seed),
          order_(static_cast<std::size_t>(x.cols())) {}

    Tree grow(std::span<const Eigen::Index> samples) {
        work_.assign(samples.begin(), samples.end());
        grow_node(0, work_.size());
        tree_.number_leaves();
        return std::move(tree_);
    }

private:
    int grow_node(std::size_t begin, std::size_t end) {
        const auto id = static_cast<int>(tree_.nodes.size());
        tree_.nodes.emplace_back();
        const auto n = static_cast<Eigen::Index>(end - begin);
        std::vector<Eigen::Index> counts(static_cast<std::size_t>(class_count_), 0);
        for (std::size_t i = begin; i < end; ++i) ++counts[static_cast<std::size_t>(y_[static_cast<std::size_t>(work_[i])])];
        const double parent = gini(counts, n);

        SplitChoice choice;
        if (parent > 0.0 && n >= 2) choice = choose(begin, end, parent);
        if (!choice.found) {
            auto& leaf = tree_.nodes[static_cast<std::size_t>(id)];
            leaf.posterior.resize(class_count_);
            for (int k = 0; k < class_count_; ++k)
                leaf.posterior(k) = static_cast<double>(counts[static_cast<std::size_t>(k)]) / static_cast<double>(n);
            leaf.count = n;
            return id;
        }

        const auto mid_it = std::partition(work_.begin() + static_cast<std::ptrdiff_t>(begin),
                                           work_.begin() + static_cast<std::ptrdiff_t>(end),
                                           [&](Eigen::Index i) { return x_(i, choice.feature) <= choice.threshold; });
        const auto mid = static_cast<std::size_t>(mid_it - work_.begin());
        const int left = grow_node(begin, mid);
        const int right = grow_node(mid, end);
        auto& node = tree_.nodes[static_cast<std::size_t>(id)];
        node.feature = choice.feature;
        node.threshold = choice.threshold;
        node.left = left;
        node.right = right;
        return id;
    }

    // Samples max_features features without replacement; when none of them
    // yields an impurity decrease, keeps drawing until one does or all are spent.
    SplitChoice choose(std::size_t begin, std::size_t end, double parent) {
        std::iota(order_.begin(), order_.end(), 0);
        rng_.shuffle(std::span(order_));
        const std::span<const Eigen::Index> samples(work_.data() + begin, end - begin);
        const std::span<const int> all(order_);
        SplitChoice c = best_split(x_, y_, class_count_, samples, all.first(static_cast<std::size_t>(max_features_)), parent);
        for (std::size_t k = static_cast<std::size_t>(max_features_); !c.found && k < order_.size(); ++k)
            c = best_split(x_, y_, class_count_, samples, all.subspan(k, 1), parent);
        return c;
    }

    const Eigen::MatrixXd& x_;
    const Labels& y_;
    int class_count_;
    int max_features_;
    Rng rng_;
    std::vector<int> order_;
    std::vector<Eigen::Index> work_;
    Tree tree_;
};

void node_to_json(const Tree& t, int id, nlohmann::json& out) {
    const auto& n = t.nodes[static_cast<std::size_t>(id)];
    if (n.is_leaf()) {
        out["posterior"] = std::vector<double>(n.posterior.data(), n.posterior.data() + n.posterior.size());
        out["count"] = n.count;
        return;
    }
    out["feature"] = n.feature;
    out["threshold"] = n.threshold;
    node_to_json(t, n.left, out["left"]);
    node_to_json(t, n.right, out["right"]);
}

int node_from_json(Tree& t, const nlohmann::json& j, int class_count) {
    const auto id = static_cast<int>(t.nodes.size());
    t.nodes.emplace_back();
    if (j.contains("posterior")) {
        const auto p = j.at("posterior").get<std::vector<double>>();
        require(static_cast<int>(p.size()) == class_count, ErrorCode::parse_error, "leaf posterior length mismatch");
        auto& leaf = t.nodes[static_cast<std::size_t>(id)];
        leaf.posterior = Eigen::Map<const Eigen::VectorXd>(p.data(), static_cast<Eigen::Index>(p.size()));
        leaf.count = j.at("count").get<Eigen::Index>();
        return id;
    }
    const int left = node_from_json(t, j.at("left"), class_count);
    const int right = node_from_json(t, j.at("right"), class_count);
    auto& node = t.nodes[static_cast<std::size_t>(id)];
    node.feature = j.at("feature").get<int>();
    node.threshold = j.at("threshold").get<double>();
    node.left = left;
    node.right = right;
    return id;
}

void check_query(const ForestModel& m, Eigen::Index size) {
    require(size == m.dimension, ErrorCode::dimension_mismatch,
            "expected " + std::to_string(m.dimension) + " features, got " + std::to_string(size));
}

} // namespace

int Tree::depth() const { return nodes.empty() ? 0 : subtree_depth(*this, 0); }

int Tree::leaf_count() const {
    return static_cast<int>(std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return n.is_leaf(); }));
}

void Tree::number_leaves() {
    int next = 0;
    for (auto& n : nodes)
        if (n.is_leaf()) n.cell_id = next++;
}

int ForestModel::depth() const {
    int d = 0;
    for (const auto& t : trees) d = std::max(d, t.depth());
    return d;
}

std::vector<LeafBox> leaf_boxes(const Tree& tree, const Eigen::VectorXd& lower, const Eigen::VectorXd& upper) {
    std::vector<LeafBox> out;
    std::function<void(int, LeafBox&)> walk = [&](int id, LeafBox& box) {
        for (Eigen::Index k = 0; k < box.lower.size(); ++k)
            if (!(box.lower(k) < box.upper(k))) return;
        const auto& n = tree.nodes[static_cast<std::size_t>(id)];
        if (n.is_leaf()) {
            box.node = id;
            out.push_back(box);
            return;
        }
        LeafBox left = box;
        left.upper(n.feature) = std::min(left.upper(n.feature), n.threshold);
        left.directions.push_back(0);
        walk(n.left, left);
        LeafBox right = box;
        right.lower(n.feature) = std::max(right.lower(n.feature), n.threshold);
        right.directions.push_back(1);
        walk(n.right, right);
    };
    LeafBox start{-1, lower, upper, {}};
    walk(0, start);
    return out;
}

double gini(std::span<const Eigen::Index> class_counts, Eigen::Index total) {
    if (total <= 0) return 0.0;
    double sum_sq = 0.0;
    for (Eigen::Index c : class_counts) sum_sq += static_cast<double>(c) * static_cast<double>(c);
    const auto n = static_cast<double>(total);
    return 1.0 - sum_sq / (n * n);
}

SplitChoice best_split(const Eigen::MatrixXd& features, const Labels& labels, int class_count,
                       std::span<const Eigen::Index> samples, std::span<const int> candidate_features,
                       double parent_impurity) {
    SplitChoice best;
    const auto m = static_cast<Eigen::Index>(samples.size());
    if (m < 2) return best;
    std::vector<std::pair<double, int>> column(samples.size());
    std::vector<Eigen::Index> total(static_cast<std::size_t>(class_count), 0);
    for (Eigen::Index i : samples) ++total[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])];
    long long total_sq = 0;
    for (Eigen::Index c : total) total_sq += c * c;
    std::vector<Eigen::Index> left(static_cast<std::size_t>(class_count));

    for (int f : candidate_features) {
        for (std::size_t r = 0; r < samples.size(); ++r)
            column[r] = {features(samples[r], f), labels[static_cast<std::size_t>(samples[r])]};
        std::sort(column.begin(), column.end());
        if (column.front().first == column.back().first) continue;

        std::fill(left.begin(), left.end(), 0);
        long long left_sq = 0;
        long long right_sq = total_sq;
        for (Eigen::Index r = 0; r + 1 < m; ++r) {
            const auto k = static_cast<std::size_t>(column[static_cast<std::size_t>(r)].second);
            const Eigen::Index cl = left[k];
            const Eigen::Index cr = total[k] - cl;
            left_sq += 2 * cl + 1;
            right_sq -= 2 * cr - 1;
            ++left[k];
            const double a = column[static_cast<std::size_t>(r)].first;
            const double b = column[static_cast<std::size_t>(r) + 1].first;
            if (!(a < b)) continue;
            const auto nl = static_cast<double>(r + 1);
            const auto nr = static_cast<double>(m - r - 1);
            const double imp =
                (nl - static_cast<double>(left_sq) / nl + nr - static_cast<double>(right_sq) / nr) / static_cast<double>(m);
            if (!(imp < parent_impurity - impurity_tolerance)) continue;
            const double t = midpoint(a, b);
            if (better(imp, f, t, best)) best = {f, t, imp, true};
        }
    }
    return best;
}

Tree train_tree(const Eigen::MatrixXd& features, const Labels& labels, int class_count,
                std::span<const Eigen::Index> samples, int max_features, std::uint64_t seed) {
    require(!samples.empty() && features.rows() > 0, ErrorCode::invalid_argument, "cannot grow a tree on no samples");
    require(max_features >= 1 && max_features <= features.cols(), ErrorCode::invalid_argument,
            "max_features must lie in 1.." + std::to_string(features.cols()));
    Grower g(features, labels, class_count, max_features, seed);
    return g.grow(samples);
}

Tree train_tree(const Dataset& ds, int max_features, std::uint64_t seed) {
    require(ds.size() > 0, ErrorCode::invalid_argument, "cannot grow a tree on an empty dataset");
    std::vector<Eigen::Index> all(static_cast<std::size_t>(ds.size()));
    std::iota(all.begin(), all.end(), Eigen::Index{0});
    return train_tree(ds.features, ds.labels, ds.class_count, all, max_features, seed);
}

ForestModel train_forest(const Dataset& ds, int tree_count, int max_features, std::uint64_t seed,
                         const ForestOptions& options) {
    require(tree_count >= 1, ErrorCode::invalid_argument, "tree_count must be positive");
    require(ds.size() > 0, ErrorCode::invalid_argument, "cannot grow a forest on an empty dataset");
    require(max_features >= 1 && max_features <= ds.dimension(), ErrorCode::invalid_argument,
            "max_features must lie in 1.." + std::to_string(ds.dimension()));
    ForestModel m;
    m.tree_count = tree_count;
    m.max_features = max_features;
    m.dimension = ds.dimension();
    m.class_count = ds.class_count;
    m.bootstrap = options.bootstrap;
    m.trees.resize(static_cast<std::size_t>(tree_count));
    for (int t = 0; t < tree_count; ++t) m.bootstrap_seeds.push_back(derive_seed(seed, static_cast<std::uint64_t>(t)));

    const auto n = ds.size();
    auto build = [&](std::size_t t) {
        const std::uint64_t tree_seed = m.bootstrap_seeds[t];
        std::vector<Eigen::Index> sample(static_cast<std::size_t>(n));
        if (options.bootstrap) {
            Rng boot(derive_seed(tree_seed, "bootstrap"));
            for (auto& s : sample) s = static_cast<Eigen::Index>(boot.below(static_cast<std::uint64_t>(n)));
        } else {
            std::iota(sample.begin(), sample.end(), Eigen::Index{0});
        }
        m.trees[t] = train_tree(ds.features, ds.labels, ds.class_count, sample, max_features, tree_seed);
    };

    const int jobs = std::clamp(options.jobs, 1, tree_count);
    if (jobs == 1) {
        for (std::size_t t = 0; t < m.trees.size(); ++t) build(t);
        return m;
    }
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(jobs));
    {
        std::vector<std::jthread> pool;
        for (int w = 0; w < jobs; ++w) {
            pool.emplace_back([&, w] {
                try {
                    for (auto t = static_cast<std::size_t>(w); t < m.trees.size(); t += static_cast<std::size_t>(jobs)) build(t);
                } catch (...) {
                    errors[static_cast<std::size_t>(w)] = std::current_exception();
                }
            });
        }
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return m;
}

Eigen::VectorXd forest_posterior(const ForestModel& m, const Eigen::Ref<const Eigen::VectorXd>& x) {
    check_query(m, x.size());
    require(x.allFinite(), ErrorCode::invalid_argument, "query point has non-finite coordinates");
    // Per-class contributions are summed in sorted order so the result does not
    // depend on the order of the trees.
    std::vector<const Eigen::VectorXd*> leaves;
    leaves.reserve(m.trees.size());
    for (const auto& t : m.trees) leaves.push_back(&t.leaf(x).posterior);
    Eigen::VectorXd out(m.class_count);
    std::vector<double> column(leaves.size());
    for (int k = 0; k < m.class_count; ++k) {
        for (std::size_t t = 0; t < leaves.size(); ++t) column[t] = (*leaves[t])(k);
        std::sort(column.begin(), column.end());
        double s = 0.0;
        for (double v : column) s += v;
        out(k) = s / static_cast<double>(leaves.size());
    }
    return out;
}

Eigen::MatrixXd forest_posterior_batch(const ForestModel& m, const Eigen::MatrixXd& x) {
    check_query(m, x.cols());
    Eigen::MatrixXd out(x.rows(), m.class_count);
    for (Eigen::Index r = 0; r < x.rows(); ++r) out.row(r) = forest_posterior(m, x.row(r).transpose()).transpose();
    return out;
}

int forest_predict(const ForestModel& m, const Eigen::Ref<const Eigen::VectorXd>& x) {
    return argmax_class(forest_posterior(m, x));
}

std::vector<int> max_features_grid(Eigen::Index d) {
    require(d >= 1, ErrorCode::invalid_argument, "dimension must be positive");
    const auto dd = static_cast<double>(d);
    std::vector<int> grid;
    for (double v : {std::sqrt(dd), dd / 4.0, dd / 3.0, dd / 1.5, dd})
        grid.push_back(static_cast<int>(std::min(round_count(v), d)));
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
    return grid;
}

int resolve_max_features(const std::string& spec, Eigen::Index d) {
    const auto dd = static_cast<double>(d);
    Eigen::Index v = 0;
    if (spec == "sqrt") v = round_count(std::sqrt(dd));
    else if (spec == "quarter") v = round_count(dd / 4.0);
    else if (spec == "third") v = round_count(dd / 3.0);
    else if (spec == "two-thirds") v = round_count(dd / 1.5);
    else if (spec == "all") v = d;
    else {
        int parsed = 0;
        const auto [ptr, ec] = std::from_chars(spec.data(), spec.data() + spec.size(), parsed);
        require(ec == std::errc{} && ptr == spec.data() + spec.size() && parsed >= 1, ErrorCode::invalid_argument,
                "max-features must be sqrt|quarter|third|two-thirds|all or a positive integer, got '" + spec + "'");
        require(parsed <= d, ErrorCode::invalid_argument, "max-features " + spec + " exceeds dimension " + std::to_string(d));
        v = parsed;
    }
    return static_cast<int>(std::min(v, d));
}

nlohmann::json to_json(const ForestModel& m) {
    nlohmann::json j;
    j["kind"] = "forest";
    j["criterion"] = "gini";
    j["dimension"] = m.dimension;
    j["class_count"] = m.class_count;
    j["tree_count"] = m.tree_count;
    j["max_features"] = m.max_features;
    j["bootstrap"] = m.bootstrap;
    j["bootstrap_seeds"] = m.bootstrap_seeds;
    auto& trees = j["trees"] = nlohmann::json::array();
    for (const auto& t : m.trees) {
        nlohmann::json node;
        node_to_json(t, 0, node);
        trees.push_back(std::move(node));
    }
    return j;
}

ForestModel forest_from_json(const nlohmann::json& j) {
    try {
        require(j.value("kind", "") == "forest", ErrorCode::parse_error, "not a forest model");
        ForestModel m;
        m.dimension = j.at("dimension").get<Eigen::Index>();
        m.class_count = j.at("class_count").get<int>();
        m.tree_count = j.at("tree_count").get<int>();
        m.max_features = j.at("max_features").get<int>();
        m.bootstrap = j.value("bootstrap", true);
        m.bootstrap_seeds = j.at("bootstrap_seeds").get<std::vector<std::uint64_t>>();
        for (const auto& tj : j.at("trees")) {
            Tree t;
            node_from_json(t, tj, m.class_count);
            t.number_leaves();
            m.trees.push_back(std::move(t));
        }
        require(static_cast<int>(m.trees.size()) == m.tree_count, ErrorCode::parse_error, "tree_count mismatch");
        return m;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::parse_error, std::string("malformed forest model: ") + e.what());
    }
}

} // namespace polylab
