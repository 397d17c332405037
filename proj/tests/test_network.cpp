#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "polylab/data.hpp"
#include "polylab/error.hpp"
#include "polylab/metrics.hpp"
#include "polylab/network.hpp"
#include "support.hpp"

using namespace polylab;
using test_support::random_network;

namespace {

NetworkModel single_unit(double w0, double w1, double b) {
    NetworkModel m;
    m.dimension = 2;
    m.class_count = 2;
    DenseLayer hidden{Eigen::MatrixXd(2, 1), Eigen::VectorXd::Constant(1, b)};
    hidden.weights << w0, w1;
    DenseLayer head{Eigen::MatrixXd::Ones(1, 2), Eigen::VectorXd::Zero(2)};
    m.layers = {hidden, head};
    return m;
}

double relu(double v) { return std::max(0.0, v); }

std::vector<std::vector<bool>> sign_pattern(const NetworkModel& m, const Eigen::MatrixXd& x) {
    std::vector<std::vector<bool>> out;
    for (const auto& pre : hidden_pre_activations(m, x, m.hidden_depth()))
        for (Eigen::Index i = 0; i < pre.size(); ++i) out.push_back({pre.data()[i] > 0.0});
    return out;
}

double min_abs_pre_activation(const NetworkModel& m, const Eigen::MatrixXd& x) {
    double v = std::numeric_limits<double>::infinity();
    for (const auto& pre : hidden_pre_activations(m, x, m.hidden_depth())) v = std::min(v, pre.cwiseAbs().minCoeff());
    return v;
}

} // namespace

TEST_CASE("zero weights give uniform softmax") {
    NetworkModel m = init_network(2, std::vector<int>{3}, 2, 1);
    for (auto& l : m.layers) {
        l.weights.setZero();
        l.biases.setZero();
    }
    Eigen::VectorXd x(2);
    x << 0.7, -1.2;
    const ForwardPass pass = forward(m, x);
    CHECK(pass.activations[0].isZero());
    CHECK(pass.logits.isZero());
    const Eigen::VectorXd p = predict_proba(m, x);
    CHECK(p(0) == doctest::Approx(0.5));

    m.layers[0].biases << 1.0, -1.0, 0.5;
    const ForwardPass biased = forward(m, x);
    CHECK(biased.activations[0](0) == 1.0);
    CHECK(biased.activations[0](1) == 0.0);
    CHECK(biased.activations[0](2) == 0.5);
}

TEST_CASE("single ReLU unit") {
    const NetworkModel m = single_unit(1.0, 0.0, 0.0);
    Eigen::VectorXd a(2), b(2);
    a << 2.0, 3.0;
    b << -1.0, 3.0;
    CHECK(forward(m, a).activations[0](0) == 2.0);
    CHECK(forward(m, b).activations[0](0) == 0.0);
}

TEST_CASE("two-layer composition matches a hand evaluation") {
    NetworkModel m;
    m.dimension = 2;
    m.class_count = 2;
    DenseLayer l1{Eigen::MatrixXd(2, 2), Eigen::VectorXd(2)};
    l1.weights << 1.0, -2.0, 0.5, 1.0;  // columns are units
    l1.biases << 0.1, -0.3;
    DenseLayer l2{Eigen::MatrixXd(2, 2), Eigen::VectorXd(2)};
    l2.weights << 0.7, -1.0, -0.4, 2.0;
    l2.biases << 0.2, 0.05;
    DenseLayer head{Eigen::MatrixXd(2, 2), Eigen::VectorXd(2)};
    head.weights << 1.0, 0.0, 0.0, 1.0;
    head.biases << 0.0, 0.0;
    m.layers = {l1, l2, head};

    Eigen::VectorXd x(2);
    x << 0.8, 0.6;
    const double h11 = relu(x(0) * 1.0 + x(1) * 0.5 + 0.1);
    const double h12 = relu(x(0) * -2.0 + x(1) * 1.0 - 0.3);
    const double h21 = relu(h11 * 0.7 + h12 * -0.4 + 0.2);
    const double h22 = relu(h11 * -1.0 + h12 * 2.0 + 0.05);
    const ForwardPass pass = forward(m, x);
    CHECK(pass.activations[0](0) == doctest::Approx(h11).epsilon(1e-15));
    CHECK(pass.activations[0](1) == doctest::Approx(h12).epsilon(1e-15));
    CHECK(pass.activations[1](0) == doctest::Approx(h21).epsilon(1e-15));
    CHECK(pass.activations[1](1) == doctest::Approx(h22).epsilon(1e-15));
    CHECK(pass.logits(0) == doctest::Approx(h21).epsilon(1e-15));
    CHECK(pass.logits(1) == doctest::Approx(h22).epsilon(1e-15));

    Eigen::VectorXd wrong(3);
    wrong << 1, 2, 3;
    CHECK_THROWS_AS(forward(m, wrong), Error);
    CHECK_THROWS_AS(predict_proba(m, wrong), Error);
}

TEST_CASE("softmax cases") {
    Eigen::VectorXd z(2);
    z << 0.0, 0.0;
    CHECK(softmax(z)(0) == 0.5);
    z << 1000.0, 0.0;
    const Eigen::VectorXd big = softmax(z);
    CHECK(std::abs(big(0) - 1.0) <= 1e-12);
    CHECK(std::abs(big(1)) <= 1e-12);
    CHECK(big.allFinite());
    z << std::numbers::ln2, 0.0;
    CHECK(softmax(z)(0) == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
    CHECK(softmax(z)(1) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
}

TEST_CASE("softmax is shift invariant and stays in the open interval") {
    Rng rng(1);
    for (int t = 0; t < 200; ++t) {
        Eigen::VectorXd z(4);
        for (int k = 0; k < 4; ++k) z(k) = 5.0 * rng.normal();
        const Eigen::VectorXd p = softmax(z);
        const Eigen::VectorXd shifted = softmax((z.array() + rng.uniform(-50, 50)).matrix());
        CHECK(std::abs(p.sum() - 1.0) <= 1e-12);
        CHECK(p.minCoeff() > 0.0);
        CHECK(p.maxCoeff() < 1.0);
        CHECK((p - shifted).cwiseAbs().maxCoeff() <= 1e-12);
    }
    const Eigen::MatrixXd rows = softmax_rows(Eigen::MatrixXd::Random(5, 3) * 10.0);
    CHECK((rows.rowwise().sum().array() - 1.0).abs().maxCoeff() <= 1e-12);
}

TEST_CASE("gradient matches central differences") {
    Rng rng(7);
    int checked = 0;
    for (int trial = 0; trial < 20; ++trial) {
        const int d = static_cast<int>(rng.integer(1, 3));
        std::vector<int> hidden;
        const auto depth = rng.integer(1, 3);
        for (long long l = 0; l < depth; ++l) hidden.push_back(static_cast<int>(rng.integer(1, 4)));
        const int classes = static_cast<int>(rng.integer(2, 3));
        NetworkModel m = random_network(d, hidden, classes, rng);
        Eigen::MatrixXd x(6, d);
        std::vector<int> y(6);
        for (Eigen::Index i = 0; i < 6; ++i) {
            for (int k = 0; k < d; ++k) x(i, k) = rng.normal();
            y[static_cast<std::size_t>(i)] = static_cast<int>(rng.below(static_cast<std::uint64_t>(classes)));
        }
        if (min_abs_pre_activation(m, x) < 1e-3) continue;
        const double l2 = 0.01;
        std::vector<DenseLayer> grad;
        loss_and_gradient(m, x, y, l2, &grad);
        const auto pattern = sign_pattern(m, x);
        const double h = 1e-5;
        auto check_param = [&](double& p, double analytic) {
            const double saved = p;
            p = saved + h;
            const double up = loss_and_gradient(m, x, y, l2, nullptr);
            const bool same_up = sign_pattern(m, x) == pattern;
            p = saved - h;
            const double down = loss_and_gradient(m, x, y, l2, nullptr);
            const bool same_down = sign_pattern(m, x) == pattern;
            p = saved;
            if (!same_up || !same_down) return;
            const double numeric = (up - down) / (2.0 * h);
            const double scale = std::max(std::abs(numeric) + std::abs(analytic), 1e-6);
            CHECK(std::abs(numeric - analytic) / scale <= 1e-4);
            ++checked;
        };
        for (std::size_t l = 0; l < m.layers.size(); ++l) {
            auto& layer = m.layers[l];
            for (Eigen::Index i = 0; i < layer.weights.rows(); ++i)
                for (Eigen::Index j = 0; j < layer.weights.cols(); ++j) check_param(layer.weights(i, j), grad[l].weights(i, j));
            for (Eigen::Index j = 0; j < layer.biases.size(); ++j) check_param(layer.biases(j), grad[l].biases(j));
        }
    }
    CHECK(checked > 200);
}

TEST_CASE("network is affine between points with equal sign patterns") {
    Rng rng(11);
    int checked = 0;
    for (int t = 0; t < 2000 && checked < 300; ++t) {
        const NetworkModel m = random_network(2, {4, 3}, 2, rng);
        Eigen::MatrixXd pts(3, 2);
        pts.row(0) << rng.uniform(-1, 1), rng.uniform(-1, 1);
        pts.row(1) = pts.row(0) + 0.05 * Eigen::RowVector2d(rng.normal(), rng.normal());
        pts.row(2) = 0.5 * (pts.row(0) + pts.row(1));
        if (sign_pattern(m, pts.topRows(1)) != sign_pattern(m, pts.middleRows(1, 1))) continue;
        const Eigen::MatrixXd logits = forward_logits(m, pts);
        CHECK((logits.row(2) - 0.5 * (logits.row(0) + logits.row(1))).cwiseAbs().maxCoeff() <= 1e-9);
        ++checked;
    }
    CHECK(checked >= 300);
}

TEST_CASE("initialization bounds and determinism") {
    const NetworkModel a = init_network(10, std::vector<int>{50, 20}, 3, 5);
    const NetworkModel b = init_network(10, std::vector<int>{50, 20}, 3, 5);
    CHECK(a.widths() == std::vector<Eigen::Index>{10, 50, 20, 3});
    for (std::size_t l = 0; l < a.layers.size(); ++l) {
        const double bound = std::sqrt(6.0 / static_cast<double>(a.layers[l].weights.rows()));
        CHECK(a.layers[l].weights.cwiseAbs().maxCoeff() <= bound);
        CHECK(a.layers[l].biases.isZero());
        CHECK(a.layers[l].weights == b.layers[l].weights);
    }
}

TEST_CASE("early stopping after three worse epochs keeps epoch one") {
    EarlyStopping stop(3);
    CHECK(stop.update(1, 1.0));
    CHECK_FALSE(stop.update(2, 1.1));
    CHECK_FALSE(stop.should_stop());
    CHECK_FALSE(stop.update(3, 1.2));
    CHECK_FALSE(stop.should_stop());
    CHECK_FALSE(stop.update(4, 1.3));
    CHECK(stop.should_stop());
    CHECK(stop.best_epoch() == 1);
    CHECK(stop.best_loss() == 1.0);
}

TEST_CASE("equal losses do not count as improvement") {
    EarlyStopping stop(2);
    stop.update(1, 0.5);
    stop.update(2, 0.5);
    stop.update(3, 0.5);
    CHECK(stop.should_stop());
    CHECK(stop.best_epoch() == 1);
}

TEST_CASE("training report returns the best validation epoch") {
    const Dataset ds = test_support::blobs(400, 1.5, 3);
    TrainConfig cfg;
    cfg.seed = 4;
    cfg.max_epochs = 60;
    TrainReport report;
    const std::vector<int> arch{20};
    train_network(ds, arch, cfg, &report);
    REQUIRE(!report.validation_losses.empty());
    CHECK(report.epochs_run == static_cast<int>(report.validation_losses.size()));
    const auto best = std::min_element(report.validation_losses.begin(), report.validation_losses.end());
    CHECK(report.best_epoch == static_cast<int>(best - report.validation_losses.begin()) + 1);
    if (report.stopped_early) CHECK(report.epochs_run - report.best_epoch == cfg.patience);
}

TEST_CASE("separable blobs are fit almost perfectly") {
    const Dataset ds = test_support::blobs(500, 0.3, 8);
    TrainConfig cfg;
    cfg.seed = 1;
    const std::vector<int> arch{20};
    const NetworkModel m = train_network(ds, arch, cfg);
    const auto preds = argmax_rows(predict_proba_batch(m, ds.features));
    CHECK(accuracy(preds, ds.labels) >= 0.99);
}

TEST_CASE("XOR network approaches the Bayes accuracy") {
    auto [train, test] = gen_gaussian_xor(4096, 1000, 0.5, 21);
    TrainConfig cfg;
    cfg.seed = 2;
    const std::vector<int> arch{100};
    const NetworkModel m = train_network(train, arch, cfg);
    const auto preds = argmax_rows(predict_proba_batch(m, test.features));
    CHECK(std::abs(accuracy(preds, test.labels) - xor_bayes_accuracy(0.5)) <= 0.05);
}

TEST_CASE("training is seed deterministic") {
    const Dataset ds = test_support::blobs(200, 1.0, 5);
    TrainConfig cfg;
    cfg.seed = 6;
    cfg.max_epochs = 10;
    const std::vector<int> arch{8, 4};
    CHECK(to_json(train_network(ds, arch, cfg)) == to_json(train_network(ds, arch, cfg)));
}

TEST_CASE("huge learning rate reports divergence with its epoch") {
    const Dataset ds = test_support::blobs(200, 1.0, 5);
    TrainConfig cfg;
    cfg.learning_rate = 1e200;
    cfg.momentum = 0.5;
    const std::vector<int> arch{8};
    try {
        train_network(ds, arch, cfg);
        FAIL("expected divergence");
    } catch (const TrainingDiverged& e) {
        CHECK(e.code() == ErrorCode::training_diverged);
        CHECK(e.epoch() >= 1);
    }
}

TEST_CASE("training config validation") {
    TrainConfig cfg;
    cfg.validation_fraction = 1.0;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = TrainConfig{};
    cfg.patience = 500;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = TrainConfig{};
    cfg.learning_rate = 0.0;
    CHECK_THROWS_AS(cfg.validate(), Error);
    const Dataset ds = test_support::blobs(50, 1.0, 5);
    const std::vector<int> bad{0};
    CHECK_THROWS_AS(train_network(ds, bad, TrainConfig{}), Error);
}

TEST_CASE("sampled l2 is log-uniform") {
    SearchSpace space;
    Rng rng(13);
    std::vector<double> u;
    for (int i = 0; i < 10000; ++i) {
        const SearchDraw d = sample_draw(space, rng);
        REQUIRE(d.hidden.size() >= 1);
        REQUIRE(d.hidden.size() <= 3);
        for (int w : d.hidden) CHECK((w >= 20 && w <= 400));
        u.push_back((std::log10(d.l2) + 5.0) / 3.0);
    }
    std::sort(u.begin(), u.end());
    double ks = 0.0;
    const double n = static_cast<double>(u.size());
    for (std::size_t i = 0; i < u.size(); ++i)
        ks = std::max({ks, std::abs(static_cast<double>(i + 1) / n - u[i]), std::abs(u[i] - static_cast<double>(i) / n)});
    CHECK(ks < 0.02);
}

TEST_CASE("search with one draw returns that draw") {
    SearchSpace space;
    space.draws = 1;
    Rng rng(derive_seed(3, "draws"));
    const SearchDraw expected = sample_draw(space, rng);
    const SearchResult r = search_configurations(space, 3, [](const SearchDraw& d, int) {
        SearchEntry e;
        e.draw = d;
        e.score = 0.1;
        return e;
    });
    CHECK(r.best_index == 0);
    CHECK(r.best.hidden == expected.hidden);
    CHECK(r.best.l2 == expected.l2);
}

TEST_CASE("search returns the higher-kappa draw and tolerates divergence") {
    SearchSpace space;
    space.draws = 3;
    const SearchResult r = search_configurations(space, 5, [](const SearchDraw& d, int index) {
        SearchEntry e;
        e.draw = d;
        if (index == 0) e.score = 0.1;
        if (index == 1) e.score = 0.9;
        if (index == 2) e.error = "training diverged";
        return e;
    });
    CHECK(r.best_index == 1);
    CHECK(r.log.size() == 3);
    CHECK(std::isinf(r.log[2].score));

    const SearchResult none = search_configurations(space, 5, [](const SearchDraw& d, int) {
        SearchEntry e;
        e.draw = d;
        e.error = "training diverged";
        return e;
    });
    CHECK(none.best_index == -1);
}

TEST_CASE("random search on blobs scores every draw") {
    const Dataset ds = test_support::blobs(100, 0.5, 9);
    SearchSpace space;
    space.draws = 2;
    space.width_max = 30;
    TrainConfig base;
    base.max_epochs = 20;
    const SearchResult r = random_search(ds, space, base, 3, 4);
    REQUIRE(r.log.size() == 2);
    for (const auto& e : r.log) CHECK(e.fold_kappas.size() == 3);
    CHECK(r.best_index >= 0);
    const auto j = to_json(r);
    CHECK(j.contains("log"));
}

TEST_CASE("network json round-trips") {
    Rng rng(3);
    const NetworkModel m = random_network(3, {5, 4}, 3, rng);
    const NetworkModel back = network_from_json(nlohmann::json::parse(to_json(m).dump()));
    REQUIRE(back.layers.size() == m.layers.size());
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        CHECK((back.layers[l].weights - m.layers[l].weights).cwiseAbs().maxCoeff() <= 1e-15);
        CHECK((back.layers[l].biases - m.layers[l].biases).cwiseAbs().maxCoeff() <= 1e-15);
    }
    CHECK_THROWS_AS(network_from_json(nlohmann::json{{"kind", "forest"}}), Error);
}
