#include "polylab/network.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>
#include <thread>

#include "polylab/error.hpp"
#include "polylab/metrics.hpp"

namespace polylab {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void check_input(const NetworkModel& m, Eigen::Index size) {
    require(size == m.dimension, ErrorCode::dimension_mismatch,
            "expected " + std::to_string(m.dimension) + " features, got " + std::to_string(size));
}

// Mean cross-entropy via log-softmax; also returns the softmax rows.
double cross_entropy(const Eigen::MatrixXd& logits, std::span<const int> labels, Eigen::MatrixXd* probs) {
    double total = 0.0;
    if (probs) probs->resize(logits.rows(), logits.cols());
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        const double mx = logits.row(r).maxCoeff();
        const Eigen::RowVectorXd e = (logits.row(r).array() - mx).exp().matrix();
        const double s = e.sum();
        total -= logits(r, labels[static_cast<std::size_t>(r)]) - mx - std::log(s);
        if (probs) probs->row(r) = e / s;
    }
    return total / static_cast<double>(logits.rows());
}

Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& x, std::span<const Eigen::Index> rows) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), x.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = x.row(rows[r]);
    return out;
}

std::vector<int> gather_labels(const Labels& y, std::span<const Eigen::Index> rows) {
    std::vector<int> out(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) out[r] = y[static_cast<std::size_t>(rows[r])];
    return out;
}

} // namespace

std::vector<Eigen::Index> NetworkModel::widths() const {
    std::vector<Eigen::Index> w{dimension};
    for (const auto& l : layers) w.push_back(l.weights.cols());
    return w;
}

void NetworkModel::validate() const {
    require(!layers.empty(), ErrorCode::invalid_argument, "network has no layers");
    Eigen::Index in = dimension;
    for (const auto& l : layers) {
        require(l.weights.rows() == in && l.biases.size() == l.weights.cols(), ErrorCode::invalid_argument,
                "layer shapes do not chain");
        require(l.weights.allFinite() && l.biases.allFinite(), ErrorCode::invalid_argument, "non-finite parameter");
        in = l.weights.cols();
    }
    require(in == class_count, ErrorCode::invalid_argument, "last layer width differs from class count");
}

ForwardPass forward(const NetworkModel& m, const Eigen::Ref<const Eigen::VectorXd>& x) {
    check_input(m, x.size());
    require(x.allFinite(), ErrorCode::invalid_argument, "input has non-finite coordinates");
    ForwardPass out;
    Eigen::VectorXd a = x;
    for (int l = 0; l < m.hidden_depth(); ++l) {
        const auto& layer = m.layers[static_cast<std::size_t>(l)];
        Eigen::VectorXd z = layer.weights.transpose() * a + layer.biases;
        a = z.cwiseMax(0.0);
        out.pre_activations.push_back(std::move(z));
        out.activations.push_back(a);
    }
    const auto& head = m.layers.back();
    out.logits = head.weights.transpose() * a + head.biases;
    return out;
}

Eigen::MatrixXd forward_logits(const NetworkModel& m, const Eigen::MatrixXd& x) {
    check_input(m, x.cols());
    Eigen::MatrixXd a = x;
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        Eigen::MatrixXd z = (a * m.layers[l].weights).rowwise() + m.layers[l].biases.transpose();
        a = l + 1 < m.layers.size() ? Eigen::MatrixXd(z.cwiseMax(0.0)) : std::move(z);
    }
    return a;
}

std::vector<Eigen::MatrixXd> hidden_pre_activations(const NetworkModel& m, const Eigen::MatrixXd& x, int layers) {
    check_input(m, x.cols());
    require(layers >= 0 && layers <= m.hidden_depth(), ErrorCode::layer_out_of_range, "layer limit out of range");
    std::vector<Eigen::MatrixXd> out;
    Eigen::MatrixXd a = x;
    for (int l = 0; l < layers; ++l) {
        const auto& layer = m.layers[static_cast<std::size_t>(l)];
        Eigen::MatrixXd z = (a * layer.weights).rowwise() + layer.biases.transpose();
        a = z.cwiseMax(0.0);
        out.push_back(std::move(z));
    }
    return out;
}

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits) {
    Eigen::MatrixXd out(logits.rows(), logits.cols());
    for (Eigen::Index r = 0; r < logits.rows(); ++r) out.row(r) = softmax(logits.row(r).transpose()).transpose();
    return out;
}

Eigen::VectorXd predict_proba(const NetworkModel& m, const Eigen::Ref<const Eigen::VectorXd>& x) {
    return softmax(forward(m, x).logits);
}

Eigen::MatrixXd predict_proba_batch(const NetworkModel& m, const Eigen::MatrixXd& x) {
    return softmax_rows(forward_logits(m, x));
}

int network_predict(const NetworkModel& m, const Eigen::Ref<const Eigen::VectorXd>& x) {
    const Eigen::VectorXd logits = forward(m, x).logits;
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < logits.size(); ++k)
        if (logits(k) > logits(best)) best = k;
    return static_cast<int>(best);
}

NetworkModel init_network(Eigen::Index dimension, std::span<const int> hidden, int class_count, std::uint64_t seed) {
    require(dimension >= 1 && class_count >= 1, ErrorCode::invalid_argument, "network needs inputs and classes");
    require(!hidden.empty(), ErrorCode::invalid_argument, "at least one hidden layer is required");
    NetworkModel m;
    m.dimension = dimension;
    m.class_count = class_count;
    Rng rng(seed);
    Eigen::Index in = dimension;
    std::vector<Eigen::Index> outs;
    for (int w : hidden) {
        require(w >= 1, ErrorCode::invalid_argument, "hidden widths must be positive");
        outs.push_back(w);
    }
    outs.push_back(class_count);
    for (Eigen::Index out : outs) {
        DenseLayer layer;
        const double bound = std::sqrt(6.0 / static_cast<double>(in));
        layer.weights.resize(in, out);
        for (Eigen::Index i = 0; i < in; ++i)
            for (Eigen::Index j = 0; j < out; ++j) layer.weights(i, j) = rng.uniform(-bound, bound);
        layer.biases = Eigen::VectorXd::Zero(out);
        m.layers.push_back(std::move(layer));
        in = out;
    }
    return m;
}

double loss_and_gradient(const NetworkModel& m, const Eigen::MatrixXd& x, std::span<const int> labels, double l2,
                         std::vector<DenseLayer>* grad) {
    check_input(m, x.cols());
    require(static_cast<std::size_t>(x.rows()) == labels.size() && x.rows() > 0, ErrorCode::dimension_mismatch,
            "batch rows and labels differ");
    const std::size_t depth = m.layers.size();
    std::vector<Eigen::MatrixXd> inputs;  // input of each layer
    inputs.reserve(depth);
    inputs.push_back(x);
    for (std::size_t l = 0; l + 1 < depth; ++l) {
        Eigen::MatrixXd z = (inputs.back() * m.layers[l].weights).rowwise() + m.layers[l].biases.transpose();
        inputs.push_back(z.cwiseMax(0.0));
    }
    const Eigen::MatrixXd logits = (inputs.back() * m.layers.back().weights).rowwise() + m.layers.back().biases.transpose();
    Eigen::MatrixXd probs;
    double loss = cross_entropy(logits, labels, grad ? &probs : nullptr);
    double penalty = 0.0;
    for (const auto& layer : m.layers) penalty += layer.weights.squaredNorm();
    loss += 0.5 * l2 * penalty;
    if (!grad) return loss;

    grad->resize(depth);
    Eigen::MatrixXd delta = std::move(probs);
    for (Eigen::Index r = 0; r < delta.rows(); ++r) delta(r, labels[static_cast<std::size_t>(r)]) -= 1.0;
    delta /= static_cast<double>(x.rows());
    for (std::size_t l = depth; l-- > 0;) {
        auto& g = (*grad)[l];
        g.weights = inputs[l].transpose() * delta + l2 * m.layers[l].weights;
        g.biases = delta.colwise().sum().transpose();
        if (l == 0) break;
        Eigen::MatrixXd back = delta * m.layers[l].weights.transpose();
        // inputs[l] = relu(z); its derivative is 1 exactly where the output is positive.
        delta = (inputs[l].array() > 0.0).select(back, 0.0);
    }
    return loss;
}

void TrainConfig::validate() const {
    require(learning_rate > 0 && momentum >= 0 && momentum < 1, ErrorCode::config_error,
            "learning_rate must be positive and momentum in [0, 1)");
    require(batch_size >= 1 && max_epochs >= 1 && patience >= 1 && patience <= max_epochs, ErrorCode::config_error,
            "batch_size, max_epochs and patience must be positive with patience <= max_epochs");
    require(l2 >= 0, ErrorCode::config_error, "l2 must be non-negative");
    require(validation_fraction > 0 && validation_fraction < 1, ErrorCode::config_error,
            "validation_fraction must lie in (0, 1)");
}

nlohmann::json TrainConfig::to_json() const {
    return {{"optimizer", "sgd-momentum"}, {"learning_rate", learning_rate}, {"momentum", momentum},
            {"batch_size", batch_size},    {"l2", l2},                       {"max_epochs", max_epochs},
            {"patience", patience},        {"validation_fraction", validation_fraction}, {"seed", seed}};
}

bool EarlyStopping::update(int epoch, double loss) {
    if (loss < best_) {
        best_ = loss;
        best_epoch_ = epoch;
        stale_ = 0;
        return true;
    }
    ++stale_;
    return false;
}

NetworkModel train_network(const Dataset& ds, std::span<const int> hidden, const TrainConfig& cfg,
                           TrainReport* report) {
    cfg.validate();
    ds.validate();
    require(ds.class_count >= 2, ErrorCode::invalid_argument, "network training needs at least two classes");

    // Stratified validation split.
    auto groups = indices_by_class(ds.labels, ds.class_count);
    Rng split_rng(derive_seed(cfg.seed, "validation"));
    std::vector<Eigen::Index> train_idx, val_idx;
    for (auto& g : groups) {
        split_rng.shuffle(std::span(g));
        auto take = static_cast<std::size_t>(std::floor(cfg.validation_fraction * static_cast<double>(g.size()) + 0.5));
        take = std::min(take, g.empty() ? 0 : g.size() - 1);
        val_idx.insert(val_idx.end(), g.begin(), g.begin() + static_cast<std::ptrdiff_t>(take));
        train_idx.insert(train_idx.end(), g.begin() + static_cast<std::ptrdiff_t>(take), g.end());
    }
    if (val_idx.empty() && ds.size() >= 2) {
        const auto largest = std::max_element(groups.begin(), groups.end(),
                                              [](const auto& a, const auto& b) { return a.size() < b.size(); });
        if (largest->size() >= 2) {
            val_idx.push_back(largest->front());
            train_idx.erase(std::find(train_idx.begin(), train_idx.end(), largest->front()));
        }
    }
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(val_idx.begin(), val_idx.end());
    const Eigen::MatrixXd val_x = gather_rows(ds.features, val_idx);
    const std::vector<int> val_y = gather_labels(ds.labels, val_idx);

    NetworkModel model = init_network(ds.dimension(), hidden, ds.class_count, derive_seed(cfg.seed, "init"));
    NetworkModel best = model;
    std::vector<DenseLayer> velocity(model.layers.size());
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        velocity[l].weights = Eigen::MatrixXd::Zero(model.layers[l].weights.rows(), model.layers[l].weights.cols());
        velocity[l].biases = Eigen::VectorXd::Zero(model.layers[l].biases.size());
    }
    std::vector<DenseLayer> grad;
    Rng shuffle_rng(derive_seed(cfg.seed, "shuffle"));
    EarlyStopping stopper(cfg.patience);
    TrainReport local;

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        shuffle_rng.shuffle(std::span(train_idx));
        for (std::size_t b = 0; b < train_idx.size(); b += static_cast<std::size_t>(cfg.batch_size)) {
            const auto batch = std::span<const Eigen::Index>(train_idx).subspan(
                b, std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), train_idx.size() - b));
            const Eigen::MatrixXd bx = gather_rows(ds.features, batch);
            const std::vector<int> by = gather_labels(ds.labels, batch);
            const double loss = loss_and_gradient(model, bx, by, cfg.l2, &grad);
            if (!std::isfinite(loss)) throw TrainingDiverged(epoch);
            for (std::size_t l = 0; l < model.layers.size(); ++l) {
                velocity[l].weights = cfg.momentum * velocity[l].weights - cfg.learning_rate * grad[l].weights;
                velocity[l].biases = cfg.momentum * velocity[l].biases - cfg.learning_rate * grad[l].biases;
                model.layers[l].weights += velocity[l].weights;
                model.layers[l].biases += velocity[l].biases;
            }
        }
        local.epochs_run = epoch;
        if (val_idx.empty()) {
            best = model;
            local.best_epoch = epoch;
            continue;
        }
        const double vloss = loss_and_gradient(model, val_x, val_y, 0.0, nullptr);
        if (!std::isfinite(vloss) || !model.layers.back().weights.allFinite()) throw TrainingDiverged(epoch);
        local.validation_losses.push_back(vloss);
        if (stopper.update(epoch, vloss)) best = model;
        local.best_epoch = stopper.best_epoch();
        if (stopper.should_stop()) {
            local.stopped_early = true;
            break;
        }
    }
    if (report) *report = std::move(local);
    return best;
}

void SearchSpace::validate() const {
    require(width_min >= 1 && width_min <= width_max, ErrorCode::config_error, "hidden width range is empty");
    require(depth_min >= 1 && depth_min <= depth_max, ErrorCode::config_error, "depth range is empty");
    require(l2_min > 0 && l2_min <= l2_max, ErrorCode::config_error, "l2 range is empty");
    require(draws >= 1, ErrorCode::config_error, "draws must be positive");
}

nlohmann::json SearchSpace::to_json() const {
    return {{"width_min", width_min}, {"width_max", width_max}, {"depth_min", depth_min}, {"depth_max", depth_max},
            {"l2_min", l2_min},       {"l2_max", l2_max},       {"draws", draws}};
}

SearchDraw sample_draw(const SearchSpace& space, Rng& rng) {
    SearchDraw d;
    const auto depth = rng.integer(space.depth_min, space.depth_max);
    for (long long l = 0; l < depth; ++l) d.hidden.push_back(static_cast<int>(rng.integer(space.width_min, space.width_max)));
    d.l2 = std::pow(10.0, rng.uniform(std::log10(space.l2_min), std::log10(space.l2_max)));
    return d;
}

SearchResult search_configurations(const SearchSpace& space, std::uint64_t seed, const DrawScorer& scorer, int jobs) {
    space.validate();
    Rng rng(derive_seed(seed, "draws"));
    SearchResult result;
    std::vector<SearchDraw> draws;
    for (int i = 0; i < space.draws; ++i) draws.push_back(sample_draw(space, rng));
    result.log.resize(draws.size());

    jobs = std::clamp(jobs, 1, space.draws);
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(jobs));
    auto work = [&](int w) {
        try {
            for (auto i = static_cast<std::size_t>(w); i < draws.size(); i += static_cast<std::size_t>(jobs)) {
                result.log[i] = scorer(draws[i], static_cast<int>(i));
                result.log[i].draw = draws[i];
            }
        } catch (...) {
            errors[static_cast<std::size_t>(w)] = std::current_exception();
        }
    };
    if (jobs == 1) {
        work(0);
    } else {
        std::vector<std::jthread> pool;
        for (int w = 0; w < jobs; ++w) pool.emplace_back(work, w);
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);

    for (std::size_t i = 0; i < result.log.size(); ++i) {
        if (result.log[i].score == -std::numeric_limits<double>::infinity()) continue;
        if (result.best_index < 0 || result.log[i].score > result.log[static_cast<std::size_t>(result.best_index)].score)
            result.best_index = static_cast<int>(i);
    }
    if (result.best_index >= 0) result.best = result.log[static_cast<std::size_t>(result.best_index)].draw;
    return result;
}

SearchResult random_search(const Dataset& ds, const SearchSpace& space, const TrainConfig& base, int folds,
                           std::uint64_t seed, int jobs) {
    const FoldPlan plan = stratified_folds(ds, folds, derive_seed(seed, "folds"));
    std::vector<Dataset> train_sets, test_sets;
    for (int f = 0; f < folds; ++f) {
        train_sets.push_back(ds.subset(plan.train_indices(f)));
        test_sets.push_back(ds.subset(plan.test_indices(f)));
    }
    auto scorer = [&](const SearchDraw& draw, int index) {
        SearchEntry entry;
        TrainConfig cfg = base;
        cfg.l2 = draw.l2;
        try {
            for (int f = 0; f < folds; ++f) {
                cfg.seed = derive_seed(derive_seed(seed, static_cast<std::uint64_t>(index)), static_cast<std::uint64_t>(f));
                const auto model = train_network(train_sets[static_cast<std::size_t>(f)], draw.hidden, cfg);
                const auto& test = test_sets[static_cast<std::size_t>(f)];
                const auto pred = argmax_rows(forward_logits(model, test.features));
                entry.fold_kappas.push_back(cohen_kappa(test.labels, pred, ds.class_count).value);
            }
            entry.score = std::accumulate(entry.fold_kappas.begin(), entry.fold_kappas.end(), 0.0) /
                          static_cast<double>(entry.fold_kappas.size());
        } catch (const TrainingDiverged& e) {
            entry.error = e.what();
            entry.score = -std::numeric_limits<double>::infinity();
        }
        return entry;
    };
    return search_configurations(space, seed, scorer, jobs);
}

nlohmann::json to_json(const NetworkModel& m) {
    nlohmann::json j;
    j["kind"] = "network";
    j["widths"] = m.widths();
    auto& weights = j["weights"] = nlohmann::json::array();
    auto& biases = j["biases"] = nlohmann::json::array();
    for (const auto& l : m.layers) {
        const RowMatrix w = l.weights;
        weights.push_back(std::vector<double>(w.data(), w.data() + w.size()));
        biases.push_back(std::vector<double>(l.biases.data(), l.biases.data() + l.biases.size()));
    }
    return j;
}

NetworkModel network_from_json(const nlohmann::json& j) {
    try {
        require(j.value("kind", "") == "network", ErrorCode::parse_error, "not a network model");
        const auto widths = j.at("widths").get<std::vector<Eigen::Index>>();
        require(widths.size() >= 3, ErrorCode::parse_error, "network needs at least one hidden layer");
        NetworkModel m;
        m.dimension = widths.front();
        m.class_count = static_cast<int>(widths.back());
        for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
            const auto w = j.at("weights").at(l).get<std::vector<double>>();
            const auto b = j.at("biases").at(l).get<std::vector<double>>();
            require(static_cast<Eigen::Index>(w.size()) == widths[l] * widths[l + 1] &&
                        static_cast<Eigen::Index>(b.size()) == widths[l + 1],
                    ErrorCode::parse_error, "layer " + std::to_string(l) + " has the wrong number of parameters");
            DenseLayer layer;
            layer.weights = Eigen::Map<const RowMatrix>(w.data(), widths[l], widths[l + 1]);
            layer.biases = Eigen::Map<const Eigen::VectorXd>(b.data(), widths[l + 1]);
            m.layers.push_back(std::move(layer));
        }
        m.validate();
        return m;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::parse_error, std::string("malformed network model: ") + e.what());
    }
}

nlohmann::json to_json(const SearchResult& r) {
    nlohmann::json log = nlohmann::json::array();
    for (const auto& e : r.log) {
        nlohmann::json entry = {{"hidden", e.draw.hidden}, {"l2", e.draw.l2}, {"fold_kappas", e.fold_kappas}};
        if (std::isfinite(e.score)) entry["score"] = e.score;
        else entry["score"] = nullptr;
        if (!e.error.empty()) entry["error"] = e.error;
        log.push_back(std::move(entry));
    }
    return {{"best_index", r.best_index}, {"best", {{"hidden", r.best.hidden}, {"l2", r.best.l2}}}, {"log", log}};
}

} // namespace polylab
