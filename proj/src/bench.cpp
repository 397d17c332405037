#include "polylab/bench.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <exception>
#include <fstream>
#include <iterator>
#include <map>
#include <numeric>
#include <sstream>
#include <thread>

#include "polylab/error.hpp"
#include "polylab/io.hpp"
#include "polylab/metrics.hpp"
#include "polylab/random.hpp"
#include "polylab/toml.hpp"

namespace polylab {

namespace {

using nlohmann::json;

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
    require(j.is_object(), ErrorCode::config_error, where + " must be a table");
    for (const auto& [key, value] : j.items()) {
        const bool known = std::any_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; });
        require(known, ErrorCode::config_error, "unknown key '" + key + "' in " + where);
    }
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
    if (!j.contains(key)) return;
    const json& v = j.at(key);
    try {
        if constexpr (std::is_same_v<T, bool>) {
            require(v.is_boolean(), ErrorCode::config_error, "");
        } else if constexpr (std::is_integral_v<T>) {
            require(v.is_number_integer(), ErrorCode::config_error, "");
            if constexpr (std::is_unsigned_v<T>) require(v.is_number_unsigned(), ErrorCode::config_error, "");
        } else if constexpr (std::is_floating_point_v<T>) {
            require(v.is_number(), ErrorCode::config_error, "");
        } else if constexpr (std::is_same_v<T, std::string>) {
            require(v.is_string(), ErrorCode::config_error, "");
        }
        out = v.get<T>();
    } catch (const std::exception&) {
        fail(ErrorCode::config_error, "bad value for '" + std::string(key) + "' in " + where + ": " + v.dump());
    }
}

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    return out + "\"";
}

void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
    if (jobs <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    {
        std::vector<std::jthread> pool;
        const auto workers = std::min<std::size_t>(static_cast<std::size_t>(jobs), n);
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < n; i = next++) {
                    try {
                        fn(i);
                    } catch (...) {
                        std::lock_guard lock(error_mutex);
                        if (!error) error = std::current_exception();
                    }
                }
            });
        }
    }
    if (error) std::rethrow_exception(error);
}

SearchDraw draw_from_json(const json& j) {
    SearchDraw d;
    d.hidden = j.at("hidden").get<std::vector<int>>();
    d.l2 = j.at("l2").get<double>();
    return d;
}

json config_fingerprint(const BenchConfig& cfg) {
    json j = cfg.to_json();
    j.erase("jobs");
    j.erase("out");
    return j;
}

bool has_family(const BenchConfig& cfg, const std::string& family) {
    return std::find(cfg.families.begin(), cfg.families.end(), family) != cfg.families.end();
}

TuningResult tune(const BenchConfig& cfg, const Dataset& ds, const FoldPlan& plan, const std::string& name) {
    TuningResult t;
    if (has_family(cfg, "forest")) {
        std::vector<int> candidates;
        for (const auto& s : cfg.forest.max_features) candidates.push_back(resolve_max_features(s, ds.dimension()));
        std::sort(candidates.begin(), candidates.end());
        candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
        const int trees = cfg.forest.tuning_tree_count > 0 ? cfg.forest.tuning_tree_count : cfg.forest.tree_count;
        const auto folds = static_cast<std::size_t>(cfg.folds);
        std::vector<double> kappas(candidates.size() * folds);
        parallel_for(kappas.size(), cfg.jobs, [&](std::size_t i) {
            const int m = candidates[i / folds];
            const int f = static_cast<int>(i % folds);
            const auto seed = derive_seed(cfg.seed, "tune-forest/" + name + "/" + std::to_string(m) + "/" + std::to_string(f));
            const auto model = train_forest(ds.subset(plan.train_indices(f)), trees, m, seed);
            const auto test = ds.subset(plan.test_indices(f));
            const auto pred = argmax_rows(forest_posterior_batch(model, test.features));
            kappas[i] = cohen_kappa(test.labels, pred, ds.class_count).value;
        });
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < candidates.size(); ++c) {
            const double score = std::accumulate(kappas.begin() + static_cast<long>(c * folds),
                                                 kappas.begin() + static_cast<long>((c + 1) * folds), 0.0) /
                                 static_cast<double>(folds);
            t.forest_scores.emplace_back(candidates[c], score);
            if (score > best) {
                best = score;
                t.max_features = candidates[c];
            }
        }
        t.has_forest = true;
    }
    if (has_family(cfg, "network")) {
        t.network = random_search(ds, cfg.network, cfg.train, cfg.folds, derive_seed(cfg.seed, "tune-network/" + name),
                                  cfg.jobs);
        require(t.network.best_index >= 0, ErrorCode::training_diverged,
                "every network search draw diverged on '" + name + "'");
        t.has_network = true;
    }
    return t;
}

struct Cell {
    std::string family;
    int fold = 0;
    Eigen::Index size = 0;
};

RunRecord run_cell(const BenchConfig& cfg, const Dataset& ds, const FoldPlan& plan,
                   const std::vector<std::vector<Eigen::Index>>& orders, const TuningResult& tuning, const Cell& cell) {
    RunRecord r;
    r.dataset = ds.name;
    r.family = cell.family;
    r.fold = cell.fold;
    r.size = cell.size;
    r.seed = derive_seed(cfg.seed, r.key());
    if (cell.family == "forest") {
        r.hyperparameters = {{"tree_count", cfg.forest.tree_count}, {"max_features", tuning.max_features}};
    } else {
        r.hyperparameters = {{"hidden", tuning.network.best.hidden}, {"l2", tuning.network.best.l2}};
    }
    try {
        const auto& order = orders[static_cast<std::size_t>(cell.fold)];
        const Dataset train = ds.subset(std::span(order).first(static_cast<std::size_t>(cell.size)));
        const Dataset test = ds.subset(plan.test_indices(cell.fold));
        Eigen::MatrixXd probs;
        if (cell.family == "forest") {
            auto [model, seconds] =
                timed([&] { return train_forest(train, cfg.forest.tree_count, tuning.max_features, r.seed); });
            r.seconds = seconds;
            probs = forest_posterior_batch(model, test.features);
        } else {
            TrainConfig tc = cfg.train;
            tc.l2 = tuning.network.best.l2;
            tc.seed = r.seed;
            auto [model, seconds] = timed([&] { return train_network(train, tuning.network.best.hidden, tc); });
            r.seconds = seconds;
            probs = predict_proba_batch(model, test.features);
        }
        const auto pred = argmax_rows(probs);
        r.kappa = cohen_kappa(test.labels, pred, ds.class_count).value;
        r.ece = ece(probs, test.labels, 40);
        r.accuracy = accuracy(pred, test.labels);
    } catch (const std::exception& e) {
        r.failed = true;
        r.error = e.what();
        r.kappa = r.ece = r.accuracy = r.seconds = 0.0;
    }
    r.timestamp = utc_timestamp();
    return r;
}

} // namespace

void BenchConfig::validate() const {
    require(!datasets.empty(), ErrorCode::config_error, "no datasets configured");
    std::set<std::string> names;
    for (const auto& d : datasets) {
        require(!d.name.empty(), ErrorCode::config_error, "dataset without a name");
        require(d.name.find_first_of("/\\,\" \t") == std::string::npos, ErrorCode::config_error,
                "dataset name '" + d.name + "' must not contain separators or spaces");
        require(names.insert(d.name).second, ErrorCode::config_error, "duplicate dataset name '" + d.name + "'");
        require(d.kind == "csv" || d.kind == "xor", ErrorCode::config_error, "dataset kind must be csv or xor");
        if (d.kind == "csv") require(!d.path.empty(), ErrorCode::config_error, "dataset '" + d.name + "' needs a path");
        if (d.kind == "xor")
            require(d.xor_samples >= 2 && d.xor_sigma > 0.0, ErrorCode::config_error,
                    "dataset '" + d.name + "' needs samples >= 2 and sigma > 0");
    }
    require(!families.empty(), ErrorCode::config_error, "no model families configured");
    for (const auto& f : families)
        require(f == "forest" || f == "network", ErrorCode::config_error, "unknown family '" + f + "'");
    require(sample_cap >= 2, ErrorCode::config_error, "sample_cap must be at least 2");
    require(folds >= 2, ErrorCode::config_error, "folds must be at least 2");
    require(schedule_length >= 1, ErrorCode::config_error, "schedule_length must be at least 1");
    require(forest.tree_count >= 1 && forest.tuning_tree_count >= 0, ErrorCode::config_error,
            "forest tree counts must be positive");
    require(!forest.max_features.empty(), ErrorCode::config_error, "forest max_features grid is empty");
    for (const auto& s : forest.max_features) {
        try {
            resolve_max_features(s, 1);
        } catch (const Error& e) {
            fail(ErrorCode::config_error, e.what());
        }
    }
    require(jobs >= 1, ErrorCode::config_error, "jobs must be at least 1");
    try {
        network.validate();
        train.validate();
    } catch (const Error& e) {
        fail(ErrorCode::config_error, e.what());
    }
}

nlohmann::json BenchConfig::to_json() const {
    json ds = json::array();
    for (const auto& d : datasets) {
        json j = {{"name", d.name}, {"kind", d.kind}};
        if (d.kind == "csv") {
            j["path"] = d.path.generic_string();
            if (const auto* s = std::get_if<std::string>(&d.label)) j["label"] = *s;
            else j["label"] = std::get<int>(d.label);
        } else {
            j["samples"] = d.xor_samples;
            j["sigma"] = d.xor_sigma;
        }
        ds.push_back(std::move(j));
    }
    json net = network.to_json();
    json tr = train.to_json();
    tr.erase("optimizer");
    tr.erase("l2");
    tr.erase("seed");
    return {{"seed", seed},
            {"out", out.generic_string()},
            {"jobs", jobs},
            {"sample_cap", sample_cap},
            {"folds", folds},
            {"schedule_length", schedule_length},
            {"families", families},
            {"forest",
             {{"tree_count", forest.tree_count},
              {"tuning_tree_count", forest.tuning_tree_count},
              {"max_features", forest.max_features}}},
            {"network", net},
            {"train", tr},
            {"dataset", ds}};
}

BenchConfig BenchConfig::from_json(const nlohmann::json& j) {
    BenchConfig c;
    check_keys(j, "config",
               {"seed", "out", "jobs", "sample_cap", "folds", "schedule_length", "families", "forest", "network", "train",
                "dataset"});
    if (j.contains("seed")) {
        const auto& s = j.at("seed");
        require(s.is_number_integer() && (s.is_number_unsigned() || s.get<std::int64_t>() >= 0), ErrorCode::config_error,
                "seed must be a non-negative integer");
        c.seed = s.get<std::uint64_t>();
    }
    std::string out = c.out.string();
    read(j, "out", out, "config");
    c.out = out;
    read(j, "jobs", c.jobs, "config");
    read(j, "sample_cap", c.sample_cap, "config");
    read(j, "folds", c.folds, "config");
    read(j, "schedule_length", c.schedule_length, "config");
    if (j.contains("families")) {
        require(j.at("families").is_array(), ErrorCode::config_error, "families must be an array");
        c.families.clear();
        for (const auto& f : j.at("families")) {
            require(f.is_string(), ErrorCode::config_error, "families entries must be strings");
            c.families.push_back(f.get<std::string>());
        }
    }
    if (j.contains("forest")) {
        const auto& f = j.at("forest");
        check_keys(f, "[forest]", {"tree_count", "tuning_tree_count", "max_features"});
        read(f, "tree_count", c.forest.tree_count, "[forest]");
        read(f, "tuning_tree_count", c.forest.tuning_tree_count, "[forest]");
        if (f.contains("max_features")) {
            c.forest.max_features.clear();
            require(f.at("max_features").is_array(), ErrorCode::config_error, "[forest] max_features must be an array");
            for (const auto& m : f.at("max_features")) {
                if (m.is_number_integer()) c.forest.max_features.push_back(std::to_string(m.get<long long>()));
                else if (m.is_string()) c.forest.max_features.push_back(m.get<std::string>());
                else fail(ErrorCode::config_error, "bad max_features entry " + m.dump());
            }
        }
    }
    if (j.contains("network")) {
        const auto& n = j.at("network");
        check_keys(n, "[network]", {"width_min", "width_max", "depth_min", "depth_max", "l2_min", "l2_max", "draws"});
        read(n, "width_min", c.network.width_min, "[network]");
        read(n, "width_max", c.network.width_max, "[network]");
        read(n, "depth_min", c.network.depth_min, "[network]");
        read(n, "depth_max", c.network.depth_max, "[network]");
        read(n, "l2_min", c.network.l2_min, "[network]");
        read(n, "l2_max", c.network.l2_max, "[network]");
        read(n, "draws", c.network.draws, "[network]");
    }
    if (j.contains("train")) {
        const auto& t = j.at("train");
        check_keys(t, "[train]",
                   {"learning_rate", "momentum", "batch_size", "max_epochs", "patience", "validation_fraction"});
        read(t, "learning_rate", c.train.learning_rate, "[train]");
        read(t, "momentum", c.train.momentum, "[train]");
        read(t, "batch_size", c.train.batch_size, "[train]");
        read(t, "max_epochs", c.train.max_epochs, "[train]");
        read(t, "patience", c.train.patience, "[train]");
        read(t, "validation_fraction", c.train.validation_fraction, "[train]");
    }
    if (j.contains("dataset")) {
        require(j.at("dataset").is_array(), ErrorCode::config_error, "dataset must be an array of tables");
        for (const auto& d : j.at("dataset")) {
            check_keys(d, "[[dataset]]", {"name", "kind", "path", "label", "samples", "sigma"});
            DatasetSpec s;
            read(d, "kind", s.kind, "[[dataset]]");
            std::string path;
            read(d, "path", path, "[[dataset]]");
            s.path = path;
            read(d, "name", s.name, "[[dataset]]");
            if (s.name.empty() && !path.empty()) s.name = s.path.stem().string();
            if (s.name.empty() && s.kind == "xor") s.name = "xor";
            if (d.contains("label")) {
                const auto& l = d.at("label");
                if (l.is_string()) s.label = l.get<std::string>();
                else if (l.is_number_integer()) s.label = l.get<int>();
                else fail(ErrorCode::config_error, "label must be a column name or index");
            }
            read(d, "samples", s.xor_samples, "[[dataset]]");
            read(d, "sigma", s.xor_sigma, "[[dataset]]");
            c.datasets.push_back(std::move(s));
        }
    }
    return c;
}

BenchConfig load_bench_config(const std::filesystem::path& path) {
    BenchConfig c = BenchConfig::from_json(load_toml(path));
    for (auto& d : c.datasets)
        if (d.kind == "csv" && d.path.is_relative()) d.path = path.parent_path() / d.path;
    return c;
}

std::string RunRecord::key() const {
    return dataset + "/" + family + "/" + std::to_string(fold) + "/" + std::to_string(size);
}

nlohmann::json RunRecord::to_json() const {
    json j = {{"dataset", dataset},   {"family", family},     {"hyperparameters", hyperparameters},
              {"fold", fold},         {"size", size},         {"kappa", kappa},
              {"ece", ece},           {"accuracy", accuracy}, {"seconds", seconds},
              {"seed", seed},         {"timestamp", timestamp}, {"failed", failed}};
    if (failed) j["error"] = error;
    return j;
}

RunRecord RunRecord::from_json(const nlohmann::json& j) {
    RunRecord r;
    r.dataset = j.at("dataset").get<std::string>();
    r.family = j.at("family").get<std::string>();
    r.hyperparameters = j.value("hyperparameters", json::object());
    r.fold = j.at("fold").get<int>();
    r.size = j.at("size").get<Eigen::Index>();
    r.kappa = j.at("kappa").get<double>();
    r.ece = j.at("ece").get<double>();
    r.accuracy = j.at("accuracy").get<double>();
    r.seconds = j.at("seconds").get<double>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.timestamp = j.value("timestamp", "");
    r.failed = j.value("failed", false);
    r.error = j.value("error", "");
    return r;
}

RecordLog::RecordLog(std::filesystem::path path) : path_(std::move(path)) {
    if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
    std::ofstream touch(path_, std::ios::app);
    require(touch.good(), ErrorCode::unwritable_path, "cannot write '" + path_.string() + "'");
    touch.close();
    // Drop a partial last line left by an interrupted write.
    std::string text;
    {
        std::ifstream in(path_, std::ios::binary);
        text.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    }
    if (!text.empty() && text.back() != '\n') {
        const auto keep = text.rfind('\n');
        std::filesystem::resize_file(path_, keep == std::string::npos ? 0 : keep + 1);
    }
}

void RecordLog::append(const RunRecord& r) {
    const std::string line = r.to_json().dump() + "\n";
    std::lock_guard lock(mutex_);
    std::ofstream out(path_, std::ios::app | std::ios::binary);
    require(out.good(), ErrorCode::unwritable_path, "cannot append to '" + path_.string() + "'");
    out << line;
    out.flush();
}

std::vector<RunRecord> read_records(const std::filesystem::path& path) {
    std::ifstream in(path);
    require(in.good(), ErrorCode::file_not_found, "cannot open records '" + path.string() + "'");
    std::vector<std::string> lines;
    for (std::string line; std::getline(in, line);)
        if (!line.empty() && line.find_first_not_of(" \t\r") != std::string::npos) lines.push_back(line);
    std::vector<RunRecord> out;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        try {
            out.push_back(RunRecord::from_json(json::parse(lines[i])));
        } catch (const std::exception& e) {
            if (i + 1 == lines.size()) break;
            fail(ErrorCode::parse_error, path.string() + " line " + std::to_string(i + 1) + ": " + e.what());
        }
    }
    return out;
}

std::vector<RunRecord> deduplicate(const std::vector<RunRecord>& records) {
    std::map<std::tuple<std::string, std::string, int, Eigen::Index>, RunRecord> latest;
    for (const auto& r : records) latest.insert_or_assign({r.dataset, r.family, r.fold, r.size}, r);
    std::vector<RunRecord> out;
    out.reserve(latest.size());
    for (auto& [k, r] : latest) out.push_back(std::move(r));
    return out;
}

std::string records_csv(const std::vector<RunRecord>& records, bool with_seconds) {
    std::string out = with_seconds ? "dataset,family,fold,size,kappa,ece,accuracy,seconds,seed\n"
                                   : "dataset,family,fold,size,kappa,ece,accuracy,seed\n";
    for (const auto& r : deduplicate(records)) {
        if (r.failed) continue;
        out += csv_field(r.dataset) + "," + csv_field(r.family) + "," + std::to_string(r.fold) + "," +
               std::to_string(r.size) + "," + format_double(r.kappa) + "," + format_double(r.ece) + "," +
               format_double(r.accuracy) + ",";
        if (with_seconds) out += format_double(r.seconds) + ",";
        out += std::to_string(r.seed) + "\n";
    }
    return out;
}

nlohmann::json TuningResult::to_json() const {
    json j = json::object();
    if (has_forest) {
        json scores = json::array();
        for (const auto& [m, s] : forest_scores) scores.push_back({{"max_features", m}, {"mean_kappa", s}});
        j["forest"] = {{"criterion", "gini"}, {"max_features", max_features}, {"scores", scores}};
    }
    if (has_network) j["network"] = polylab::to_json(network);
    return j;
}

TuningResult TuningResult::from_json(const nlohmann::json& j) {
    TuningResult t;
    try {
        if (j.contains("forest")) {
            t.has_forest = true;
            t.max_features = j.at("forest").at("max_features").get<int>();
            for (const auto& s : j.at("forest").at("scores"))
                t.forest_scores.emplace_back(s.at("max_features").get<int>(), s.at("mean_kappa").get<double>());
        }
        if (j.contains("network")) {
            t.has_network = true;
            const auto& n = j.at("network");
            t.network.best_index = n.at("best_index").get<int>();
            t.network.best = draw_from_json(n.at("best"));
            for (const auto& e : n.at("log")) {
                SearchEntry entry;
                entry.draw = draw_from_json(e);
                entry.fold_kappas = e.at("fold_kappas").get<std::vector<double>>();
                entry.score = e.at("score").is_null() ? -std::numeric_limits<double>::infinity() : e.at("score").get<double>();
                entry.error = e.value("error", "");
                t.network.log.push_back(std::move(entry));
            }
        }
    } catch (const json::exception& e) {
        fail(ErrorCode::parse_error, std::string("malformed tuning file: ") + e.what());
    }
    return t;
}

Dataset load_bench_dataset(const DatasetSpec& spec, std::uint64_t seed) {
    Dataset ds;
    if (spec.kind == "xor") {
        ds = gen_gaussian_xor(spec.xor_samples, 1, spec.xor_sigma, derive_seed(seed, "data/" + spec.name)).first;
    } else {
        ds = load_csv(spec.path, spec.label);
    }
    ds.name = spec.name;
    return ds;
}

BenchResult run_benchmark(const BenchConfig& cfg, const BenchProgress& progress) {
    cfg.validate();
    BenchResult result;
    std::filesystem::create_directories(cfg.out);
    const auto config_path = cfg.out / "config.json";
    if (std::filesystem::exists(config_path)) {
        json previous = read_json(config_path);
        previous.erase("jobs");
        previous.erase("out");
        require(previous == config_fingerprint(cfg), ErrorCode::config_error,
                "'" + cfg.out.string() + "' holds a run with a different configuration");
    }
    write_json(config_path, cfg.to_json());
    result.files.push_back(config_path);

    RecordLog log(cfg.out / "records.jsonl");
    std::set<std::string> done;
    for (const auto& r : read_records(log.path())) done.insert(r.key());
    std::mutex progress_mutex;

    for (const auto& spec : cfg.datasets) {
        Dataset ds = downsample(load_bench_dataset(spec, cfg.seed), cfg.sample_cap,
                                derive_seed(cfg.seed, "downsample/" + spec.name));
        ds.name = spec.name;
        const FoldPlan plan = stratified_folds(ds, cfg.folds, derive_seed(cfg.seed, "folds/" + spec.name));
        Eigen::Index fold_size = ds.size();
        std::vector<std::vector<Eigen::Index>> orders;
        for (int f = 0; f < cfg.folds; ++f) {
            const auto train = plan.train_indices(f);
            fold_size = std::min<Eigen::Index>(fold_size, static_cast<Eigen::Index>(train.size()));
            orders.push_back(stratified_order(ds.labels, ds.class_count, train,
                                              derive_seed(cfg.seed, "order/" + spec.name + "/" + std::to_string(f))));
        }
        const SampleSchedule schedule = make_schedule(ds.class_count, fold_size, cfg.schedule_length);

        std::vector<Cell> cells;
        for (const auto& family : cfg.families)
            for (int f = 0; f < cfg.folds; ++f)
                for (const auto size : schedule.sizes) {
                    RunRecord probe;
                    probe.dataset = spec.name;
                    probe.family = family;
                    probe.fold = f;
                    probe.size = size;
                    if (done.contains(probe.key())) ++result.skipped;
                    else cells.push_back({family, f, size});
                }
        if (cells.empty()) continue;

        const auto tuning_path = cfg.out / "tuning" / (spec.name + ".json");
        TuningResult tuning;
        if (std::filesystem::exists(tuning_path)) {
            tuning = TuningResult::from_json(read_json(tuning_path));
        } else {
            tuning = tune(cfg, ds, plan, spec.name);
            write_json(tuning_path, tuning.to_json());
        }
        result.files.push_back(tuning_path);

        parallel_for(cells.size(), cfg.jobs, [&](std::size_t i) {
            const RunRecord r = run_cell(cfg, ds, plan, orders, tuning, cells[i]);
            log.append(r);
            if (progress) {
                std::lock_guard lock(progress_mutex);
                progress(r);
            }
        });
        result.trained += static_cast<int>(cells.size());
    }

    result.records = deduplicate(read_records(log.path()));
    result.files.push_back(log.path());
    write_text(cfg.out / "records.csv", records_csv(result.records));
    result.files.push_back(cfg.out / "records.csv");
    const bool any_ok = std::any_of(result.records.begin(), result.records.end(), [](const RunRecord& r) { return !r.failed; });
    if (any_ok) {
        write_json(cfg.out / "aggregate.json", aggregate(result.records).to_json());
        result.files.push_back(cfg.out / "aggregate.json");
    }
    return result;
}

} // namespace polylab
