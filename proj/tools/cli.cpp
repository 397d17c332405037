#include "cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <optional>

#include "polylab/bench.hpp"
#include "polylab/data.hpp"
#include "polylab/error.hpp"
#include "polylab/forest.hpp"
#include "polylab/io.hpp"
#include "polylab/metrics.hpp"
#include "polylab/network.hpp"
#include "polylab/partition.hpp"
#include "polylab/random.hpp"
#include "polylab/render.hpp"
#include "polylab/toml.hpp"

namespace polylab::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag, const std::optional<std::uint64_t>& config = {}) {
    if (flag) return *flag;
    if (config) return *config;
    if (const char* env = std::getenv("POLYLAB_SEED"); env != nullptr && *env != '\0') {
        try {
            std::size_t used = 0;
            const std::string text(env);
            const auto v = std::stoull(text, &used, 10);
            if (used == text.size() && text.front() != '-') return v;
        } catch (const std::exception&) {
        }
        throw UsageError("POLYLAB_SEED must be a non-negative integer, got '" + std::string(env) + "'");
    }
    return 0;
}

void announce(std::ostream& out, const json& config, std::uint64_t seed) {
    out << "config: " << config.dump() << "\n";
    out << "seed: " << seed << "\n";
}

void write_manifest(const fs::path& dir, const std::string& command, std::uint64_t seed, const json& config,
                    std::vector<fs::path> files) {
    std::vector<std::string> names;
    for (const auto& f : files) names.push_back(fs::relative(f, dir).generic_string());
    std::sort(names.begin(), names.end());
    names.erase(std::unique(names.begin(), names.end()), names.end());
    write_json(dir / "manifest.json", {{"command", command}, {"seed", seed}, {"config", config}, {"files", names}});
}

// Fills options missing from the command line with values from a TOML file keyed by
// flag name. Relative `path_keys` values resolve against the file's directory.
void apply_config_file(CLI::App& cmd, const std::string& path, const std::vector<std::string>& path_keys) {
    json values = load_toml(path);
    const fs::path base = fs::path(path).parent_path();
    for (const auto& k : path_keys)
        if (values.contains(k) && values[k].is_string() && fs::path(values[k].get<std::string>()).is_relative())
            values[k] = (base / values[k].get<std::string>()).string();
    auto text = [](const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); };
    for (const auto& [key, value] : values.items()) {
        std::string name = key;
        std::replace(name.begin(), name.end(), '_', '-');
        CLI::Option* opt = name == "config" || name == "help" ? nullptr : cmd.get_option_no_throw("--" + name);
        if (opt == nullptr) throw UsageError("unknown key '" + key + "' in " + path);
        if (opt->count() > 0) continue;
        try {
            if (value.is_array()) {
                for (const auto& v : value) opt->add_result(text(v));
            } else {
                opt->add_result(text(value));
            }
            opt->run_callback();
        } catch (const CLI::Error& e) {
            throw UsageError("'" + key + "' in " + path + ": " + e.what());
        }
    }
}

ColumnRef label_ref(const std::string& label, int label_index) {
    if (label_index >= 0) return label_index;
    return label;
}

int exit_code_for(ErrorCode code) {
    switch (code) {
    case ErrorCode::training_diverged:
    case ErrorCode::unwritable_path:
    case ErrorCode::not_normalized:
        return runtime_failure;
    default:
        return usage_error;
    }
}

std::string fmt(double v, int digits = 6) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

// --- gen-xor -------------------------------------------------------------

struct GenXorArgs {
    long long n_train = 4096;
    long long n_test = 1000;
    double sigma = 0.5;
    std::optional<std::uint64_t> seed;
    std::string out = "xor-data";
};

void add_gen_xor(CLI::App& app, GenXorArgs& a, std::function<void()>& action, std::ostream& out) {
    auto* cmd = app.add_subcommand("gen-xor", "Generate a Gaussian XOR train/test pair");
    cmd->add_option("--n-train", a.n_train, "Training samples")->check(CLI::PositiveNumber)->capture_default_str();
    cmd->add_option("--n-test", a.n_test, "Test samples")->check(CLI::PositiveNumber)->capture_default_str();
    cmd->add_option("--sigma", a.sigma, "Standard deviation of every Gaussian")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    cmd->add_option("--seed", a.seed, "Master seed (falls back to POLYLAB_SEED, then 0)");
    cmd->add_option("--out", a.out, "Output directory")->capture_default_str();
    cmd->callback([&] {
        action = [&] {
            const auto seed = resolve_seed(a.seed);
            const json config = {{"n_train", a.n_train}, {"n_test", a.n_test}, {"sigma", a.sigma}, {"out", a.out}};
            announce(out, config, seed);
            auto [train, test] = gen_gaussian_xor(a.n_train, a.n_test, a.sigma, derive_seed(seed, "data"));
            const fs::path dir = a.out;
            save_csv(train, dir / "train.csv");
            save_csv(test, dir / "test.csv");
            out << "bayes accuracy: " << fmt(xor_bayes_accuracy(a.sigma)) << "\n";
            write_manifest(dir, "gen-xor", seed, config, {dir / "train.csv", dir / "test.csv"});
            out << "wrote " << (dir / "train.csv").string() << ", " << (dir / "test.csv").string() << "\n";
        };
    });
}

// --- train ---------------------------------------------------------------

struct TrainArgs {
    std::string config;
    std::string data;
    std::string test;
    std::string label = "label";
    int label_index = -1;
    std::string family = "forest";
    int trees = 500;
    std::string max_features = "sqrt";
    bool no_bootstrap = false;
    std::vector<int> hidden{100};
    TrainConfig train;
    std::optional<std::uint64_t> seed;
    int jobs = 1;
    std::string out = "model-out";
};

void add_train(CLI::App& app, TrainArgs& a, std::function<void()>& action, std::ostream& out) {
    auto* cmd = app.add_subcommand("train", "Train a forest or a network on a CSV dataset");
    cmd->add_option("--config", a.config, "TOML file with values for these flags")->check(CLI::ExistingFile);
    cmd->add_option("--data", a.data, "Training CSV (required here or in --config)")->check(CLI::ExistingFile);
    cmd->add_option("--test", a.test, "Optional test CSV to evaluate on")->check(CLI::ExistingFile);
    cmd->add_option("--label", a.label, "Label column name")->capture_default_str();
    cmd->add_option("--label-index", a.label_index, "Label column index (overrides --label)")
        ->check(CLI::NonNegativeNumber);
    cmd->add_option("--family", a.family, "Model family")
        ->check(CLI::IsMember({"forest", "network"}))
        ->capture_default_str();
    cmd->add_option("--trees", a.trees, "Forest: number of trees")->check(CLI::PositiveNumber)->capture_default_str();
    cmd->add_option("--max-features", a.max_features,
                    "Forest: features per split (sqrt, quarter, third, two-thirds, all or an integer)")
        ->capture_default_str();
    cmd->add_flag("--no-bootstrap", a.no_bootstrap, "Forest: grow every tree on the full sample");
    cmd->add_option("--hidden", a.hidden, "Network: hidden widths, comma separated")
        ->delimiter(',')
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    cmd->add_option("--l2", a.train.l2, "Network: L2 penalty")->check(CLI::NonNegativeNumber)->capture_default_str();
    cmd->add_option("--learning-rate", a.train.learning_rate, "Network: SGD step size")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    cmd->add_option("--momentum", a.train.momentum, "Network: momentum")->check(CLI::Range(0.0, 1.0))->capture_default_str();
    cmd->add_option("--batch-size", a.train.batch_size, "Network: minibatch size")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    cmd->add_option("--max-epochs", a.train.max_epochs, "Network: epoch cap")->check(CLI::PositiveNumber)->capture_default_str();
    cmd->add_option("--patience", a.train.patience, "Network: early-stopping patience")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    cmd->add_option("--validation-fraction", a.train.validation_fraction, "Network: held-out fraction for early stopping")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
    cmd->add_option("--seed", a.seed, "Master seed (falls back to POLYLAB_SEED, then 0)");
    cmd->add_option("--jobs", a.jobs, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
    cmd->add_option("--out", a.out, "Output directory")->capture_default_str();
    cmd->callback([&, cmd] {
        action = [&, cmd] {
            if (!a.config.empty()) apply_config_file(*cmd, a.config, {"data", "test"});
            if (a.data.empty()) throw UsageError("--data is required");
            const auto seed = resolve_seed(a.seed);
            const Dataset ds = load_csv(a.data, label_ref(a.label, a.label_index));
            json config = {{"data", a.data}, {"family", a.family}, {"out", a.out}};
            json model_json;
            std::function<Eigen::MatrixXd(const Eigen::MatrixXd&)> proba;
            const std::uint64_t model_seed = derive_seed(seed, "model");
            double seconds = 0.0;
            if (a.family == "forest") {
                const int m = resolve_max_features(a.max_features, ds.dimension());
                config["trees"] = a.trees;
                config["max_features"] = m;
                config["bootstrap"] = !a.no_bootstrap;
                announce(out, config, seed);
                auto [model, s] = timed([&] {
                    return train_forest(ds, a.trees, m, model_seed, {!a.no_bootstrap, a.jobs});
                });
                seconds = s;
                model_json = to_json(model);
                proba = [model = std::move(model)](const Eigen::MatrixXd& x) { return forest_posterior_batch(model, x); };
            } else {
                TrainConfig cfg = a.train;
                cfg.seed = model_seed;
                cfg.validate();
                config["hidden"] = a.hidden;
                config["train"] = cfg.to_json();
                announce(out, config, seed);
                TrainReport report;
                auto [model, s] = timed([&] { return train_network(ds, a.hidden, cfg, &report); });
                seconds = s;
                out << "epochs: " << report.epochs_run << " (best " << report.best_epoch << ")\n";
                model_json = to_json(model);
                proba = [model = std::move(model)](const Eigen::MatrixXd& x) { return predict_proba_batch(model, x); };
            }
            const fs::path dir = a.out;
            std::vector<fs::path> files{dir / "model.json", dir / "metrics.json"};
            write_json(dir / "model.json", model_json);
            json metrics = {{"train_accuracy", accuracy(argmax_rows(proba(ds.features)), ds.labels)},
                            {"seconds", seconds}};
            if (!a.test.empty()) {
                const Dataset test = load_csv(a.test, label_ref(a.label, a.label_index));
                require(test.dimension() == ds.dimension(), ErrorCode::dimension_mismatch,
                        "test data has " + std::to_string(test.dimension()) + " features, training data " +
                            std::to_string(ds.dimension()));
                const Eigen::MatrixXd p = proba(test.features);
                const auto pred = argmax_rows(p);
                metrics["test_accuracy"] = accuracy(pred, test.labels);
                metrics["test_kappa"] = cohen_kappa(test.labels, pred, std::max(ds.class_count, test.class_count)).value;
                if (p.cols() == test.class_count || test.class_count <= p.cols())
                    metrics["test_ece"] = ece(p, test.labels, 40);
            }
            write_json(dir / "metrics.json", metrics);
            write_manifest(dir, "train", seed, config, files);
            out << "metrics: " << metrics.dump() << "\n";
        };
    });
}

// --- partition-map -------------------------------------------------------

struct PartitionArgs {
    std::string model;
    std::string data;
    std::string label = "label";
    int label_index = -1;
    std::string mode = "unique-color";
    int layer = -1;
    int grid = 256;
    bool exact = false;
    std::vector<double> domain;
    double size = 512.0;
    std::optional<std::uint64_t> seed;
    int jobs = 1;
    std::string out = "partition-out";
};

template <class Model>
std::vector<fs::path> render_partition(const Model& model, const PartitionArgs& a, const std::optional<Dataset>& data,
                                       int bits_per_symbol, std::ostream& out) {
    const RenderMode mode = parse_render_mode(a.mode);
    const bool need_votes = mode != RenderMode::unique_color;
    if (need_votes && !data) throw UsageError("--mode " + a.mode + " needs --data");
    if (data)
        require(data->dimension() == model.dimension, ErrorCode::dimension_mismatch,
                "data has " + std::to_string(data->dimension()) + " features, model expects " +
                    std::to_string(model.dimension));
    require(model.dimension == 2, ErrorCode::invalid_argument,
            std::string(a.exact ? "--exact" : "partition maps") + " need a 2-D model, got d=" +
                std::to_string(model.dimension));
    Box2 domain;
    if (!a.domain.empty()) {
        if (a.domain.size() != 4) throw UsageError("--domain takes xmin,xmax,ymin,ymax");
        domain = {{a.domain[0], a.domain[2]}, {a.domain[1], a.domain[3]}};
    } else if (data) {
        domain = data_domain(data->features);
    } else {
        throw UsageError("partition-map needs --data or --domain");
    }
    domain.validate();
    const int layer = a.layer < 0 ? max_layer_limit(model) : a.layer;
    const RenderOptions options{mode, a.size};
    const fs::path dir = a.out;
    std::vector<fs::path> files{dir / "partition.svg"};
    if (a.exact) {
        auto cells = enumerate_regions_2d(model, domain, layer);
        if (data) cell_posteriors(cells, model, *data);
        std::vector<std::vector<RegionCell>> coarser;
        if (mode == RenderMode::layer_overlay)
            for (int l = 1; l < layer; ++l) coarser.push_back(enumerate_regions_2d(model, domain, l));
        write_text(dir / "partition.svg", render_cells_svg(cells, domain, coarser, options));
        write_json(dir / "regions.json", regions_json(cells, bits_per_symbol));
        files.push_back(dir / "regions.json");
        out << "regions: " << cells.size() << "\n";
    } else {
        const GridLabels grid = label_grid(model, domain, a.grid, layer, a.jobs);
        std::vector<RegionVote> votes;
        if (data) votes = grid_posteriors(grid, model, *data);
        std::vector<GridLabels> coarser;
        if (mode == RenderMode::layer_overlay)
            for (int l = 1; l < layer; ++l) coarser.push_back(label_grid(model, domain, a.grid, l, a.jobs));
        write_text(dir / "partition.svg", render_grid_svg(grid, data ? &votes : nullptr, coarser, options));
        out << "regions: " << grid.region_count() << "\n";
    }
    out << "layer: " << layer << "\n";
    return files;
}

void add_partition_map(CLI::App& app, PartitionArgs& a, std::function<void()>& action, std::ostream& out) {
    auto* cmd = app.add_subcommand("partition-map", "Render the partition cells of a trained 2-D model as SVG");
    cmd->add_option("--model", a.model, "Model JSON written by train")->required()->check(CLI::ExistingFile);
    cmd->add_option("--data", a.data, "Training CSV for cell votes and the default domain")->check(CLI::ExistingFile);
    cmd->add_option("--label", a.label, "Label column name")->capture_default_str();
    cmd->add_option("--label-index", a.label_index, "Label column index (overrides --label)")
        ->check(CLI::NonNegativeNumber);
    cmd->add_option("--mode", a.mode, "Coloring")
        ->check(CLI::IsMember({"unique-color", "class-tint", "layer-overlay"}))
        ->capture_default_str();
    cmd->add_option("--layer", a.layer, "Layer limit L (default: deepest)")->check(CLI::NonNegativeNumber);
    cmd->add_option("--grid", a.grid, "Grid resolution per axis")->check(CLI::Range(2, 8192))->capture_default_str();
    cmd->add_flag("--exact", a.exact, "Enumerate cells exactly instead of grid labelling");
    cmd->add_option("--domain", a.domain, "Domain box xmin,xmax,ymin,ymax (default: data bounds + 10%)")
        ->delimiter(',')
        ->expected(4);
    cmd->add_option("--size", a.size, "Canvas edge in SVG units")->check(CLI::PositiveNumber)->capture_default_str();
    cmd->add_option("--seed", a.seed, "Master seed (falls back to POLYLAB_SEED, then 0)");
    cmd->add_option("--jobs", a.jobs, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
    cmd->add_option("--out", a.out, "Output directory")->capture_default_str();
    cmd->callback([&] {
        action = [&] {
            const auto seed = resolve_seed(a.seed);
            const json config = {{"model", a.model}, {"data", a.data},   {"mode", a.mode},   {"layer", a.layer},
                                 {"grid", a.grid},   {"exact", a.exact}, {"domain", a.domain}, {"out", a.out}};
            announce(out, config, seed);
            std::optional<Dataset> data;
            if (!a.data.empty()) data = load_csv(a.data, label_ref(a.label, a.label_index));
            const json j = read_json(a.model);
            const std::string kind = j.value("kind", "");
            std::vector<fs::path> files;
            if (kind == "forest") files = render_partition(forest_from_json(j), a, data, 2, out);
            else if (kind == "network") files = render_partition(network_from_json(j), a, data, 1, out);
            else fail(ErrorCode::parse_error, "model file has unknown kind '" + kind + "'");
            write_manifest(a.out, "partition-map", seed, config, files);
            out << "wrote " << files.front().string() << "\n";
        };
    });
}

// --- bench ---------------------------------------------------------------

struct BenchArgs {
    std::string config;
    std::vector<std::string> csv;
    bool xor_data = false;
    std::vector<std::string> families;
    long long sample_cap = 0;
    int folds = 0;
    int schedule_length = 0;
    int trees = 0;
    int tuning_trees = -1;
    int draws = 0;
    int max_epochs = 0;
    std::optional<std::uint64_t> seed;
    int jobs = 0;
    std::string out;
};

void add_bench(CLI::App& app, BenchArgs& a, std::function<void()>& action, std::ostream& out) {
    auto* cmd = app.add_subcommand("bench", "Run the sample-size benchmark sweep");
    cmd->add_option("--config", a.config, "TOML benchmark configuration")->check(CLI::ExistingFile);
    cmd->add_option("--csv", a.csv, "Add a CSV dataset with a 'label' column (repeatable)")->check(CLI::ExistingFile);
    cmd->add_flag("--xor", a.xor_data, "Add the Gaussian XOR dataset (4096 samples, sigma 0.5)");
    cmd->add_option("--families", a.families, "Model families, comma separated")
        ->delimiter(',')
        ->check(CLI::IsMember({"forest", "network"}));
    cmd->add_option("--sample-cap", a.sample_cap, "Downsampling cap (default 10000)")->check(CLI::PositiveNumber);
    cmd->add_option("--folds", a.folds, "Cross-validation folds (default 5)")->check(CLI::Range(2, 1000));
    cmd->add_option("--schedule-length", a.schedule_length, "Sample sizes per fold (default 8)")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--trees", a.trees, "Trees per forest (default 500)")->check(CLI::PositiveNumber);
    cmd->add_option("--tuning-trees", a.tuning_trees, "Trees per forest while tuning (default: --trees)")
        ->check(CLI::NonNegativeNumber);
    cmd->add_option("--draws", a.draws, "Network search draws (default 20)")->check(CLI::PositiveNumber);
    cmd->add_option("--max-epochs", a.max_epochs, "Network epoch cap (default 200)")->check(CLI::PositiveNumber);
    cmd->add_option("--seed", a.seed, "Master seed (falls back to the config, POLYLAB_SEED, then 0)");
    cmd->add_option("--jobs", a.jobs, "Worker threads (default 1)")->check(CLI::PositiveNumber);
    cmd->add_option("--out", a.out, "Output directory (default bench-out)");
    cmd->callback([&] {
        action = [&] {
            BenchConfig cfg;
            std::optional<std::uint64_t> config_seed;
            if (!a.config.empty()) {
                cfg = load_bench_config(a.config);
                // The config seed only counts when the file sets one.
                if (load_toml(a.config).contains("seed")) config_seed = cfg.seed;
            }
            for (const auto& path : a.csv) {
                DatasetSpec s;
                s.path = path;
                s.name = fs::path(path).stem().string();
                cfg.datasets.push_back(s);
            }
            if (a.xor_data) {
                DatasetSpec s;
                s.kind = "xor";
                s.name = "xor";
                cfg.datasets.push_back(s);
            }
            if (!a.families.empty()) cfg.families = a.families;
            if (a.sample_cap > 0) cfg.sample_cap = a.sample_cap;
            if (a.folds > 0) cfg.folds = a.folds;
            if (a.schedule_length > 0) cfg.schedule_length = a.schedule_length;
            if (a.trees > 0) cfg.forest.tree_count = a.trees;
            if (a.tuning_trees >= 0) cfg.forest.tuning_tree_count = a.tuning_trees;
            if (a.draws > 0) cfg.network.draws = a.draws;
            if (a.max_epochs > 0) cfg.train.max_epochs = a.max_epochs;
            if (a.jobs > 0) cfg.jobs = a.jobs;
            if (!a.out.empty()) cfg.out = a.out;
            cfg.seed = resolve_seed(a.seed, config_seed);
            cfg.validate();
            announce(out, cfg.to_json(), cfg.seed);
            const auto result = run_benchmark(cfg, [&](const RunRecord& r) {
                out << r.key() << (r.failed ? " failed: " + r.error : " kappa=" + fmt(r.kappa, 4)) << "\n";
            });
            write_manifest(cfg.out, "bench", cfg.seed, cfg.to_json(), result.files);
            out << "trained " << result.trained << ", skipped " << result.skipped << ", records "
                << result.records.size() << "\n";
        };
    });
}

// --- plot / report -------------------------------------------------------

struct PlotArgs {
    std::string records;
    std::string metric = "kappa";
    std::optional<std::uint64_t> seed;
    std::string out = "plots";
};

void add_plot(CLI::App& app, PlotArgs& a, std::function<void()>& action, std::ostream& out) {
    auto* cmd = app.add_subcommand("plot", "Plot a metric against training sample size");
    cmd->add_option("--records", a.records, "Record log (records.jsonl)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--metric", a.metric, "Metric to plot")
        ->check(CLI::IsMember({"kappa", "ece", "time"}))
        ->capture_default_str();
    cmd->add_option("--seed", a.seed, "Master seed (falls back to POLYLAB_SEED, then 0)");
    cmd->add_option("--out", a.out, "Output directory")->capture_default_str();
    cmd->callback([&] {
        action = [&] {
            const auto seed = resolve_seed(a.seed);
            const json config = {{"records", a.records}, {"metric", a.metric}, {"out", a.out}};
            announce(out, config, seed);
            const auto records = read_records(a.records);
            const Aggregate agg = aggregate(records);
            const fs::path file = fs::path(a.out) / (a.metric + ".svg");
            write_text(file, render_metric_svg(agg, parse_plot_metric(a.metric)));
            write_manifest(a.out, "plot", seed, config, {file});
            out << "wrote " << file.string() << "\n";
        };
    });
}

struct ReportArgs {
    std::string records;
    std::string format = "markdown";
    std::optional<std::uint64_t> seed;
    std::string out = "report";
};

void add_report(CLI::App& app, ReportArgs& a, std::function<void()>& action, std::ostream& out) {
    auto* cmd = app.add_subcommand("report", "Summarize a record log as Markdown or HTML tables");
    cmd->add_option("--records", a.records, "Record log (records.jsonl)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--format", a.format, "Output format")
        ->check(CLI::IsMember({"markdown", "html"}))
        ->capture_default_str();
    cmd->add_option("--seed", a.seed, "Master seed (falls back to POLYLAB_SEED, then 0)");
    cmd->add_option("--out", a.out, "Output directory")->capture_default_str();
    cmd->callback([&] {
        action = [&] {
            const auto seed = resolve_seed(a.seed);
            const json config = {{"records", a.records}, {"format", a.format}, {"out", a.out}};
            announce(out, config, seed);
            const auto records = read_records(a.records);
            const bool html = a.format == "html";
            const std::string text = html ? report_html(records) : report_markdown(records);
            const fs::path file = fs::path(a.out) / (html ? "report.html" : "report.md");
            write_text(file, text);
            write_manifest(a.out, "report", seed, config, {file});
            const bool any = std::any_of(records.begin(), records.end(), [](const RunRecord& r) { return !r.failed; });
            if (!any) out << "no records\n";
            else out << "wrote " << file.string() << "\n";
        };
    });
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Decision forests, ReLU networks and their partition cells", "polylab"};
    app.require_subcommand(1);
    app.fallthrough(false);

    std::function<void()> action;
    GenXorArgs gen_xor;
    TrainArgs train;
    PartitionArgs partition;
    BenchArgs bench;
    PlotArgs plot;
    ReportArgs report;
    add_gen_xor(app, gen_xor, action, out);
    add_train(app, train, action, out);
    add_partition_map(app, partition, action, out);
    add_bench(app, bench, action, out);
    add_plot(app, plot, action, out);
    add_report(app, report, action, out);

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return usage_error;
    }

    try {
        if (action) action();
        return ok;
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n";
        return usage_error;
    } catch (const Error& e) {
        err << "error (" << to_string(e.code()) << "): " << e.what() << "\n";
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return runtime_failure;
    }
}

} // namespace polylab::cli
