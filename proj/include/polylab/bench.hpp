#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "polylab/data.hpp"
#include "polylab/forest.hpp"
#include "polylab/network.hpp"

namespace polylab {

struct DatasetSpec {
    std::string name;
    std::string kind = "csv";  ///< "csv" or "xor"
    std::filesystem::path path;
    ColumnRef label = std::string("label");
    Eigen::Index xor_samples = 4096;
    double xor_sigma = 0.5;
};

struct ForestGrid {
    int tree_count = 500;
    /// Trees per forest while tuning; 0 means tree_count.
    int tuning_tree_count = 0;
    std::vector<std::string> max_features{"sqrt", "quarter", "third", "two-thirds", "all"};
};

struct BenchConfig {
    std::vector<DatasetSpec> datasets;
    std::vector<std::string> families{"forest", "network"};
    Eigen::Index sample_cap = 10000;
    int folds = 5;
    int schedule_length = 8;
    ForestGrid forest;
    SearchSpace network;
    /// Training settings for every network fit; l2 and seed are overridden per run.
    TrainConfig train;
    std::uint64_t seed = 0;
    std::filesystem::path out = "bench-out";
    int jobs = 1;

    void validate() const;
    nlohmann::json to_json() const;
    static BenchConfig from_json(const nlohmann::json& j);
};

/// Reads a TOML config; relative dataset paths resolve against the file's directory.
BenchConfig load_bench_config(const std::filesystem::path& path);

struct RunRecord {
    std::string dataset;
    std::string family;
    nlohmann::json hyperparameters = nlohmann::json::object();
    int fold = 0;
    Eigen::Index size = 0;
    double kappa = 0.0;
    double ece = 0.0;
    double accuracy = 0.0;
    double seconds = 0.0;
    std::uint64_t seed = 0;
    std::string timestamp;
    bool failed = false;
    std::string error;

    /// "dataset/family/fold/size"
    std::string key() const;
    nlohmann::json to_json() const;
    static RunRecord from_json(const nlohmann::json& j);
};

/// Append-only JSON-lines log; appends are serialized and flushed per record.
class RecordLog {
public:
    explicit RecordLog(std::filesystem::path path);

    void append(const RunRecord& r);
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
    std::mutex mutex_;
};

/// Parses a record log. A truncated final line (interrupted write) is ignored.
std::vector<RunRecord> read_records(const std::filesystem::path& path);

/// Keeps the last record per key, sorted by (dataset, family, fold, size).
std::vector<RunRecord> deduplicate(const std::vector<RunRecord>& records);

/// CSV with columns dataset,family,fold,size,kappa,ece,accuracy,seconds,seed.
/// Failed records are skipped; `with_seconds = false` drops the wall-time column.
std::string records_csv(const std::vector<RunRecord>& records, bool with_seconds = true);

struct TuningResult {
    int max_features = 0;
    std::vector<std::pair<int, double>> forest_scores;  ///< (max_features, mean fold kappa)
    SearchResult network;
    bool has_forest = false;
    bool has_network = false;

    nlohmann::json to_json() const;
    static TuningResult from_json(const nlohmann::json& j);
};

struct BenchResult {
    std::vector<RunRecord> records;  ///< every record in the log after the run, deduplicated
    int trained = 0;                 ///< cells run in this invocation
    int skipped = 0;                 ///< cells already present in the log
    std::vector<std::filesystem::path> files;
};

/// Progress callback, called once per finished cell from the writer.
using BenchProgress = std::function<void(const RunRecord&)>;

Dataset load_bench_dataset(const DatasetSpec& spec, std::uint64_t seed);

/// Runs the full sweep under cfg.out: tuning/<dataset>.json, records.jsonl,
/// records.csv and aggregate.json. Throws config_error when cfg.out already holds
/// a run with a different configuration.
BenchResult run_benchmark(const BenchConfig& cfg, const BenchProgress& progress = {});

/// numpy-style linear percentile, p in [0, 100].
double percentile(std::vector<double> values, double p);

/// Per (dataset, family, size): fold means, and median wall time.
struct GroupStat {
    std::string dataset;
    std::string family;
    Eigen::Index size = 0;
    int count = 0;
    double kappa = 0.0;
    double ece = 0.0;
    double accuracy = 0.0;
    double seconds = 0.0;
};

/// Across-dataset summary of one family at one common size.
struct CurvePoint {
    std::string family;
    double size = 0.0;
    int datasets = 0;
    double kappa_mean = 0.0, kappa_p25 = 0.0, kappa_p75 = 0.0;
    double ece_mean = 0.0, ece_p25 = 0.0, ece_p75 = 0.0;
    double seconds_median = 0.0, seconds_p25 = 0.0, seconds_p75 = 0.0;
};

struct Aggregate {
    std::vector<GroupStat> groups;
    std::vector<CurvePoint> curves;

    nlohmann::json to_json() const;
};

/// Common sizes are the union of every dataset's sizes per family; each dataset's
/// curve is interpolated linearly in log size (log time for seconds) and only
/// contributes inside its own size range. Throws empty_input.
Aggregate aggregate(const std::vector<RunRecord>& records);

enum class PlotMetric { kappa, ece, time };

PlotMetric parse_plot_metric(const std::string& name);

/// Line chart: thin per-dataset lines, thick mean (median for time) lines and a
/// 25-75 percentile band per family. Log x; log y for time.
std::string render_metric_svg(const Aggregate& agg, PlotMetric metric);

/// Markdown summary tables; "no records" when the log is empty.
std::string report_markdown(const std::vector<RunRecord>& records);
std::string report_html(const std::vector<RunRecord>& records);

} // namespace polylab
