#include "polylab/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "polylab/error.hpp"
#include "polylab/random.hpp"

namespace polylab {

std::string_view to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::invalid_argument: return "invalid-argument";
    case ErrorCode::file_not_found: return "file-not-found";
    case ErrorCode::missing_column: return "missing-column";
    case ErrorCode::non_numeric_feature: return "non-numeric-feature";
    case ErrorCode::single_class: return "single-class";
    case ErrorCode::stratification_infeasible: return "stratification-infeasible";
    case ErrorCode::dimension_mismatch: return "dimension-mismatch";
    case ErrorCode::training_diverged: return "training-diverged";
    case ErrorCode::layer_out_of_range: return "layer-out-of-range";
    case ErrorCode::unwritable_path: return "unwritable-path";
    case ErrorCode::empty_input: return "empty-input";
    case ErrorCode::not_normalized: return "not-normalized";
    case ErrorCode::config_error: return "config-error";
    case ErrorCode::parse_error: return "parse-error";
    }
    return "unknown";
}

void Dataset::validate() const {
    require(features.rows() >= 1 && features.cols() >= 1, ErrorCode::invalid_argument,
            "dataset needs at least one row and one column");
    require(static_cast<Eigen::Index>(labels.size()) == features.rows(), ErrorCode::invalid_argument,
            "label count does not match row count");
    require(class_count >= 1, ErrorCode::invalid_argument, "class_count must be positive");
    for (int y : labels) {
        require(y >= 0 && y < class_count, ErrorCode::invalid_argument,
                "label " + std::to_string(y) + " outside 0.." + std::to_string(class_count - 1));
    }
    require(features.allFinite(), ErrorCode::invalid_argument, "non-finite feature value");
}

std::vector<Eigen::Index> Dataset::class_histogram() const {
    std::vector<Eigen::Index> hist(static_cast<std::size_t>(class_count), 0);
    for (int y : labels) ++hist[static_cast<std::size_t>(y)];
    return hist;
}

Dataset Dataset::subset(std::span<const Eigen::Index> indices) const {
    Dataset out;
    out.features.resize(static_cast<Eigen::Index>(indices.size()), features.cols());
    out.labels.reserve(indices.size());
    for (std::size_t r = 0; r < indices.size(); ++r) {
        out.features.row(static_cast<Eigen::Index>(r)) = features.row(indices[r]);
        out.labels.push_back(labels[static_cast<std::size_t>(indices[r])]);
    }
    out.class_count = class_count;
    out.name = name;
    out.feature_names = feature_names;
    out.class_names = class_names;
    return out;
}

nlohmann::json summary_json(const Dataset& ds) {
    return {{"name", ds.name},
            {"n", ds.size()},
            {"d", ds.dimension()},
            {"class_count", ds.class_count},
            {"class_histogram", ds.class_histogram()}};
}

std::vector<Eigen::Index> FoldPlan::test_indices(int fold) const {
    std::vector<Eigen::Index> out;
    for (std::size_t i = 0; i < assignments.size(); ++i)
        if (assignments[i] == fold) out.push_back(static_cast<Eigen::Index>(i));
    return out;
}

std::vector<Eigen::Index> FoldPlan::train_indices(int fold) const {
    std::vector<Eigen::Index> out;
    for (std::size_t i = 0; i < assignments.size(); ++i)
        if (assignments[i] != fold) out.push_back(static_cast<Eigen::Index>(i));
    return out;
}

// ---------------------------------------------------------------------------
// Gaussian XOR

namespace {

Dataset sample_xor(Rng& rng, Eigen::Index n, double sigma, const std::string& name) {
    static constexpr double centers[2][2][2] = {{{-1.0, -1.0}, {1.0, 1.0}}, {{1.0, -1.0}, {-1.0, 1.0}}};
    Dataset ds;
    ds.features.resize(n, 2);
    ds.labels.resize(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        const int y = rng.coin() ? 1 : 0;
        const int c = rng.coin() ? 1 : 0;
        ds.features(i, 0) = centers[y][c][0] + sigma * rng.normal();
        ds.features(i, 1) = centers[y][c][1] + sigma * rng.normal();
        ds.labels[static_cast<std::size_t>(i)] = y;
    }
    ds.class_count = 2;
    ds.name = name;
    ds.feature_names = {"x0", "x1"};
    ds.class_names = {"0", "1"};
    return ds;
}

// Class-conditional XOR densities up to the shared 1/(2 pi sigma^2) factor.
std::pair<double, double> xor_class_densities(double x0, double x1, double sigma) {
    const double s = 2.0 * sigma * sigma;
    auto g = [&](double c0, double c1) {
        const double a = x0 - c0;
        const double b = x1 - c1;
        return std::exp(-(a * a + b * b) / s);
    };
    return {0.5 * (g(-1, -1) + g(1, 1)), 0.5 * (g(1, -1) + g(-1, 1))};
}

} // namespace

std::pair<Dataset, Dataset> gen_gaussian_xor(Eigen::Index n_train, Eigen::Index n_test, double sigma,
                                             std::uint64_t seed) {
    require(n_train >= 1 && n_test >= 1, ErrorCode::invalid_argument, "XOR sizes must be positive");
    require(sigma > 0.0 && std::isfinite(sigma), ErrorCode::invalid_argument, "XOR sigma must be positive");
    Rng rng(seed);
    Dataset train = sample_xor(rng, n_train, sigma, "gaussian_xor_train");
    Dataset test = sample_xor(rng, n_test, sigma, "gaussian_xor_test");
    return {std::move(train), std::move(test)};
}

double xor_posterior(double x0, double x1, double sigma) {
    // Work with log-densities so points far from every center stay well defined.
    const double s = 2.0 * sigma * sigma;
    auto sq = [&](double c0, double c1) { return ((x0 - c0) * (x0 - c0) + (x1 - c1) * (x1 - c1)) / s; };
    const double l0[2] = {-sq(-1, -1), -sq(1, 1)};
    const double l1[2] = {-sq(1, -1), -sq(-1, 1)};
    const double m = std::max({l0[0], l0[1], l1[0], l1[1]});
    const double p0 = std::exp(l0[0] - m) + std::exp(l0[1] - m);
    const double p1 = std::exp(l1[0] - m) + std::exp(l1[1] - m);
    return p1 / (p0 + p1);
}

double xor_bayes_accuracy(double sigma, double step, double extent) {
    require(sigma > 0.0 && step > 0.0 && extent > 0.0, ErrorCode::invalid_argument,
            "quadrature parameters must be positive");
    const auto cells = static_cast<long>(std::llround(2.0 * extent / step));
    const double norm = 1.0 / (2.0 * std::numbers::pi * sigma * sigma);
    double total = 0.0;
    for (long i = 0; i < cells; ++i) {
        const double x0 = -extent + (static_cast<double>(i) + 0.5) * step;
        double row = 0.0;
        for (long j = 0; j < cells; ++j) {
            const double x1 = -extent + (static_cast<double>(j) + 0.5) * step;
            const auto [f0, f1] = xor_class_densities(x0, x1, sigma);
            row += 0.5 * std::max(f0, f1);
        }
        total += row;
    }
    return total * norm * step * step;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (quoted) {
            if (ch == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(ch);
            }
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    fields.push_back(std::move(cur));
    return fields;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

bool parse_real(std::string_view text, double& out) {
    text = trim(text);
    if (text.empty()) return false;
    if (text.front() == '+') text.remove_prefix(1);
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
    return ec == std::errc{} && ptr == text.data() + text.size() && std::isfinite(out);
}

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    return out + "\"";
}

} // namespace

Dataset load_csv(const std::filesystem::path& path, const ColumnRef& label_column) {
    std::ifstream in(path);
    require(in.good(), ErrorCode::file_not_found, "cannot open '" + path.string() + "'");

    std::string line;
    require(static_cast<bool>(std::getline(in, line)), ErrorCode::empty_input,
            "'" + path.string() + "' has no header row");
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    std::vector<std::string> header = split_csv_line(line);
    for (auto& h : header) h = std::string(trim(h));

    std::size_t label_idx = 0;
    if (const auto* name = std::get_if<std::string>(&label_column)) {
        const auto it = std::find(header.begin(), header.end(), *name);
        require(it != header.end(), ErrorCode::missing_column,
                "label column '" + *name + "' not found in '" + path.string() + "'");
        label_idx = static_cast<std::size_t>(it - header.begin());
    } else {
        const int idx = std::get<int>(label_column);
        require(idx >= 0 && static_cast<std::size_t>(idx) < header.size(), ErrorCode::missing_column,
                "label column index " + std::to_string(idx) + " out of range");
        label_idx = static_cast<std::size_t>(idx);
    }
    require(header.size() >= 2, ErrorCode::missing_column, "no feature columns besides the label");

    Dataset ds;
    ds.name = path.stem().string();
    for (std::size_t c = 0; c < header.size(); ++c)
        if (c != label_idx) ds.feature_names.push_back(header[c]);
    const auto d = static_cast<Eigen::Index>(ds.feature_names.size());

    std::vector<double> values;
    std::unordered_map<std::string, int> label_ids;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto fields = split_csv_line(line);
        require(fields.size() == header.size(), ErrorCode::parse_error,
                "row " + std::to_string(line_no) + " has " + std::to_string(fields.size()) +
                    " fields, expected " + std::to_string(header.size()));
        for (std::size_t c = 0; c < fields.size(); ++c) {
            if (c == label_idx) continue;
            double v = 0.0;
            require(parse_real(fields[c], v), ErrorCode::non_numeric_feature,
                    "non-numeric feature at row " + std::to_string(line_no) + ", column '" + header[c] +
                        "': '" + fields[c] + "'");
            values.push_back(v);
        }
        const std::string label(trim(fields[label_idx]));
        auto [it, inserted] = label_ids.try_emplace(label, static_cast<int>(label_ids.size()));
        if (inserted) ds.class_names.push_back(label);
        ds.labels.push_back(it->second);
    }
    const auto n = static_cast<Eigen::Index>(ds.labels.size());
    require(n >= 1, ErrorCode::empty_input, "'" + path.string() + "' has no data rows");
    ds.class_count = static_cast<int>(label_ids.size());
    require(ds.class_count >= 2, ErrorCode::single_class, "'" + path.string() + "' contains a single class");
    ds.features = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        values.data(), n, d);
    return ds;
}

void save_csv(const Dataset& ds, const std::filesystem::path& path) {
    std::error_code ec;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
    std::ofstream out(path);
    require(out.good(), ErrorCode::unwritable_path, "cannot write '" + path.string() + "'");
    for (Eigen::Index c = 0; c < ds.dimension(); ++c) {
        const auto cu = static_cast<std::size_t>(c);
        out << csv_escape(cu < ds.feature_names.size() ? ds.feature_names[cu] : "f" + std::to_string(c)) << ',';
    }
    out << "label\n";
    char buf[32];
    for (Eigen::Index r = 0; r < ds.size(); ++r) {
        for (Eigen::Index c = 0; c < ds.dimension(); ++c) {
            std::snprintf(buf, sizeof buf, "%.17g", ds.features(r, c));
            out << buf << ',';
        }
        const auto y = static_cast<std::size_t>(ds.labels[static_cast<std::size_t>(r)]);
        out << (y < ds.class_names.size() ? csv_escape(ds.class_names[y]) : std::to_string(y)) << '\n';
    }
    require(out.good(), ErrorCode::unwritable_path, "failed writing '" + path.string() + "'");
}

// ---------------------------------------------------------------------------
// Sampling plans

Eigen::Index round_count(double value) {
    return std::max<Eigen::Index>(1, static_cast<Eigen::Index>(std::floor(value + 0.5)));
}

std::vector<std::vector<Eigen::Index>> indices_by_class(const Labels& labels, int class_count) {
    std::vector<std::vector<Eigen::Index>> out(static_cast<std::size_t>(class_count));
    for (std::size_t i = 0; i < labels.size(); ++i)
        out[static_cast<std::size_t>(labels[i])].push_back(static_cast<Eigen::Index>(i));
    return out;
}

std::vector<Eigen::Index> proportional_allocation(std::span<const Eigen::Index> weights, Eigen::Index total) {
    const Eigen::Index sum = std::accumulate(weights.begin(), weights.end(), Eigen::Index{0});
    require(sum > 0, ErrorCode::invalid_argument, "allocation weights sum to zero");
    std::vector<Eigen::Index> alloc(weights.size());
    std::vector<std::pair<Eigen::Index, std::size_t>> remainders;
    Eigen::Index used = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        const Eigen::Index scaled = weights[i] * total;
        alloc[i] = scaled / sum;
        used += alloc[i];
        remainders.emplace_back(scaled % sum, i);
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t k = 0; used < total && k < remainders.size(); ++k, ++used) ++alloc[remainders[k].second];
    return alloc;
}

Dataset downsample(const Dataset& ds, Eigen::Index cap, std::uint64_t seed) {
    require(cap >= ds.class_count, ErrorCode::invalid_argument,
            "downsample cap " + std::to_string(cap) + " is below the class count");
    if (ds.size() <= cap) return ds;
    const auto hist = ds.class_histogram();
    const auto alloc = proportional_allocation(hist, cap);
    auto groups = indices_by_class(ds.labels, ds.class_count);
    Rng rng(seed);
    std::vector<Eigen::Index> keep;
    keep.reserve(static_cast<std::size_t>(cap));
    for (std::size_t c = 0; c < groups.size(); ++c) {
        rng.shuffle(std::span(groups[c]));
        keep.insert(keep.end(), groups[c].begin(), groups[c].begin() + alloc[c]);
    }
    std::sort(keep.begin(), keep.end());
    return ds.subset(keep);
}

SampleSchedule make_schedule(int class_count, Eigen::Index fold_size, int length) {
    require(class_count >= 1 && fold_size >= 1 && length >= 2, ErrorCode::invalid_argument,
            "schedule needs positive class count, fold size and length >= 2");
    SampleSchedule s;
    s.class_count = class_count;
    s.fold_size = fold_size;
    const Eigen::Index smallest = 5 * static_cast<Eigen::Index>(class_count);
    if (fold_size <= smallest) {
        s.sizes = {fold_size};
        s.collapsed = true;
        return s;
    }
    const double lo = std::log(static_cast<double>(smallest));
    const double hi = std::log(static_cast<double>(fold_size));
    for (int i = 0; i < length; ++i) {
        const double v = std::exp(lo + i * (hi - lo) / (length - 1));
        s.sizes.push_back(std::clamp(round_count(v), smallest, fold_size));
    }
    s.sizes.front() = smallest;
    s.sizes.back() = fold_size;
    s.sizes.erase(std::unique(s.sizes.begin(), s.sizes.end()), s.sizes.end());
    return s;
}

FoldPlan stratified_folds(const Dataset& ds, int k, std::uint64_t seed) {
    require(k >= 2, ErrorCode::invalid_argument, "fold count must be at least 2");
    auto groups = indices_by_class(ds.labels, ds.class_count);
    for (std::size_t c = 0; c < groups.size(); ++c) {
        if (!groups[c].empty() && static_cast<int>(groups[c].size()) < k) {
            const std::string cname = c < ds.class_names.size() ? ds.class_names[c] : std::to_string(c);
            fail(ErrorCode::stratification_infeasible,
                 "class '" + cname + "' has " + std::to_string(groups[c].size()) + " members, fewer than " +
                     std::to_string(k) + " folds");
        }
    }
    FoldPlan plan;
    plan.fold_count = k;
    plan.seed = seed;
    plan.assignments.assign(ds.labels.size(), 0);
    Rng rng(seed);
    std::size_t position = 0;
    for (auto& g : groups) {
        rng.shuffle(std::span(g));
        for (std::size_t j = 0; j < g.size(); ++j)
            plan.assignments[static_cast<std::size_t>(g[j])] = static_cast<int>((position + j) % static_cast<std::size_t>(k));
        position += g.size();
    }
    return plan;
}

std::vector<Eigen::Index> stratified_order(const Labels& labels, int class_count,
                                           std::span<const Eigen::Index> indices, std::uint64_t seed) {
    std::vector<std::vector<Eigen::Index>> groups(static_cast<std::size_t>(class_count));
    for (Eigen::Index i : indices) groups[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])].push_back(i);
    Rng rng(seed);
    struct Keyed {
        double key;
        int cls;
        Eigen::Index index;
    };
    std::vector<Keyed> keyed;
    keyed.reserve(indices.size());
    for (std::size_t c = 0; c < groups.size(); ++c) {
        auto& g = groups[c];
        rng.shuffle(std::span(g));
        for (std::size_t j = 0; j < g.size(); ++j)
            keyed.push_back({(static_cast<double>(j) + 0.5) / static_cast<double>(g.size()), static_cast<int>(c), g[j]});
    }
    std::sort(keyed.begin(), keyed.end(), [](const Keyed& a, const Keyed& b) {
        return a.key != b.key ? a.key < b.key : a.cls < b.cls;
    });
    std::vector<Eigen::Index> out;
    out.reserve(keyed.size());
    for (const auto& k : keyed) out.push_back(k.index);
    return out;
}

} // namespace polylab
