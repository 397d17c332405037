#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>

#include "polylab/bench.hpp"
#include "polylab/error.hpp"
#include "polylab/svg.hpp"

namespace polylab {

namespace {

struct Series {
    std::vector<double> sizes;
    std::vector<double> kappa, ece, seconds;
};

double interpolate(const std::vector<double>& xs, const std::vector<double>& ys, double x, bool log_y) {
    // xs ascending, x inside [xs.front(), xs.back()].
    const auto hi = static_cast<std::size_t>(std::lower_bound(xs.begin(), xs.end(), x) - xs.begin());
    if (xs[hi] == x || hi == 0) return ys[hi];
    const std::size_t lo = hi - 1;
    const double t = (std::log(x) - std::log(xs[lo])) / (std::log(xs[hi]) - std::log(xs[lo]));
    if (log_y && ys[lo] > 0.0 && ys[hi] > 0.0) return std::exp(std::log(ys[lo]) + t * (std::log(ys[hi]) - std::log(ys[lo])));
    return ys[lo] + t * (ys[hi] - ys[lo]);
}

double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string short_number(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

const char* family_color(const std::string& family) {
    if (family == "forest") return "#1b9e77";
    if (family == "network") return "#d95f02";
    return "#7570b3";
}

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

std::vector<Table> report_tables(const std::vector<RunRecord>& records) {
    const Aggregate agg = aggregate(records);
    Table curves{{"family", "size", "datasets", "mean kappa", "mean ECE", "median seconds"}, {}};
    for (const auto& c : agg.curves)
        curves.rows.push_back({c.family, fixed(c.size, 0), std::to_string(c.datasets), fixed(c.kappa_mean, 4),
                               fixed(c.ece_mean, 4), fixed(c.seconds_median, 4)});
    Table groups{{"dataset", "family", "size", "folds", "kappa", "ECE", "accuracy", "seconds"}, {}};
    for (const auto& g : agg.groups)
        groups.rows.push_back({g.dataset, g.family, std::to_string(g.size), std::to_string(g.count), fixed(g.kappa, 4),
                               fixed(g.ece, 4), fixed(g.accuracy, 4), fixed(g.seconds, 4)});
    return {curves, groups};
}

std::string summary_line(const std::vector<RunRecord>& records) {
    const auto unique = deduplicate(records);
    std::set<std::string> datasets;
    int failed = 0;
    for (const auto& r : unique) {
        datasets.insert(r.dataset);
        failed += r.failed ? 1 : 0;
    }
    return std::to_string(unique.size()) + " records (" + std::to_string(failed) + " failed) across " +
           std::to_string(datasets.size()) + " datasets.";
}

std::string html_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '<') out += "&lt;";
        else if (c == '>') out += "&gt;";
        else if (c == '&') out += "&amp;";
        else out.push_back(c);
    }
    return out;
}

} // namespace

double percentile(std::vector<double> values, double p) {
    require(!values.empty(), ErrorCode::empty_input, "percentile of an empty set");
    require(p >= 0.0 && p <= 100.0, ErrorCode::invalid_argument, "percentile must be within [0, 100]");
    std::sort(values.begin(), values.end());
    const double pos = p / 100.0 * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

nlohmann::json Aggregate::to_json() const {
    nlohmann::json g = nlohmann::json::array();
    for (const auto& s : groups)
        g.push_back({{"dataset", s.dataset},   {"family", s.family}, {"size", s.size},
                     {"count", s.count},       {"kappa", s.kappa},   {"ece", s.ece},
                     {"accuracy", s.accuracy}, {"seconds", s.seconds}});
    nlohmann::json c = nlohmann::json::array();
    for (const auto& p : curves)
        c.push_back({{"family", p.family},
                     {"size", p.size},
                     {"datasets", p.datasets},
                     {"kappa", {{"mean", p.kappa_mean}, {"p25", p.kappa_p25}, {"p75", p.kappa_p75}}},
                     {"ece", {{"mean", p.ece_mean}, {"p25", p.ece_p25}, {"p75", p.ece_p75}}},
                     {"seconds", {{"median", p.seconds_median}, {"p25", p.seconds_p25}, {"p75", p.seconds_p75}}}});
    return {{"groups", g}, {"curves", c}};
}

Aggregate aggregate(const std::vector<RunRecord>& records) {
    std::map<std::tuple<std::string, std::string, Eigen::Index>, std::vector<const RunRecord*>> by_group;
    const auto unique = deduplicate(records);
    for (const auto& r : unique)
        if (!r.failed) by_group[{r.dataset, r.family, r.size}].push_back(&r);
    require(!by_group.empty(), ErrorCode::empty_input, "no successful records to aggregate");

    Aggregate agg;
    std::map<std::string, std::map<std::string, Series>> series;  // family -> dataset -> curve
    for (const auto& [key, members] : by_group) {
        GroupStat g;
        std::tie(g.dataset, g.family, g.size) = key;
        g.count = static_cast<int>(members.size());
        std::vector<double> k, e, a, s;
        for (const auto* r : members) {
            k.push_back(r->kappa);
            e.push_back(r->ece);
            a.push_back(r->accuracy);
            s.push_back(r->seconds);
        }
        g.kappa = mean(k);
        g.ece = mean(e);
        g.accuracy = mean(a);
        g.seconds = percentile(s, 50.0);
        auto& sr = series[g.family][g.dataset];
        sr.sizes.push_back(static_cast<double>(g.size));
        sr.kappa.push_back(g.kappa);
        sr.ece.push_back(g.ece);
        sr.seconds.push_back(g.seconds);
        agg.groups.push_back(std::move(g));
    }

    for (const auto& [family, per_dataset] : series) {
        std::set<double> common;
        for (const auto& [name, s] : per_dataset) common.insert(s.sizes.begin(), s.sizes.end());
        for (double size : common) {
            std::vector<double> k, e, t;
            for (const auto& [name, s] : per_dataset) {
                if (size < s.sizes.front() || size > s.sizes.back()) continue;
                k.push_back(interpolate(s.sizes, s.kappa, size, false));
                e.push_back(interpolate(s.sizes, s.ece, size, false));
                t.push_back(interpolate(s.sizes, s.seconds, size, true));
            }
            CurvePoint p;
            p.family = family;
            p.size = size;
            p.datasets = static_cast<int>(k.size());
            p.kappa_mean = mean(k);
            p.kappa_p25 = percentile(k, 25.0);
            p.kappa_p75 = percentile(k, 75.0);
            p.ece_mean = mean(e);
            p.ece_p25 = percentile(e, 25.0);
            p.ece_p75 = percentile(e, 75.0);
            p.seconds_median = percentile(t, 50.0);
            p.seconds_p25 = percentile(t, 25.0);
            p.seconds_p75 = percentile(t, 75.0);
            agg.curves.push_back(p);
        }
    }
    return agg;
}

PlotMetric parse_plot_metric(const std::string& name) {
    if (name == "kappa") return PlotMetric::kappa;
    if (name == "ece") return PlotMetric::ece;
    if (name == "time") return PlotMetric::time;
    fail(ErrorCode::invalid_argument, "unknown metric '" + name + "'");
}

std::string render_metric_svg(const Aggregate& agg, PlotMetric metric) {
    require(!agg.groups.empty(), ErrorCode::empty_input, "nothing to plot");
    const bool log_y = metric == PlotMetric::time;
    auto group_value = [&](const GroupStat& g) {
        return metric == PlotMetric::kappa ? g.kappa : metric == PlotMetric::ece ? g.ece : g.seconds;
    };
    auto center = [&](const CurvePoint& c) {
        return metric == PlotMetric::kappa ? c.kappa_mean : metric == PlotMetric::ece ? c.ece_mean : c.seconds_median;
    };
    auto low = [&](const CurvePoint& c) {
        return metric == PlotMetric::kappa ? c.kappa_p25 : metric == PlotMetric::ece ? c.ece_p25 : c.seconds_p25;
    };
    auto high = [&](const CurvePoint& c) {
        return metric == PlotMetric::kappa ? c.kappa_p75 : metric == PlotMetric::ece ? c.ece_p75 : c.seconds_p75;
    };
    // Log axes clamp tiny times so zero durations stay drawable.
    auto ty = [&](double v) { return log_y ? std::log10(std::max(v, 1e-6)) : v; };

    double x_lo = std::numeric_limits<double>::infinity(), x_hi = -x_lo, y_lo = x_lo, y_hi = -x_lo;
    for (const auto& g : agg.groups) {
        x_lo = std::min(x_lo, std::log10(static_cast<double>(g.size)));
        x_hi = std::max(x_hi, std::log10(static_cast<double>(g.size)));
        y_lo = std::min(y_lo, ty(group_value(g)));
        y_hi = std::max(y_hi, ty(group_value(g)));
    }
    for (const auto& c : agg.curves) {
        y_lo = std::min(y_lo, ty(low(c)));
        y_hi = std::max(y_hi, ty(high(c)));
    }
    if (x_hi - x_lo < 1e-9) {
        x_lo -= 0.1;
        x_hi += 0.1;
    }
    if (y_hi - y_lo < 1e-9) {
        y_lo -= log_y ? 0.5 : 0.05;
        y_hi += log_y ? 0.5 : 0.05;
    }
    const double y_pad = 0.05 * (y_hi - y_lo);
    y_lo -= y_pad;
    y_hi += y_pad;

    const double width = 720, height = 480, left = 80, right = 130, top = 30, bottom = 60;
    const double pw = width - left - right, ph = height - top - bottom;
    auto px = [&](double size) { return left + (std::log10(size) - x_lo) / (x_hi - x_lo) * pw; };
    auto py = [&](double v) { return top + ph - (ty(v) - y_lo) / (y_hi - y_lo) * ph; };

    SvgDocument svg(width, height);
    svg.rect(0, 0, width, height, "#ffffff");
    svg.open_group("axes");
    svg.line(left, top + ph, left + pw, top + ph, "#000000", 1.0);
    svg.line(left, top, left, top + ph, "#000000", 1.0);
    for (int e = static_cast<int>(std::ceil(x_lo - 1e-9)); e <= static_cast<int>(std::floor(x_hi + 1e-9)); ++e) {
        for (int m : {1, 2, 5}) {
            const double v = std::log10(m) + e;
            if (v < x_lo - 1e-9 || v > x_hi + 1e-9) continue;
            const double x = left + (v - x_lo) / (x_hi - x_lo) * pw;
            svg.line(x, top + ph, x, top + ph + (m == 1 ? 6 : 3), "#000000", 1.0);
            if (m == 1 || x_hi - x_lo < 2.0) svg.text(x, top + ph + 20, short_number(std::pow(10.0, v)), "middle", 11);
        }
    }
    if (log_y) {
        for (int e = static_cast<int>(std::ceil(y_lo)); e <= static_cast<int>(std::floor(y_hi)); ++e) {
            const double y = top + ph - (e - y_lo) / (y_hi - y_lo) * ph;
            svg.line(left - 6, y, left, y, "#000000", 1.0);
            svg.text(left - 9, y + 4, short_number(std::pow(10.0, e)), "end", 11);
        }
    } else {
        for (int i = 0; i <= 4; ++i) {
            const double v = y_lo + (y_hi - y_lo) * i / 4.0;
            const double y = top + ph - (v - y_lo) / (y_hi - y_lo) * ph;
            svg.line(left - 6, y, left, y, "#000000", 1.0);
            svg.text(left - 9, y + 4, short_number(v), "end", 11);
        }
    }
    svg.text(left + pw / 2, height - 15, "training sample size", "middle", 13);
    const char* label = metric == PlotMetric::kappa ? "Cohen's kappa" : metric == PlotMetric::ece ? "ECE" : "training wall time (s)";
    svg.text(20, top - 10, label, "start", 13);
    svg.close_group();

    std::set<std::string> families;
    for (const auto& g : agg.groups) families.insert(g.family);
    double legend_y = top + 10;
    for (const auto& family : families) {
        const char* color = family_color(family);
        svg.open_group(family);
        std::vector<Eigen::Vector2d> upper, lower_rev, thick;
        bool band = false;
        for (const auto& c : agg.curves) {
            if (c.family != family) continue;
            upper.emplace_back(px(c.size), py(high(c)));
            lower_rev.emplace_back(px(c.size), py(low(c)));
            thick.emplace_back(px(c.size), py(center(c)));
            band = band || high(c) > low(c);
        }
        if (band) {
            std::vector<Eigen::Vector2d> poly = upper;
            poly.insert(poly.end(), lower_rev.rbegin(), lower_rev.rend());
            svg.polygon(poly, color, 0.2);
        }
        std::map<std::string, std::vector<Eigen::Vector2d>> thin;
        for (const auto& g : agg.groups)
            if (g.family == family) thin[g.dataset].emplace_back(px(static_cast<double>(g.size)), py(group_value(g)));
        for (const auto& [name, pts] : thin) svg.polyline(pts, color, 0.8, 0.5);
        svg.polyline(thick, color, 2.5);
        svg.close_group();
        svg.line(left + pw + 15, legend_y, left + pw + 40, legend_y, color, 2.5);
        svg.text(left + pw + 45, legend_y + 4, family, "start", 12);
        legend_y += 20;
    }
    return svg.finish();
}

std::string report_markdown(const std::vector<RunRecord>& records) {
    const bool any = std::any_of(records.begin(), records.end(), [](const RunRecord& r) { return !r.failed; });
    if (!any) return "no records\n";
    std::string out = "# Benchmark report\n\n" + summary_line(records) + "\n";
    const auto tables = report_tables(records);
    const char* titles[] = {"Across datasets", "Per dataset"};
    for (std::size_t t = 0; t < tables.size(); ++t) {
        out += std::string("\n## ") + titles[t] + "\n\n|";
        for (const auto& h : tables[t].header) out += " " + h + " |";
        out += "\n|";
        for (std::size_t i = 0; i < tables[t].header.size(); ++i) out += " --- |";
        out += "\n";
        for (const auto& row : tables[t].rows) {
            out += "|";
            for (const auto& cell : row) out += " " + cell + " |";
            out += "\n";
        }
    }
    return out;
}

std::string report_html(const std::vector<RunRecord>& records) {
    std::string out = "<!DOCTYPE html>\n<html>\n<head><meta charset=\"utf-8\"><title>Benchmark report</title></head>\n<body>\n";
    const bool any = std::any_of(records.begin(), records.end(), [](const RunRecord& r) { return !r.failed; });
    if (!any) return out + "<p>no records</p>\n</body>\n</html>\n";
    out += "<h1>Benchmark report</h1>\n<p>" + summary_line(records) + "</p>\n";
    const auto tables = report_tables(records);
    const char* titles[] = {"Across datasets", "Per dataset"};
    for (std::size_t t = 0; t < tables.size(); ++t) {
        out += std::string("<h2>") + titles[t] + "</h2>\n<table>\n<tr>";
        for (const auto& h : tables[t].header) out += "<th>" + html_escape(h) + "</th>";
        out += "</tr>\n";
        for (const auto& row : tables[t].rows) {
            out += "<tr>";
            for (const auto& cell : row) out += "<td>" + html_escape(cell) + "</td>";
            out += "</tr>\n";
        }
        out += "</table>\n";
    }
    return out + "</body>\n</html>\n";
}

} // namespace polylab
