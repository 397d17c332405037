#include "polylab/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace polylab {

namespace {

std::string escape(std::string_view s) {
    std::string out;
    for (char c : s) {
        switch (c) {
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '&': out += "&amp;"; break;
        case '"': out += "&quot;"; break;
        default: out.push_back(c);
        }
    }
    return out;
}

std::string points_attr(std::span<const Eigen::Vector2d> points) {
    std::string s;
    for (const auto& p : points) {
        if (!s.empty()) s.push_back(' ');
        s += svg_number(p.x()) + "," + svg_number(p.y());
    }
    return s;
}

} // namespace

std::string svg_number(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    std::string s(buf);
    if (s == "-0.00") s = "0.00";
    return s;
}

std::string hex_color(double r, double g, double b) {
    auto channel = [](double v) { return static_cast<int>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); };
    char buf[8];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", channel(r), channel(g), channel(b));
    return buf;
}

SvgDocument::SvgDocument(double width, double height) : width_(width), height_(height) {}

void SvgDocument::rect(double x, double y, double w, double h, std::string_view fill) {
    body_ += "<rect x=\"" + svg_number(x) + "\" y=\"" + svg_number(y) + "\" width=\"" + svg_number(w) +
             "\" height=\"" + svg_number(h) + "\" fill=\"" + std::string(fill) + "\"/>\n";
}

void SvgDocument::polygon(std::span<const Eigen::Vector2d> points, std::string_view fill, double opacity) {
    body_ += "<polygon points=\"" + points_attr(points) + "\" fill=\"" + std::string(fill) + "\"";
    if (opacity < 1.0) body_ += " fill-opacity=\"" + svg_number(opacity) + "\"";
    body_ += "/>\n";
}

void SvgDocument::path(std::string_view data, std::string_view stroke, double stroke_width, double opacity) {
    body_ += "<path d=\"" + std::string(data) + "\" fill=\"none\" stroke=\"" + std::string(stroke) +
             "\" stroke-width=\"" + svg_number(stroke_width) + "\"";
    if (opacity < 1.0) body_ += " stroke-opacity=\"" + svg_number(opacity) + "\"";
    body_ += "/>\n";
}

void SvgDocument::polyline(std::span<const Eigen::Vector2d> points, std::string_view stroke, double stroke_width,
                           double opacity) {
    body_ += "<polyline points=\"" + points_attr(points) + "\" fill=\"none\" stroke=\"" + std::string(stroke) +
             "\" stroke-width=\"" + svg_number(stroke_width) + "\"";
    if (opacity < 1.0) body_ += " stroke-opacity=\"" + svg_number(opacity) + "\"";
    body_ += "/>\n";
}

void SvgDocument::line(double x1, double y1, double x2, double y2, std::string_view stroke, double stroke_width) {
    body_ += "<line x1=\"" + svg_number(x1) + "\" y1=\"" + svg_number(y1) + "\" x2=\"" + svg_number(x2) +
             "\" y2=\"" + svg_number(y2) + "\" stroke=\"" + std::string(stroke) + "\" stroke-width=\"" +
             svg_number(stroke_width) + "\"/>\n";
}

void SvgDocument::text(double x, double y, std::string_view content, std::string_view anchor, double size) {
    body_ += "<text x=\"" + svg_number(x) + "\" y=\"" + svg_number(y) + "\" font-family=\"sans-serif\" font-size=\"" +
             svg_number(size) + "\" text-anchor=\"" + std::string(anchor) + "\">" + escape(content) + "</text>\n";
}

void SvgDocument::open_group(std::string_view id) { body_ += "<g id=\"" + escape(id) + "\">\n"; }

void SvgDocument::close_group() { body_ += "</g>\n"; }

std::string SvgDocument::finish() const {
    const std::string w = svg_number(width_);
    const std::string h = svg_number(height_);
    return "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
           "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" + w + "\" height=\"" + h +
           "\" viewBox=\"0 0 " + w + " " + h + "\">\n" + body_ + "</svg>\n";
}

} // namespace polylab
