#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace polylab {

/// Fixed two-decimal formatting, with negative zero printed as "0.00".
std::string svg_number(double v);

/// "#rrggbb" from 0..1 channels.
std::string hex_color(double r, double g, double b);

/// Minimal SVG 1.1 document builder. Output bytes depend only on the calls made.
class SvgDocument {
public:
    SvgDocument(double width, double height);

    void rect(double x, double y, double w, double h, std::string_view fill);
    void polygon(std::span<const Eigen::Vector2d> points, std::string_view fill, double opacity = 1.0);
    /// Unfilled path from raw path data.
    void path(std::string_view data, std::string_view stroke, double stroke_width, double opacity = 1.0);
    void polyline(std::span<const Eigen::Vector2d> points, std::string_view stroke, double stroke_width,
                  double opacity = 1.0);
    void line(double x1, double y1, double x2, double y2, std::string_view stroke, double stroke_width);
    void text(double x, double y, std::string_view content, std::string_view anchor = "start", double size = 12.0);
    void open_group(std::string_view id);
    void close_group();

    std::string finish() const;

private:
    double width_;
    double height_;
    std::string body_;
};

} // namespace polylab
