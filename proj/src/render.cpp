#include "polylab/render.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "polylab/error.hpp"
#include "polylab/random.hpp"
#include "polylab/svg.hpp"

namespace polylab {

namespace {

// Class 0 purple, class 1 green, then a fixed palette for further classes.
constexpr std::array<std::array<double, 3>, 8> class_rgb{{
    {0x7b / 255.0, 0x32 / 255.0, 0x94 / 255.0},
    {0x00 / 255.0, 0x88 / 255.0, 0x37 / 255.0},
    {0xe6 / 255.0, 0x61 / 255.0, 0x01 / 255.0},
    {0x05 / 255.0, 0x71 / 255.0, 0xb0 / 255.0},
    {0xca / 255.0, 0x00 / 255.0, 0x20 / 255.0},
    {0x8c / 255.0, 0x51 / 255.0, 0x0a / 255.0},
    {0x01 / 255.0, 0x66 / 255.0, 0x5e / 255.0},
    {0x40 / 255.0, 0x40 / 255.0, 0x40 / 255.0},
}};

struct Frame {
    Box2 domain;
    double size;

    double px(double x) const { return (x - domain.lower.x()) / (domain.upper.x() - domain.lower.x()) * size; }
    double py(double y) const { return size - (y - domain.lower.y()) / (domain.upper.y() - domain.lower.y()) * size; }
    Eigen::Vector2d map(const Eigen::Vector2d& p) const { return {px(p.x()), py(p.y())}; }
};

bool needs_votes(RenderMode mode) { return mode != RenderMode::unique_color; }

// Boundaries between differing grid ids, as merged axis-parallel segments.
std::string grid_boundaries(const GridLabels& g, double size) {
    const int n = g.resolution;
    const double cell = size / n;
    std::string d;
    auto segment = [&](double x1, double y1, double x2, double y2) {
        d += "M" + svg_number(x1) + " " + svg_number(y1) + "L" + svg_number(x2) + " " + svg_number(y2);
    };
    // Vertical edges between columns c-1 and c; rows run bottom-up.
    for (int c = 1; c < n; ++c) {
        int start = -1;
        for (int r = 0; r <= n; ++r) {
            const bool differs = r < n && g.id_at(c - 1, r) != g.id_at(c, r);
            if (differs && start < 0) start = r;
            if (!differs && start >= 0) {
                segment(c * cell, size - start * cell, c * cell, size - r * cell);
                start = -1;
            }
        }
    }
    for (int r = 1; r < n; ++r) {
        int start = -1;
        for (int c = 0; c <= n; ++c) {
            const bool differs = c < n && g.id_at(c, r - 1) != g.id_at(c, r);
            if (differs && start < 0) start = c;
            if (!differs && start >= 0) {
                segment(start * cell, size - r * cell, c * cell, size - r * cell);
                start = -1;
            }
        }
    }
    return d;
}

double overlay_width(std::size_t level, std::size_t levels) {
    // Coarser layers get heavier strokes.
    return 0.6 + 1.4 * static_cast<double>(levels - level) / static_cast<double>(levels);
}

} // namespace

RenderMode parse_render_mode(const std::string& name) {
    if (name == "unique-color") return RenderMode::unique_color;
    if (name == "class-tint") return RenderMode::class_tint;
    if (name == "layer-overlay") return RenderMode::layer_overlay;
    fail(ErrorCode::invalid_argument, "unknown render mode '" + name + "'");
}

std::string to_string(RenderMode mode) {
    switch (mode) {
    case RenderMode::unique_color: return "unique-color";
    case RenderMode::class_tint: return "class-tint";
    case RenderMode::layer_overlay: return "layer-overlay";
    }
    return "unique-color";
}

std::string region_color(std::uint64_t code_hash) {
    const std::uint64_t h = splitmix64(code_hash);
    const double hue = static_cast<double>(h & 0xffff) / 65536.0 * 6.0;
    const double sat = 0.45 + 0.35 * static_cast<double>((h >> 16) & 0xff) / 255.0;
    const double val = 0.70 + 0.25 * static_cast<double>((h >> 24) & 0xff) / 255.0;
    const int sector = static_cast<int>(hue) % 6;
    const double f = hue - std::floor(hue);
    const double p = val * (1 - sat), q = val * (1 - sat * f), t = val * (1 - sat * (1 - f));
    switch (sector) {
    case 0: return hex_color(val, t, p);
    case 1: return hex_color(q, val, p);
    case 2: return hex_color(p, val, t);
    case 3: return hex_color(p, q, val);
    case 4: return hex_color(t, p, val);
    default: return hex_color(val, p, q);
    }
}

std::string vote_color(const RegionVote& vote) {
    if (vote.empty) return empty_cell_color;
    const int classes = static_cast<int>(vote.posterior.size());
    const int k = argmax_class(vote.posterior);
    const double chance = 1.0 / classes;
    const double strength = classes > 1 ? std::clamp((vote.posterior(k) - chance) / (1.0 - chance), 0.0, 1.0) : 1.0;
    const auto& rgb = class_rgb[static_cast<std::size_t>(k) % class_rgb.size()];
    // Keep a visible tint even for near-ties.
    const double s = 0.15 + 0.85 * strength;
    return hex_color(1 - s + s * rgb[0], 1 - s + s * rgb[1], 1 - s + s * rgb[2]);
}

std::string render_grid_svg(const GridLabels& grid, const std::vector<RegionVote>* votes,
                            const std::vector<GridLabels>& coarser, const RenderOptions& options) {
    require(grid.resolution >= 2 && grid.ids.size() == static_cast<std::size_t>(grid.resolution) * grid.resolution,
            ErrorCode::invalid_argument, "malformed grid");
    if (needs_votes(options.mode))
        require(votes != nullptr && votes->size() == static_cast<std::size_t>(grid.region_count()),
                ErrorCode::invalid_argument, "render mode " + to_string(options.mode) + " needs one vote per region");
    std::vector<std::string> colors(static_cast<std::size_t>(grid.region_count()));
    for (std::size_t i = 0; i < colors.size(); ++i)
        colors[i] = needs_votes(options.mode) ? vote_color((*votes)[i]) : region_color(grid.code_hashes[i]);

    const int n = grid.resolution;
    const double cell = options.size / n;
    SvgDocument svg(options.size, options.size);
    svg.open_group("cells");
    for (int r = 0; r < n; ++r) {
        const double y = options.size - (r + 1) * cell;
        int c = 0;
        while (c < n) {
            const auto& color = colors[static_cast<std::size_t>(grid.id_at(c, r))];
            int end = c + 1;
            while (end < n && colors[static_cast<std::size_t>(grid.id_at(end, r))] == color) ++end;
            svg.rect(c * cell, y, (end - c) * cell, cell, color);
            c = end;
        }
    }
    svg.close_group();
    if (options.mode == RenderMode::layer_overlay) {
        svg.open_group("boundaries");
        for (std::size_t l = 0; l < coarser.size(); ++l) {
            require(coarser[l].resolution == n, ErrorCode::invalid_argument, "overlay grids must share the resolution");
            const std::string d = grid_boundaries(coarser[l], options.size);
            if (!d.empty()) svg.path(d, "#000000", overlay_width(l, coarser.size()), 0.8);
        }
        const std::string d = grid_boundaries(grid, options.size);
        if (!d.empty()) svg.path(d, "#ffffff", 0.5, 0.7);
        svg.close_group();
    }
    return svg.finish();
}

std::string render_cells_svg(const std::vector<RegionCell>& cells, const Box2& domain,
                             const std::vector<std::vector<RegionCell>>& coarser, const RenderOptions& options) {
    domain.validate();
    const Frame frame{domain, options.size};
    SvgDocument svg(options.size, options.size);
    auto mapped = [&](const RegionCell& c) {
        std::vector<Eigen::Vector2d> pts;
        pts.reserve(c.polygon.size());
        for (const auto& p : c.polygon) pts.push_back(frame.map(p));
        return pts;
    };
    svg.open_group("cells");
    for (const auto& c : cells) {
        if (c.polygon.size() < 3) continue;
        const std::string color = needs_votes(options.mode) ? vote_color(c.vote) : region_color(c.code.hash());
        svg.polygon(mapped(c), color);
    }
    svg.close_group();
    if (options.mode == RenderMode::layer_overlay) {
        svg.open_group("boundaries");
        auto outline = [&](const std::vector<RegionCell>& level, std::string_view stroke, double width, double opacity) {
            for (const auto& c : level) {
                if (c.polygon.size() < 3) continue;
                auto pts = mapped(c);
                pts.push_back(pts.front());
                svg.polyline(pts, stroke, width, opacity);
            }
        };
        for (std::size_t l = 0; l < coarser.size(); ++l) outline(coarser[l], "#000000", overlay_width(l, coarser.size()), 0.8);
        outline(cells, "#ffffff", 0.5, 0.7);
        svg.close_group();
    }
    return svg.finish();
}

} // namespace polylab
