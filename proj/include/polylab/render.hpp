#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "polylab/partition.hpp"

namespace polylab {

enum class RenderMode { unique_color, class_tint, layer_overlay };

/// Accepts "unique-color", "class-tint" or "layer-overlay".
RenderMode parse_render_mode(const std::string& name);
std::string to_string(RenderMode mode);

inline constexpr const char* empty_cell_color = "#d9d9d9";

/// Arbitrary but stable color for a code hash.
std::string region_color(std::uint64_t code_hash);

/// White blended toward the majority class color by confidence; empty votes are grey.
std::string vote_color(const RegionVote& vote);

struct RenderOptions {
    RenderMode mode = RenderMode::unique_color;
    double size = 512.0;  ///< canvas edge in SVG units
};

/// Grid rendering. `votes` (one per region id) is required for class-tint and
/// layer-overlay; `coarser` holds grids of the same domain at lower layer limits
/// whose region boundaries are drawn on top in layer-overlay mode.
std::string render_grid_svg(const GridLabels& grid, const std::vector<RegionVote>* votes,
                            const std::vector<GridLabels>& coarser, const RenderOptions& options);

/// Exact-cell rendering; cell votes are used for class-tint and layer-overlay.
std::string render_cells_svg(const std::vector<RegionCell>& cells, const Box2& domain,
                             const std::vector<std::vector<RegionCell>>& coarser, const RenderOptions& options);

} // namespace polylab
