#pragma once

#include <Eigen/Dense>
#include <compare>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "polylab/data.hpp"
#include "polylab/forest.hpp"
#include "polylab/lp2d.hpp"
#include "polylab/network.hpp"

namespace polylab {

/// Per-layer activation symbols, layer-major and unit-minor.
///
/// Networks: one symbol per hidden unit, 1 iff its pre-activation is > 0.
/// Forests: layer l holds, for every tree, the branch taken at depth l
/// (0 left, 1 right) or `absent` when that tree's path ended earlier.
struct ActivationCode {
    static constexpr std::uint8_t absent = 2;

    std::vector<std::vector<std::uint8_t>> layers;
    int layer_limit = 0;

    auto operator<=>(const ActivationCode&) const = default;

    std::size_t symbol_count() const;
    /// Symbols packed MSB-first, `bits` per symbol, as lowercase hex.
    std::string hex(int bits_per_symbol) const;
    std::uint64_t hash() const;
};

ActivationCode activation_code(const NetworkModel& m, const Eigen::Ref<const Eigen::VectorXd>& x, int layer_limit);
ActivationCode activation_code(const ForestModel& m, const Eigen::Ref<const Eigen::VectorXd>& x, int layer_limit);

/// Largest valid layer limit: hidden layers for networks, maximum tree depth for forests.
int max_layer_limit(const NetworkModel& m);
int max_layer_limit(const ForestModel& m);

/// Number of last-hidden-layer units that are on at x. A network input can
/// activate many units at once, unlike a forest where one leaf per tree fires.
int active_unit_count(const NetworkModel& m, const Eigen::Ref<const Eigen::VectorXd>& x);

/// Class-frequency vote of the training points inside one region.
struct RegionVote {
    std::vector<Eigen::Index> class_counts;
    Eigen::VectorXd posterior;  ///< empty vector when no training point falls inside
    bool empty = true;

    Eigen::Index total() const;
};

RegionVote vote_from_labels(std::span<const int> labels, int class_count);

/// One polytope cell {x : normal_i . x <= offset_i} of a 2-D input domain.
struct RegionCell {
    ActivationCode code;
    std::vector<HalfPlane> halfspaces;  ///< excludes the domain box itself
    /// Layer input after the last included layer, as linear * x + offset.
    Eigen::MatrixXd map_linear;
    Eigen::VectorXd map_offset;
    std::vector<Eigen::Vector2d> polygon;
    Eigen::Vector2d witness = Eigen::Vector2d::Zero();
    RegionVote vote;

    bool contains_strictly(const Eigen::Vector2d& x) const;
};

/// Pieces thinner than this (distance units) are merged into their neighbour.
inline constexpr double sliver_margin = 1e-9;

/// Exact cells of a 2-D network through hidden layer `layer_limit`, by
/// recursive refinement of `domain` with one line per unit.
std::vector<RegionCell> enumerate_regions_2d(const NetworkModel& m, const Box2& domain, int layer_limit);

/// Exact cells of a 2-D forest through depth `layer_limit`: the distinct
/// intersections of per-tree leaf boxes. Throws invalid_argument when more
/// than `max_rectangles` elementary rectangles would be needed.
std::vector<RegionCell> enumerate_regions_2d(const ForestModel& m, const Box2& domain, int layer_limit,
                                             std::size_t max_rectangles = 4'000'000);

/// Bounding box of the data inflated by `inflate` of its extent on each side.
Box2 data_domain(const Eigen::MatrixXd& features, double inflate = 0.1);

/// Region ids of grid cell centers; ids are numbered in row-major first-seen order
/// starting from the row at domain.lower.y().
struct GridLabels {
    int resolution = 0;
    Box2 domain;
    int layer_limit = 0;
    std::vector<int> ids;
    std::vector<Eigen::Vector2d> representatives;  ///< first grid center seen for each id
    std::vector<std::uint64_t> code_hashes;

    int region_count() const { return static_cast<int>(representatives.size()); }
    int id_at(int col, int row) const { return ids[static_cast<std::size_t>(row * resolution + col)]; }
    Eigen::Vector2d center(int col, int row) const;
};

GridLabels label_grid(const NetworkModel& m, const Box2& domain, int resolution, int layer_limit, int jobs = 1);
GridLabels label_grid(const ForestModel& m, const Box2& domain, int resolution, int layer_limit, int jobs = 1);

/// Fills each cell's vote from the training points whose code matches it.
void cell_posteriors(std::vector<RegionCell>& cells, const NetworkModel& m, const Dataset& train);
void cell_posteriors(std::vector<RegionCell>& cells, const ForestModel& m, const Dataset& train);

/// Votes per grid region id.
std::vector<RegionVote> grid_posteriors(const GridLabels& grid, const NetworkModel& m, const Dataset& train);
std::vector<RegionVote> grid_posteriors(const GridLabels& grid, const ForestModel& m, const Dataset& train);

/// Region inventory: [{code, halfspaces, posterior, count}].
nlohmann::json regions_json(const std::vector<RegionCell>& cells, int bits_per_symbol);

} // namespace polylab
