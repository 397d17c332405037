#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <vector>

namespace polylab {

/// {x : normal . x <= offset}
struct HalfPlane {
    Eigen::Vector2d normal;
    double offset = 0.0;

    double slack(const Eigen::Vector2d& x) const { return offset - normal.dot(x); }
};

/// Closed axis-aligned rectangle.
struct Box2 {
    Eigen::Vector2d lower{0.0, 0.0};
    Eigen::Vector2d upper{1.0, 1.0};

    /// Throws invalid_argument when the box has no interior.
    void validate() const;
    Eigen::Vector2d center() const { return 0.5 * (lower + upper); }
    std::vector<HalfPlane> halfplanes() const;
};

struct LpSolution {
    bool feasible = false;
    Eigen::Vector2d point = Eigen::Vector2d::Zero();
    double value = 0.0;
};

/// Minimizes objective . x over `bounds` intersected with `constraints` using
/// Seidel's randomized incremental algorithm (expected linear time). Ties
/// between optimal points resolve to the lexicographically smallest. The
/// constraint order is shuffled from `seed`, so results are deterministic.
LpSolution solve_lp2d(std::span<const HalfPlane> constraints, const Eigen::Vector2d& objective, const Box2& bounds,
                      std::uint64_t seed = 0x5eed1e);

/// Whether {x in bounds : normal_i . x <= offset_i - margin} is non-empty.
bool feasible_with_margin(std::span<const HalfPlane> constraints, const Box2& bounds, double margin);

/// Convex polygon (counter-clockwise) of bounds cut by `constraints`.
std::vector<Eigen::Vector2d> clip_polygon(const Box2& bounds, std::span<const HalfPlane> constraints);

double polygon_area(std::span<const Eigen::Vector2d> polygon);
Eigen::Vector2d polygon_centroid(std::span<const Eigen::Vector2d> polygon);

} // namespace polylab
