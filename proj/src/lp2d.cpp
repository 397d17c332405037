#include "polylab/lp2d.hpp"

#include <cmath>
#include <limits>
#include <numeric>

#include "polylab/error.hpp"
#include "polylab/random.hpp"

namespace polylab {

namespace {

constexpr double feasibility_tolerance = 1e-10;

// Lexicographic objective: (objective . x, x, y).
bool lex_less(const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& c) {
    const double va = c.dot(a);
    const double vb = c.dot(b);
    if (va != vb) return va < vb;
    if (a.x() != b.x()) return a.x() < b.x();
    return a.y() < b.y();
}

Eigen::Vector2d box_optimum(const Box2& box, const Eigen::Vector2d& c) {
    Eigen::Vector2d best = box.lower;
    for (const Eigen::Vector2d& v : {Eigen::Vector2d(box.upper.x(), box.lower.y()), Eigen::Vector2d(box.lower.x(), box.upper.y()),
                                    Eigen::Vector2d(box.upper)})
        if (lex_less(v, best, c)) best = v;
    return best;
}

} // namespace

void Box2::validate() const {
    require(lower.allFinite() && upper.allFinite() && (upper.array() > lower.array()).all(),
            ErrorCode::invalid_argument, "degenerate domain box");
}

std::vector<HalfPlane> Box2::halfplanes() const {
    return {{{-1.0, 0.0}, -lower.x()}, {{1.0, 0.0}, upper.x()}, {{0.0, -1.0}, -lower.y()}, {{0.0, 1.0}, upper.y()}};
}

LpSolution solve_lp2d(std::span<const HalfPlane> constraints, const Eigen::Vector2d& objective, const Box2& bounds,
                      std::uint64_t seed) {
    std::vector<HalfPlane> hs = bounds.halfplanes();
    const std::size_t fixed = hs.size();
    std::vector<std::size_t> order(constraints.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    rng.shuffle(std::span(order));
    for (std::size_t i : order) {
        const double norm = constraints[i].normal.norm();
        if (norm == 0.0) {
            if (constraints[i].offset < -feasibility_tolerance) return {};
            continue;
        }
        hs.push_back({constraints[i].normal / norm, constraints[i].offset / norm});
    }

    Eigen::Vector2d x = box_optimum(bounds, objective);
    for (std::size_t i = fixed; i < hs.size(); ++i) {
        if (hs[i].slack(x) >= -feasibility_tolerance) continue;
        // The optimum moves onto the line normal . x = offset.
        const Eigen::Vector2d a = hs[i].normal;
        const Eigen::Vector2d p0 = a * hs[i].offset;
        const Eigen::Vector2d dir(-a.y(), a.x());
        double lo = -std::numeric_limits<double>::infinity();
        double hi = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < i; ++j) {
            const double ad = hs[j].normal.dot(dir);
            const double rhs = hs[j].slack(p0);
            if (std::abs(ad) < 1e-14) {
                if (rhs < -feasibility_tolerance) return {};
                continue;
            }
            if (ad > 0) hi = std::min(hi, rhs / ad);
            else lo = std::max(lo, rhs / ad);
        }
        if (lo > hi + feasibility_tolerance) return {};
        if (lo > hi) hi = lo;
        const double slope = objective.dot(dir);
        double t = 0.0;
        if (slope > 0) t = lo;
        else if (slope < 0) t = hi;
        else t = (dir.x() > 0 || (dir.x() == 0 && dir.y() > 0)) ? lo : hi;
        x = p0 + t * dir;
    }
    return {true, x, objective.dot(x)};
}

bool feasible_with_margin(std::span<const HalfPlane> constraints, const Box2& bounds, double margin) {
    Box2 shrunk{bounds.lower.array() + margin, bounds.upper.array() - margin};
    if (!(shrunk.upper.array() >= shrunk.lower.array()).all()) return false;
    std::vector<HalfPlane> tightened;
    tightened.reserve(constraints.size());
    for (const auto& h : constraints) {
        const double norm = h.normal.norm();
        if (norm == 0.0) {
            if (h.offset < margin) return false;
            continue;
        }
        tightened.push_back({h.normal / norm, h.offset / norm - margin});
    }
    return solve_lp2d(tightened, Eigen::Vector2d::Zero(), shrunk).feasible;
}

std::vector<Eigen::Vector2d> clip_polygon(const Box2& bounds, std::span<const HalfPlane> constraints) {
    std::vector<Eigen::Vector2d> poly = {bounds.lower, {bounds.upper.x(), bounds.lower.y()}, bounds.upper,
                                         {bounds.lower.x(), bounds.upper.y()}};
    std::vector<Eigen::Vector2d> next;
    for (const auto& h : constraints) {
        if (poly.empty()) break;
        next.clear();
        for (std::size_t i = 0; i < poly.size(); ++i) {
            const auto& a = poly[i];
            const auto& b = poly[(i + 1) % poly.size()];
            const double sa = h.slack(a);
            const double sb = h.slack(b);
            if (sa >= 0) next.push_back(a);
            if ((sa > 0 && sb < 0) || (sa < 0 && sb > 0)) next.push_back(a + (b - a) * (sa / (sa - sb)));
        }
        poly.swap(next);
    }
    return poly;
}

double polygon_area(std::span<const Eigen::Vector2d> polygon) {
    double twice = 0.0;
    for (std::size_t i = 0; i < polygon.size(); ++i) {
        const auto& a = polygon[i];
        const auto& b = polygon[(i + 1) % polygon.size()];
        twice += a.x() * b.y() - b.x() * a.y();
    }
    return 0.5 * twice;
}

Eigen::Vector2d polygon_centroid(std::span<const Eigen::Vector2d> polygon) {
    const double area = polygon_area(polygon);
    if (std::abs(area) < 1e-300) {
        Eigen::Vector2d mean = Eigen::Vector2d::Zero();
        for (const auto& p : polygon) mean += p;
        return polygon.empty() ? mean : Eigen::Vector2d(mean / static_cast<double>(polygon.size()));
    }
    Eigen::Vector2d c = Eigen::Vector2d::Zero();
    for (std::size_t i = 0; i < polygon.size(); ++i) {
        const auto& a = polygon[i];
        const auto& b = polygon[(i + 1) % polygon.size()];
        const double cross = a.x() * b.y() - b.x() * a.y();
        c += (a + b) * cross;
    }
    return c / (6.0 * area);
}

} // namespace polylab
