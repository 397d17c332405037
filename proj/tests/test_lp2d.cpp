#include <doctest.h>

#include <cmath>
#include <numbers>

#include "polylab/error.hpp"
#include "polylab/lp2d.hpp"
#include "polylab/random.hpp"

using namespace polylab;

namespace {

HalfPlane random_halfplane(Rng& rng) {
    const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
    return {{std::cos(angle), std::sin(angle)}, rng.uniform(-0.5, 1.5)};
}

// Minimum over all pairwise line intersections that satisfy every constraint.
LpSolution vertex_oracle(const std::vector<HalfPlane>& cons, const Eigen::Vector2d& obj, const Box2& box) {
    std::vector<HalfPlane> all = cons;
    for (const auto& h : box.halfplanes()) all.push_back(h);
    LpSolution best;
    for (std::size_t i = 0; i < all.size(); ++i) {
        for (std::size_t j = i + 1; j < all.size(); ++j) {
            Eigen::Matrix2d a;
            a.row(0) = all[i].normal.transpose();
            a.row(1) = all[j].normal.transpose();
            if (std::abs(a.determinant()) < 1e-12) continue;
            const Eigen::Vector2d p = a.inverse() * (Eigen::Vector2d(all[i].offset, all[j].offset));
            bool ok = true;
            for (const auto& h : all) ok = ok && h.slack(p) >= -1e-9;
            if (!ok) continue;
            const double v = obj.dot(p);
            if (!best.feasible || v < best.value) {
                best.feasible = true;
                best.value = v;
                best.point = p;
            }
        }
    }
    return best;
}

} // namespace

TEST_CASE("box validation and half-planes") {
    Box2 flat{{0, 0}, {1, 0}};
    CHECK_THROWS_AS(flat.validate(), Error);
    Box2 box{{-1, -2}, {3, 4}};
    box.validate();
    const auto hs = box.halfplanes();
    REQUIRE(hs.size() == 4);
    for (const auto& h : hs) CHECK(h.slack(box.center()) > 0.0);
    CHECK(box.center() == Eigen::Vector2d(1, 1));
}

TEST_CASE("unconstrained optimum is a box corner") {
    const Box2 box{{0, 0}, {2, 1}};
    const auto sol = solve_lp2d({}, Eigen::Vector2d(1, 1), box);
    CHECK(sol.feasible);
    CHECK(sol.value == doctest::Approx(0.0));
    const auto sol2 = solve_lp2d({}, Eigen::Vector2d(-1, -1), box);
    CHECK(sol2.value == doctest::Approx(-3.0));
}

TEST_CASE("infeasible constraints are detected") {
    const Box2 box{{0, 0}, {1, 1}};
    const std::vector<HalfPlane> cons{{{1, 0}, 0.2}, {{-1, 0}, -0.5}};
    CHECK_FALSE(solve_lp2d(cons, Eigen::Vector2d(0, 1), box).feasible);
    CHECK_FALSE(feasible_with_margin(cons, box, 1e-9));
}

TEST_CASE("Seidel solver matches vertex enumeration") {
    Rng rng(17);
    const Box2 box{{0, 0}, {1, 1}};
    int feasible = 0;
    for (int t = 0; t < 2000; ++t) {
        std::vector<HalfPlane> cons;
        const auto k = rng.integer(0, 8);
        for (long long i = 0; i < k; ++i) cons.push_back(random_halfplane(rng));
        const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
        const Eigen::Vector2d obj(std::cos(angle), std::sin(angle));
        const LpSolution got = solve_lp2d(cons, obj, box, rng.bits());
        const LpSolution want = vertex_oracle(cons, obj, box);
        // Near-empty regions can go either way under tolerances.
        if (got.feasible != want.feasible) {
            CHECK(feasible_with_margin(cons, box, 1e-7) == false);
            continue;
        }
        if (!got.feasible) continue;
        ++feasible;
        CHECK(got.value == doctest::Approx(want.value).epsilon(1e-7).scale(1.0));
        CHECK(obj.dot(got.point) == doctest::Approx(got.value).epsilon(1e-9).scale(1.0));
        for (const auto& h : cons) CHECK(h.slack(got.point) >= -1e-7);
    }
    CHECK(feasible > 500);
}

TEST_CASE("margin feasibility") {
    const Box2 box{{0, 0}, {1, 1}};
    const std::vector<HalfPlane> thin{{{1, 0}, 0.5}, {{-1, 0}, -0.5 + 1e-12}};
    CHECK_FALSE(feasible_with_margin(thin, box, 1e-9));
    const std::vector<HalfPlane> wide{{{1, 0}, 0.5}, {{-1, 0}, -0.4}};
    CHECK(feasible_with_margin(wide, box, 1e-9));
}

TEST_CASE("clipped polygon area and centroid") {
    const Box2 box{{0, 0}, {2, 2}};
    const auto square = clip_polygon(box, {});
    CHECK(polygon_area(square) == doctest::Approx(4.0));
    CHECK((polygon_centroid(square) - Eigen::Vector2d(1, 1)).norm() < 1e-12);

    // x + y <= 2 leaves the lower-left triangle.
    const std::vector<HalfPlane> cut{{{1, 1}, 2}};
    const auto tri = clip_polygon(box, cut);
    CHECK(tri.size() == 3);
    CHECK(polygon_area(tri) == doctest::Approx(2.0));
    CHECK((polygon_centroid(tri) - Eigen::Vector2d(2.0 / 3.0, 2.0 / 3.0)).norm() < 1e-12);
}

TEST_CASE("clipped area matches Monte Carlo") {
    Rng rng(23);
    const Box2 box{{0, 0}, {1, 1}};
    for (int t = 0; t < 20; ++t) {
        std::vector<HalfPlane> cons;
        for (int i = 0; i < 3; ++i) cons.push_back(random_halfplane(rng));
        const auto poly = clip_polygon(box, cons);
        const double area = poly.size() >= 3 ? polygon_area(poly) : 0.0;
        int inside = 0;
        const int n = 20000;
        for (int s = 0; s < n; ++s) {
            const Eigen::Vector2d p(rng.uniform(), rng.uniform());
            bool ok = true;
            for (const auto& h : cons) ok = ok && h.slack(p) >= 0.0;
            inside += ok ? 1 : 0;
        }
        const double est = static_cast<double>(inside) / n;
        CHECK(std::abs(est - area) < 5.0 * std::sqrt(0.25 / n) + 1e-3);
    }
}
