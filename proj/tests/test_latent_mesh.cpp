#include "otgeo/error.hpp"
#include "otgeo/latent_mesh.hpp"

#include <doctest.h>

#include <set>

using namespace otgeo;

TEST_CASE("grid side is the smallest m with m^2 >= alpha * n1")
{
    for (std::size_t n1 : {1, 2, 3, 10, 100, 333, 1000, 3000, 18000}) {
        for (double alpha : {0.5, 1.0, 2.0, 3.0, 4.0}) {
            std::size_t ref = 1;
            while (static_cast<double>(ref * ref) < alpha * static_cast<double>(n1)) ++ref;
            CHECK(grid_size_for(n1, alpha) == ref);
        }
    }
    CHECK(grid_size_for(1000, 3.0) == 55);
    CHECK(grid_size_for(1024, 1.0) == 32);
}

TEST_CASE("torus grid lies on the torus with outward normals")
{
    const LatentGrid g = generate_grid(LatentShape::Torus, 12, LatentParams{});
    CHECK(g.size() == 144);
    CHECK(g.periodic[0]);
    CHECK(g.periodic[1]);
    CHECK(g.weights.sum() == doctest::Approx(1.0).epsilon(1e-12));
    for (Eigen::Index k = 0; k < g.points.rows(); ++k) {
        const Vec3 p = g.points.row(k);
        const double rho = std::hypot(p.x(), p.y());
        CHECK(std::abs((rho - 2.0) * (rho - 2.0) + p.z() * p.z() - 1.0) < 1e-12);
        const Vec3 core(2.0 * p.x() / rho, 2.0 * p.y() / rho, 0.0);
        CHECK((p - core - Vec3(g.normals.row(k))).norm() < 1e-12);
    }
}

TEST_CASE("sphere grid avoids duplicated poles")
{
    const LatentGrid g = generate_grid(LatentShape::Sphere, 9, LatentParams{});
    std::set<std::tuple<long, long, long>> seen;
    for (Eigen::Index k = 0; k < g.points.rows(); ++k) {
        CHECK(std::abs(g.points.row(k).norm() - 1.0) < 1e-12);
        seen.insert({std::lround(g.points(k, 0) * 1e9), std::lround(g.points(k, 1) * 1e9), std::lround(g.points(k, 2) * 1e9)});
    }
    CHECK(seen.size() == 81);
}

TEST_CASE("hemisphere has a downward cap row and plane spans its extent")
{
    const LatentGrid h = generate_grid(LatentShape::Hemisphere, 6, LatentParams{});
    for (std::size_t j = 0; j < 6; ++j) {
        const auto k = static_cast<Eigen::Index>(5 * 6 + j);
        CHECK(h.points(k, 2) == 0.0);
        CHECK(h.normals(k, 2) == -1.0);
    }
    for (Eigen::Index k = 0; k < 30; ++k) CHECK(h.points(k, 2) > 0.0);

    LatentParams p;
    p.plane_extent = 2.5;
    const LatentGrid pl = generate_grid(LatentShape::Plane, 5, p);
    CHECK(pl.points.col(0).maxCoeff() == doctest::Approx(2.5));
    CHECK(pl.points.col(2).cwiseAbs().maxCoeff() == 0.0);
    CHECK_FALSE(pl.periodic[0]);
}

TEST_CASE("box fit maps the grid box onto the target box")
{
    LatentGrid g = generate_grid(LatentShape::Torus, 16, LatentParams{});
    BoundingBox target{Vec3(-1.0, 0.0, 2.0), Vec3(3.0, 1.0, 2.5)};
    fit_to_box(g, target);
    const BoundingBox b = bounding_box(g.points);
    CHECK((b.lo - target.lo).norm() < 1e-12);
    CHECK((b.hi - target.hi).norm() < 1e-12);
    for (Eigen::Index k = 0; k < g.normals.rows(); ++k) CHECK(std::abs(g.normals.row(k).norm() - 1.0) < 1e-12);
}

TEST_CASE("box fit onto a flat target keeps the flat axis scaled by the others")
{
    LatentGrid g = generate_grid(LatentShape::Torus, 16, LatentParams{});
    const BoundingBox before = bounding_box(g.points);
    BoundingBox target{Vec3(-1.0, -1.0, 0.0), Vec3(1.0, 1.0, 0.0)};
    const BoxFit fit = fit_to_box(g, target);
    CHECK(fit.scale.z() == doctest::Approx(0.5 * (fit.scale.x() + fit.scale.y())));
    CHECK(bounding_box(g.points).extent().z() == doctest::Approx(before.extent().z() * fit.scale.z()));
    CHECK(bounding_box(g.points).center().z() == doctest::Approx(0.0));
}

TEST_CASE("invalid shapes and parameters are rejected")
{
    CHECK_THROWS_AS(parse_latent_shape("klein"), Error);
    LatentParams p;
    p.torus_r = 3.0;
    CHECK_THROWS_AS(generate_grid(LatentShape::Torus, 4, p), Error);
    CHECK_THROWS_AS(generate_grid(LatentShape::Sphere, 1, LatentParams{}), Error);
}
